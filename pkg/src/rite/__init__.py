"""Reasoning-infused text embeddings for zero-shot dense retrieval.

Elicits a reasoning text from a query, injects it into repetition or
single-word embedding prompts, pools last-layer hidden states into
dense vectors, and retrieves documents by exact cosine top-k, with an
nDCG@10 evaluation harness and a deterministic toy language model for
desk-scale verification.
"""

from .backend import Backend, BackendInfo, EmbedSpanRequest, PoolingMode, RemoteBackend, ToyBackend
from .core import (
    Document,
    EmbeddingVector,
    GenConfig,
    Qrels,
    Query,
    ReasoningSource,
    ReasoningText,
    ReasoningVariant,
    RetrievalRun,
    ScoredDoc,
    cosine,
    l2_normalize,
)
from .evaluation import EvalReport, compare_runs, dcg_at_k, load_qrels, ndcg_at_k
from .index import VectorIndex, build, load, merge_results, save, search
from .pipeline import (
    EmbedMethod,
    EmptyReasoningPolicy,
    PipelineConfig,
    ReasoningCache,
    elicit_reasoning,
    embed_document,
    embed_query,
    load_provided_reasoning,
    score,
)
from .prompts import (
    AssembledPrompt,
    PromptTemplate,
    SubjectKind,
    assemble,
    echo_template,
    pr_template,
    reasoning_template,
    rite_echo_template,
    rite_pr_template,
)
from .toylm import ToyLM, ToyLMConfig, byte_detokenize, byte_tokenize, forward_hidden, generate, init_from_seed

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "BackendInfo",
    "EmbedSpanRequest",
    "PoolingMode",
    "RemoteBackend",
    "ToyBackend",
    "Document",
    "EmbeddingVector",
    "GenConfig",
    "Qrels",
    "Query",
    "ReasoningSource",
    "ReasoningText",
    "ReasoningVariant",
    "RetrievalRun",
    "ScoredDoc",
    "cosine",
    "l2_normalize",
    "EvalReport",
    "compare_runs",
    "dcg_at_k",
    "load_qrels",
    "ndcg_at_k",
    "VectorIndex",
    "build",
    "load",
    "merge_results",
    "save",
    "search",
    "EmbedMethod",
    "EmptyReasoningPolicy",
    "PipelineConfig",
    "ReasoningCache",
    "elicit_reasoning",
    "embed_document",
    "embed_query",
    "load_provided_reasoning",
    "score",
    "AssembledPrompt",
    "PromptTemplate",
    "SubjectKind",
    "assemble",
    "echo_template",
    "pr_template",
    "reasoning_template",
    "rite_echo_template",
    "rite_pr_template",
    "ToyLM",
    "ToyLMConfig",
    "byte_detokenize",
    "byte_tokenize",
    "forward_hidden",
    "generate",
    "init_from_seed",
]
