"""Reasoning elicitation and reasoning-infused embedding extraction.

Step 1 prompts the backend to produce a reasoning text for a query;
Step 2 injects it into a repetition or single-word prompt and pools
hidden states into the query embedding. Documents are always embedded
with the plain (reasoning-free) templates.

Queries are truncated to the query token limit before elicitation and
embedding; passages to the passage limit. The assembled prompt is never
re-truncated: if it exceeds the backend context, the backend error
propagates.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .backend import Backend, EmbedSpanRequest, PoolingMode
from .core import (
    Document,
    EmbeddingVector,
    GenConfig,
    Query,
    ReasoningSource,
    ReasoningText,
    ReasoningVariant,
    cosine,
)
from .errors import (
    DuplicateQueryIdError,
    EmptyReasoningError,
    InvalidConfigError,
    MissingReasoningError,
    ParseError,
    UnexpectedReasoningError,
)
from .prompts import (
    SubjectKind,
    assemble,
    echo_template,
    pr_template,
    reasoning_template,
    rite_echo_template,
    rite_pr_template,
)

logger = logging.getLogger(__name__)

_REASONING_TOKEN_CHOICES = (64, 128, 256)


class EmbedMethod(enum.Enum):
    ECHO = "echo"
    PR = "pr"
    RITE_ECHO = "rite-echo"
    RITE_PR = "rite-pr"

    @property
    def uses_reasoning(self) -> bool:
        return self in (EmbedMethod.RITE_ECHO, EmbedMethod.RITE_PR)

    @property
    def base(self) -> "EmbedMethod":
        """The reasoning-free method used for documents."""
        if self in (EmbedMethod.ECHO, EmbedMethod.RITE_ECHO):
            return EmbedMethod.ECHO
        return EmbedMethod.PR


class EmptyReasoningPolicy(enum.Enum):
    FALLBACK = "fallback"
    ERROR = "error"


@dataclass(frozen=True)
class PipelineConfig:
    reasoning_variant: ReasoningVariant = ReasoningVariant.P2
    reasoning_gen: GenConfig = field(default_factory=GenConfig)
    echo_pooling: PoolingMode = PoolingMode.MEAN_SPAN
    query_token_limit: int = 128
    passage_token_limit: int = 256
    empty_reasoning_policy: EmptyReasoningPolicy = EmptyReasoningPolicy.FALLBACK

    def __post_init__(self):
        if self.reasoning_gen.max_tokens not in _REASONING_TOKEN_CHOICES:
            raise InvalidConfigError(
                f"reasoning max_tokens must be one of {_REASONING_TOKEN_CHOICES}"
            )
        if self.query_token_limit < 1 or self.passage_token_limit < 1:
            raise InvalidConfigError("token limits must be at least 1")
        if self.echo_pooling is PoolingMode.LAST_TOKEN:
            raise InvalidConfigError("echo pooling must be a span-mean mode")


def gen_config_hash(cfg: GenConfig) -> str:
    """Stable short hash of decoding parameters, for cache keys."""
    canon = json.dumps(
        {
            "temperature": cfg.temperature,
            "frequency_penalty": cfg.frequency_penalty,
            "max_tokens": cfg.max_tokens,
            "n_choices": cfg.n_choices,
            "stop_sequences": list(cfg.stop_sequences),
        },
        sort_keys=True,
    )
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


class ReasoningCache:
    """Reasoning texts keyed by (query id, prompt variant, gen-config hash).

    Safe under concurrent insert; values are deterministic, so
    last-write-wins on identical keys is harmless. Optionally persisted
    as a JSON file so repeated runs skip generation.
    """

    def __init__(self, path: Path | str | None = None):
        self._lock = threading.Lock()
        self._data: dict[str, str] = {}
        self._path = Path(path) if path is not None else None
        if self._path is not None and self._path.exists():
            self._data = json.loads(self._path.read_text(encoding="utf-8"))

    @staticmethod
    def _key(query_id: str, variant: ReasoningVariant, cfg: GenConfig) -> str:
        return "\x1f".join([query_id, variant.value, gen_config_hash(cfg)])

    def get(self, query_id: str, variant: ReasoningVariant, cfg: GenConfig) -> str | None:
        with self._lock:
            return self._data.get(self._key(query_id, variant, cfg))

    def put(self, query_id: str, variant: ReasoningVariant, cfg: GenConfig, text: str) -> None:
        with self._lock:
            self._data[self._key(query_id, variant, cfg)] = text

    def save(self) -> None:
        if self._path is None:
            return
        payload = json.dumps(self._data, sort_keys=True, ensure_ascii=False)
        self._path.write_text(payload, encoding="utf-8")


def elicit_reasoning(
    query: Query,
    cfg: PipelineConfig,
    backend: Backend,
    cache: ReasoningCache | None = None,
) -> ReasoningText:
    """Generate a reasoning text for a query (Step 1).

    The query is truncated to the query token limit, bound into the
    configured elicitation prompt, and decoded with the reasoning
    GenConfig. An empty generation either raises (policy ERROR) or
    returns an empty-marker ReasoningText that downstream embedding
    treats as "no reasoning" (policy FALLBACK).
    """
    cached = cache.get(query.id, cfg.reasoning_variant, cfg.reasoning_gen) if cache else None
    if cached is not None:
        text = cached
    else:
        truncated = backend.truncate_to_tokens(query.text, cfg.query_token_limit)
        prompt = assemble(reasoning_template(cfg.reasoning_variant), truncated)
        text = backend.generate_text(prompt.text, cfg.reasoning_gen).strip()
        if cache is not None:
            cache.put(query.id, cfg.reasoning_variant, cfg.reasoning_gen, text)
    if not text:
        if cfg.empty_reasoning_policy is EmptyReasoningPolicy.ERROR:
            raise EmptyReasoningError(f"empty reasoning generated for query {query.id!r}")
        logger.warning("empty reasoning for query %s; falling back to base method", query.id)
    return ReasoningText(
        text=text,
        source=ReasoningSource.GENERATED,
        prompt_variant=cfg.reasoning_variant,
    )


def load_provided_reasoning(path: Path | str) -> dict[str, ReasoningText]:
    """Read externally supplied (oracle) reasoning texts from JSONL.

    One object per line with fields "qid" and "reasoning"; blank lines
    are skipped.
    """
    out: dict[str, ReasoningText] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line=lineno)
            try:
                qid, reasoning = obj["qid"], obj["reasoning"]
            except KeyError as exc:
                raise ParseError(f"missing field {exc.args[0]!r}", line=lineno) from exc
            if not isinstance(qid, str) or not isinstance(reasoning, str):
                raise ParseError("qid and reasoning must be strings", line=lineno)
            if qid in out:
                raise DuplicateQueryIdError(f"duplicate qid {qid!r} at line {lineno}")
            out[qid] = ReasoningText(text=reasoning, source=ReasoningSource.PROVIDED)
    return out


def _check_method_reasoning(
    method: EmbedMethod,
    reasoning: ReasoningText | None,
    cfg: PipelineConfig,
) -> EmbedMethod:
    """Validate the method/reasoning pairing; returns the effective method.

    Runs before any backend call. An empty reasoning under the FALLBACK
    policy degrades a RITE method to its base method.
    """
    if method.uses_reasoning:
        if reasoning is None:
            raise MissingReasoningError(f"{method.value} requires a reasoning text")
        if reasoning.is_empty:
            if cfg.empty_reasoning_policy is EmptyReasoningPolicy.ERROR:
                raise EmptyReasoningError("reasoning text is empty")
            logger.warning("empty reasoning; embedding with %s instead", method.base.value)
            return method.base
        return method
    if reasoning is not None:
        raise UnexpectedReasoningError(f"{method.value} does not take a reasoning text")
    return method


def embed_query(
    query: Query,
    method: EmbedMethod,
    reasoning: ReasoningText | None,
    cfg: PipelineConfig,
    backend: Backend,
) -> EmbeddingVector:
    """Embed a query with the chosen method (Step 2); un-normalized."""
    effective = _check_method_reasoning(method, reasoning, cfg)
    truncated = backend.truncate_to_tokens(query.text, cfg.query_token_limit)

    if effective is EmbedMethod.ECHO:
        prompt = assemble(echo_template(SubjectKind.QUERY), truncated)
    elif effective is EmbedMethod.RITE_ECHO:
        prompt = assemble(rite_echo_template(), truncated, reasoning.text)  # type: ignore[union-attr]
    elif effective is EmbedMethod.PR:
        prompt = assemble(pr_template(SubjectKind.QUERY), truncated)
    else:
        prompt = assemble(rite_pr_template(), truncated, reasoning.text)  # type: ignore[union-attr]

    if effective.base is EmbedMethod.ECHO:
        req = EmbedSpanRequest(
            text=prompt.text,
            span=prompt.second_subject_span,
            pooling=cfg.echo_pooling,
        )
    else:
        req = EmbedSpanRequest(text=prompt.text, span=None, pooling=PoolingMode.LAST_TOKEN)
    return backend.embed_span(req)


def embed_document(
    doc: Document,
    method: EmbedMethod,
    cfg: PipelineConfig,
    backend: Backend,
) -> EmbeddingVector:
    """Embed a document with the passage-kind template; never any reasoning."""
    if method.uses_reasoning:
        raise InvalidConfigError("documents are embedded without reasoning; use a base method")
    if not doc.text:
        raise InvalidConfigError(f"document {doc.id!r} has empty text")
    truncated = backend.truncate_to_tokens(doc.text, cfg.passage_token_limit)
    if method is EmbedMethod.ECHO:
        prompt = assemble(echo_template(SubjectKind.PASSAGE), truncated)
        req = EmbedSpanRequest(
            text=prompt.text,
            span=prompt.second_subject_span,
            pooling=cfg.echo_pooling,
        )
    else:
        prompt = assemble(pr_template(SubjectKind.PASSAGE), truncated)
        req = EmbedSpanRequest(text=prompt.text, span=None, pooling=PoolingMode.LAST_TOKEN)
    return backend.embed_span(req)


def score(query_vec: EmbeddingVector, doc_vec: EmbeddingVector) -> float:
    """Cosine similarity between a query and a document embedding."""
    return cosine(query_vec, doc_vec)


def run_jobs(fn, items, max_workers: int):
    """Run independent per-item jobs concurrently, preserving input order."""
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))
