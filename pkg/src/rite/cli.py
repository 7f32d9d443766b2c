"""Batch commands: reason, embed-corpus, retrieve, eval, run, sweep.

A run is described by one JSON config file plus flag overrides; the
RITE_BACKEND_URL environment variable overrides the remote backend URL.
Every command is deterministic under the toy backend with a fixed seed,
and output files are written atomically (temp file, then rename).

Exit codes: 0 success, 1 input error, 2 backend error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

from . import evaluation, index as index_mod, pipeline
from .backend import Backend, PoolingMode, RemoteBackend, ToyBackend
from .core import Document, GenConfig, Query, ReasoningText, RetrievalRun, ScoredDoc
from .errors import (
    BackendError,
    DuplicateIdError,
    DuplicateQueryIdError,
    InputError,
    InvalidConfigError,
    MissingReasoningError,
    ParseError,
    RiteError,
)
from .pipeline import EmbedMethod, EmptyReasoningPolicy, PipelineConfig, ReasoningCache
from .core import ReasoningVariant
from .toylm import ToyLMConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_BACKEND = 2
EXIT_INTERNAL = 3

EVAL_K = 10


@dataclass(frozen=True)
class RunConfig:
    backend_kind: str = "toy"
    backend_url: str | None = None
    seed: int = 0
    method: EmbedMethod = EmbedMethod.ECHO
    pipeline: PipelineConfig = PipelineConfig()
    corpus: Path | None = None
    queries: Path | None = None
    qrels: Path | None = None
    provided_reasoning: Path | None = None
    out_dir: Path = Path("out")
    top_k: int = 10

    def __post_init__(self):
        if self.backend_kind not in ("toy", "remote"):
            raise InvalidConfigError(f"unknown backend {self.backend_kind!r}")
        if self.backend_kind == "remote" and not self.backend_url:
            raise InvalidConfigError("remote backend requires a URL")
        if self.top_k < 1:
            raise InvalidConfigError("top_k must be at least 1")

    def semantic_dict(self) -> dict:
        """Config content that identifies a run, excluding file locations."""
        gen = self.pipeline.reasoning_gen
        return {
            "backend": self.backend_kind,
            "seed": self.seed,
            "method": self.method.value,
            "top_k": self.top_k,
            "pipeline": {
                "reasoning_variant": self.pipeline.reasoning_variant.value,
                "echo_pooling": self.pipeline.echo_pooling.value,
                "query_token_limit": self.pipeline.query_token_limit,
                "passage_token_limit": self.pipeline.passage_token_limit,
                "empty_reasoning_policy": self.pipeline.empty_reasoning_policy.value,
                "reasoning_gen": {
                    "temperature": gen.temperature,
                    "frequency_penalty": gen.frequency_penalty,
                    "max_tokens": gen.max_tokens,
                    "n_choices": gen.n_choices,
                    "stop_sequences": list(gen.stop_sequences),
                },
            },
            "oracle_reasoning": self.provided_reasoning is not None,
        }


def _pipeline_from_dict(obj: dict) -> PipelineConfig:
    gen_obj = obj.get("reasoning_gen", {})
    gen = GenConfig(
        temperature=float(gen_obj.get("temperature", 0.0)),
        frequency_penalty=float(gen_obj.get("frequency_penalty", 0.3)),
        max_tokens=int(gen_obj.get("max_tokens", 128)),
        n_choices=int(gen_obj.get("n_choices", 1)),
        stop_sequences=tuple(gen_obj.get("stop_sequences", ())),
    )
    return PipelineConfig(
        reasoning_variant=ReasoningVariant(obj.get("reasoning_variant", "P2")),
        reasoning_gen=gen,
        echo_pooling=PoolingMode(obj.get("echo_pooling", "mean_span")),
        query_token_limit=int(obj.get("query_token_limit", 128)),
        passage_token_limit=int(obj.get("passage_token_limit", 256)),
        empty_reasoning_policy=EmptyReasoningPolicy(
            obj.get("empty_reasoning_policy", "fallback")
        ),
    )


def load_run_config(path: Path | str, overrides: argparse.Namespace | None = None) -> RunConfig:
    """Read the JSON run config and apply flag/environment overrides."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ParseError("config must be a JSON object")

    def path_or_none(key: str) -> Path | None:
        value = obj.get(key)
        return Path(value) if value else None

    cfg = RunConfig(
        backend_kind=obj.get("backend", "toy"),
        backend_url=obj.get("backend_url"),
        seed=int(obj.get("seed", 0)),
        method=EmbedMethod(obj.get("method", "echo")),
        pipeline=_pipeline_from_dict(obj.get("pipeline", {})),
        corpus=path_or_none("corpus"),
        queries=path_or_none("queries"),
        qrels=path_or_none("qrels"),
        provided_reasoning=path_or_none("provided_reasoning"),
        out_dir=Path(obj.get("out_dir", "out")),
        top_k=int(obj.get("top_k", 10)),
    )

    if overrides is not None:
        updates: dict = {}
        if getattr(overrides, "method", None):
            updates["method"] = EmbedMethod(overrides.method)
        if getattr(overrides, "backend", None):
            updates["backend_kind"] = overrides.backend
        if getattr(overrides, "backend_url", None):
            updates["backend_url"] = overrides.backend_url
        if getattr(overrides, "seed", None) is not None:
            updates["seed"] = overrides.seed
        if getattr(overrides, "out_dir", None):
            updates["out_dir"] = Path(overrides.out_dir)
        if getattr(overrides, "top_k", None) is not None:
            updates["top_k"] = overrides.top_k
        if getattr(overrides, "max_tokens", None) is not None:
            gen = replace(cfg.pipeline.reasoning_gen, max_tokens=overrides.max_tokens)
            updates["pipeline"] = replace(cfg.pipeline, reasoning_gen=gen)
        if updates:
            cfg = replace(cfg, **updates)

    env_url = os.environ.get("RITE_BACKEND_URL")
    if env_url:
        cfg = replace(cfg, backend_url=env_url)
    return cfg


def make_backend(cfg: RunConfig) -> Backend:
    if cfg.backend_kind == "toy":
        return ToyBackend(ToyLMConfig(seed=cfg.seed))
    return RemoteBackend(cfg.backend_url)  # type: ignore[arg-type]


# --- data files -----------------------------------------------------------

def _load_jsonl_records(path: Path, duplicate_error) -> list[tuple[str, str]]:
    """JSONL of {"id": str, "text": str}; unique ids, order preserved."""
    records: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
                raise ParseError(f"{path}: expected an object with id and text", line=lineno)
            item_id, text = obj["id"], obj["text"]
            if not isinstance(item_id, str) or not isinstance(text, str):
                raise ParseError(f"{path}: id and text must be strings", line=lineno)
            if item_id in seen:
                raise duplicate_error(f"{path}: duplicate id {item_id!r} at line {lineno}")
            seen.add(item_id)
            records.append((item_id, text))
    return records


def load_corpus(path: Path) -> list[Document]:
    return [Document(i, t) for i, t in _load_jsonl_records(path, DuplicateIdError)]


def load_queries(path: Path) -> list[Query]:
    return [Query(i, t) for i, t in _load_jsonl_records(path, DuplicateQueryIdError)]


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise InvalidConfigError(f"config is missing the {what} path")
    if not path.exists():
        raise InputError(f"{what} file not found: {path}")
    return path


# --- atomic output ---------------------------------------------------------

def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --- stages ---------------------------------------------------------------

def _collect_failures(fn, items, keys, max_workers: int):
    """Run fn over items; report every failed key before aborting."""
    failures: list[tuple[str, Exception]] = []

    def guarded(pair):
        key, item = pair
        try:
            return fn(item)
        except Exception as exc:  # noqa: BLE001 - reported per item below
            failures.append((key, exc))
            return None

    results = pipeline.run_jobs(guarded, list(zip(keys, items)), max_workers)
    if failures:
        for key, exc in failures:
            logger.error("item %s failed: %s", key, exc)
        names = ", ".join(key for key, _ in failures)
        first = failures[0][1]
        raise BackendError(f"{len(failures)} item(s) failed ({names}): {first}") from first
    return results


def query_reasonings(
    cfg: RunConfig,
    queries: list[Query],
    backend: Backend,
    cache: ReasoningCache,
) -> dict[str, ReasoningText | None]:
    """Reasoning per query id: none for base methods, loaded in oracle
    mode, otherwise elicited through the cache."""
    if not cfg.method.uses_reasoning:
        return {q.id: None for q in queries}
    if cfg.provided_reasoning is not None:
        provided = pipeline.load_provided_reasoning(
            _require(cfg.provided_reasoning, "provided_reasoning")
        )
        missing = [q.id for q in queries if q.id not in provided]
        if missing:
            raise MissingReasoningError(
                f"provided reasoning lacks queries: {', '.join(missing)}"
            )
        return {q.id: provided[q.id] for q in queries}

    texts = _collect_failures(
        lambda q: pipeline.elicit_reasoning(q, cfg.pipeline, backend, cache),
        queries,
        [q.id for q in queries],
        backend.max_in_flight,
    )
    return {q.id: r for q, r in zip(queries, texts)}


def cmd_reason(cfg: RunConfig, backend: Backend | None = None) -> Path:
    """Write one reasoning line per query; idempotent given a warm cache."""
    queries = load_queries(_require(cfg.queries, "queries"))
    backend = backend or make_backend(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    cache = ReasoningCache(cfg.out_dir / "reasoning_cache.json")
    if not cfg.method.uses_reasoning:
        raise InvalidConfigError(f"method {cfg.method.value} does not use reasoning")
    reasonings = query_reasonings(cfg, queries, backend, cache)
    cache.save()
    lines = [
        json.dumps({"qid": q.id, "reasoning": reasonings[q.id].text}, ensure_ascii=False)
        for q in queries
    ]
    out_path = cfg.out_dir / "reasoning.jsonl"
    _atomic_write_text(out_path, "\n".join(lines) + "\n")
    return out_path


def cmd_embed_corpus(cfg: RunConfig, backend: Backend | None = None) -> Path:
    """Embed the corpus with the method's base (reasoning-free) variant
    and persist the index."""
    docs = load_corpus(_require(cfg.corpus, "corpus"))
    backend = backend or make_backend(cfg)
    base = cfg.method.base
    vectors = _collect_failures(
        lambda d: pipeline.embed_document(d, base, cfg.pipeline, backend),
        docs,
        [d.id for d in docs],
        backend.max_in_flight,
    )
    vec_index = index_mod.build(list(zip([d.id for d in docs], vectors)))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = cfg.out_dir / "index.ritevec"
    fd, tmp = tempfile.mkstemp(dir=cfg.out_dir, prefix="index.")
    os.close(fd)
    try:
        index_mod.save(vec_index, tmp)
        os.replace(tmp, out_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return out_path


def _embed_queries(
    cfg: RunConfig,
    queries: list[Query],
    backend: Backend,
    cache: ReasoningCache,
):
    reasonings = query_reasonings(cfg, queries, backend, cache)
    return _collect_failures(
        lambda q: pipeline.embed_query(q, cfg.method, reasonings[q.id], cfg.pipeline, backend),
        queries,
        [q.id for q in queries],
        backend.max_in_flight,
    )


def write_trec_run(path: Path, run: RetrievalRun, tag: str) -> None:
    lines = []
    for qid, ranked in run.rankings.items():
        for rank, sd in enumerate(ranked, start=1):
            lines.append(f"{qid} Q0 {sd.doc_id} {rank} {sd.score:.6f} {tag}")
    _atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_trec_run(path: Path) -> RetrievalRun:
    per_query: dict[str, list[tuple[int, ScoredDoc]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ParseError(f"{path}: expected 6 columns, got {len(parts)}", line=lineno)
            qid, _q0, did, rank_s, score_s, _tag = parts
            try:
                rank, score = int(rank_s), float(score_s)
            except ValueError as exc:
                raise ParseError(f"{path}: bad rank or score", line=lineno) from exc
            per_query.setdefault(qid, []).append((rank, ScoredDoc(did, score)))
    rankings = {
        qid: [sd for _, sd in sorted(entries, key=lambda e: e[0])]
        for qid, entries in per_query.items()
    }
    return RetrievalRun(rankings=rankings)


def cmd_retrieve(cfg: RunConfig, backend: Backend | None = None) -> Path:
    """Embed queries, search the persisted index, write a TREC run file."""
    queries = load_queries(_require(cfg.queries, "queries"))
    index_path = cfg.out_dir / "index.ritevec"
    if not index_path.exists():
        raise InputError(f"index not found: {index_path} (run embed-corpus first)")
    vec_index = index_mod.load(index_path)
    backend = backend or make_backend(cfg)
    cache = ReasoningCache(cfg.out_dir / "reasoning_cache.json")
    vectors = _embed_queries(cfg, queries, backend, cache)
    cache.save()
    rankings = {
        q.id: index_mod.search(vec_index, vec, cfg.top_k)
        for q, vec in zip(queries, vectors)
    }
    run = RetrievalRun(rankings=rankings)
    out_path = cfg.out_dir / "run.trec"
    write_trec_run(out_path, run, cfg.method.value)
    return out_path


def cmd_eval(run_path: Path, qrels_path: Path, k: int, out_dir: Path | None = None):
    """Score a run file against qrels; returns the report."""
    if not Path(run_path).exists():
        raise InputError(f"run file not found: {run_path}")
    if not Path(qrels_path).exists():
        raise InputError(f"qrels file not found: {qrels_path}")
    run = read_trec_run(Path(run_path))
    qrels = evaluation.load_qrels(qrels_path)
    report = evaluation.ndcg_at_k(run, qrels, k=k)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _atomic_write_text(
            out_dir / "eval.json",
            json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n",
        )
        _atomic_write_text(out_dir / "eval.txt", evaluation.render_report(report) + "\n")
    return report


def cmd_run(cfg: RunConfig, backend: Backend | None = None) -> Path:
    """Full chain: reason -> embed corpus -> embed queries -> retrieve ->
    eval, then a manifest with config hash and artifact checksums."""
    backend = backend or make_backend(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    artifacts: dict[str, Path] = {}
    if cfg.method.uses_reasoning and cfg.provided_reasoning is None:
        artifacts["reasoning.jsonl"] = cmd_reason(cfg, backend)
    artifacts["index.ritevec"] = cmd_embed_corpus(cfg, backend)
    artifacts["run.trec"] = cmd_retrieve(cfg, backend)
    return _finish_run(cfg, backend, artifacts)


def _finish_run(cfg: RunConfig, backend: Backend, artifacts: dict[str, Path]) -> Path:
    if cfg.qrels is not None:
        # retrieval depth (top_k) is configurable; the reported metric is
        # always nDCG@10
        cmd_eval(artifacts["run.trec"], _require(cfg.qrels, "qrels"), EVAL_K, cfg.out_dir)
        artifacts["eval.json"] = cfg.out_dir / "eval.json"

    info = backend.info()
    config_canon = json.dumps(cfg.semantic_dict(), sort_keys=True, separators=(",", ":"))
    inputs: dict[str, str] = {}
    for name, path in (("corpus", cfg.corpus), ("queries", cfg.queries), ("qrels", cfg.qrels)):
        if path is not None:
            inputs[name] = _sha256_file(path)
    manifest = {
        "config_hash": hashlib.sha256(config_canon.encode("utf-8")).hexdigest(),
        "config": cfg.semantic_dict(),
        "backend": {
            "model_name": info.model_name,
            "embedding_dim": info.embedding_dim,
            "max_context_tokens": info.max_context_tokens,
        },
        "inputs": inputs,
        "artifacts": {name: _sha256_file(path) for name, path in sorted(artifacts.items())},
    }
    manifest_path = cfg.out_dir / "manifest.json"
    _atomic_write_text(
        manifest_path, json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    return manifest_path


def cmd_sweep(cfg: RunConfig, backend: Backend | None = None) -> Path:
    """Three full runs at reasoning max_tokens 64/128/256; no winner picked."""
    if not cfg.method.uses_reasoning:
        raise InvalidConfigError("sweep requires a reasoning-infused method")
    if cfg.qrels is None:
        raise InvalidConfigError("sweep requires qrels to compare runs")
    backend = backend or make_backend(cfg)
    reports = []
    for mt in (64, 128, 256):
        name = f"mt{mt}"
        gen = replace(cfg.pipeline.reasoning_gen, max_tokens=mt)
        sub = replace(
            cfg,
            pipeline=replace(cfg.pipeline, reasoning_gen=gen),
            out_dir=cfg.out_dir / name,
        )
        cmd_run(sub, backend)
        report_obj = json.loads((sub.out_dir / "eval.json").read_text(encoding="utf-8"))
        reports.append(
            (
                name,
                evaluation.EvalReport(
                    k=report_obj["k"],
                    per_query=report_obj["per_query"],
                    mean=report_obj["mean"],
                    skipped_queries=tuple(report_obj["skipped"]),
                ),
            )
        )
    comparison = evaluation.compare_runs(reports)
    _atomic_write_text(
        cfg.out_dir / "sweep.json",
        json.dumps(comparison.to_dict(), sort_keys=True, indent=2) + "\n",
    )
    table = evaluation.render_comparison(comparison)
    _atomic_write_text(cfg.out_dir / "sweep.txt", table + "\n")
    print(table)
    return cfg.out_dir / "sweep.json"


# --- argument parsing ------------------------------------------------------

def _add_config_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="run config JSON file")
    sub.add_argument("--method", choices=[m.value for m in EmbedMethod])
    sub.add_argument("--backend", choices=["toy", "remote"])
    sub.add_argument("--backend-url", dest="backend_url")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out-dir", dest="out_dir")
    sub.add_argument("--top-k", dest="top_k", type=int)
    sub.add_argument("--max-tokens", dest="max_tokens", type=int,
                     help="reasoning generation length (64, 128, or 256)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rite",
        description="Reasoning-infused text embeddings for zero-shot dense retrieval",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, text in [
        ("reason", "generate reasoning texts for all queries"),
        ("embed-corpus", "embed the corpus and persist the vector index"),
        ("retrieve", "embed queries and write a TREC run file"),
        ("run", "full pipeline: reason, embed, retrieve, evaluate"),
        ("sweep", "run at reasoning lengths 64/128/256 and compare"),
    ]:
        sub = subs.add_parser(name, help=text)
        _add_config_args(sub)

    ev = subs.add_parser("eval", help="score a run file against qrels")
    ev.add_argument("--run", required=True, dest="run_file")
    ev.add_argument("--qrels", required=True)
    ev.add_argument("--k", type=int, default=10)
    ev.add_argument("--out-dir", dest="out_dir")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "eval":
            out_dir = Path(args.out_dir) if args.out_dir else None
            report = cmd_eval(Path(args.run_file), Path(args.qrels), args.k, out_dir)
            print(evaluation.render_report(report))
            return EXIT_OK

        cfg = load_run_config(args.config, args)
        if args.command == "reason":
            print(cmd_reason(cfg))
        elif args.command == "embed-corpus":
            print(cmd_embed_corpus(cfg))
        elif args.command == "retrieve":
            print(cmd_retrieve(cfg))
        elif args.command == "run":
            print(cmd_run(cfg))
        elif args.command == "sweep":
            print(cmd_sweep(cfg))
        return EXIT_OK
    except BackendError as exc:
        logger.error("backend failure: %s", exc)
        return EXIT_BACKEND
    except (InputError, OSError) as exc:
        logger.error("input error: %s", exc)
        return EXIT_INPUT
    except RiteError as exc:
        logger.error("internal error: %s", exc)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code mapping
        logger.exception("unexpected failure: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
