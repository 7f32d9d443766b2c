"""Relevance-judged evaluation: nDCG at a rank cutoff plus run comparison.

Conventions, pinned here because graded-judgment benchmarks leave them
open: gain is the raw relevance (linear DCG, not 2^rel - 1); unjudged
retrieved documents score gain 0; queries with no relevant documents
are excluded from the mean and surfaced in ``skipped_queries``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import Qrels, RetrievalRun
from .errors import KMismatchError, NegativeRelevanceError, ParseError


@dataclass(frozen=True)
class EvalReport:
    k: int
    per_query: dict[str, float]
    mean: float
    skipped_queries: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "mean": self.mean,
            "per_query": dict(sorted(self.per_query.items())),
            "skipped": sorted(self.skipped_queries),
        }


def load_qrels(path) -> Qrels:
    """Parse a TSV of ``query_id<TAB>doc_id<TAB>relevance`` lines.

    Blank lines are skipped; a repeated (query, doc) pair keeps the
    last value (mapping semantics).
    """
    judgments: dict[str, dict[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.rstrip("\n").rstrip("\r")
            if not stripped.strip():
                continue
            parts = stripped.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    f"expected 3 tab-separated fields, got {len(parts)}", line=lineno
                )
            qid, did, rel_text = parts
            try:
                rel = int(rel_text)
            except ValueError as exc:
                raise ParseError(f"relevance {rel_text!r} is not an integer", line=lineno) from exc
            if rel < 0:
                raise NegativeRelevanceError(
                    f"line {lineno}: negative relevance {rel} for ({qid!r}, {did!r})"
                )
            judgments.setdefault(qid, {})[did] = rel
    return Qrels(judgments=judgments)


def dcg_at_k(gains: list[int] | list[float], k: int) -> float:
    """Discounted cumulative gain: sum of gains[i] / log2(i + 1), 1-indexed."""
    if k < 1:
        raise KMismatchError("k must be at least 1")
    return sum(g / math.log2(i + 1) for i, g in enumerate(gains[:k], start=1))


def ndcg_at_k(run: RetrievalRun, qrels: Qrels, k: int = 10) -> EvalReport:
    """Per-query and mean nDCG@k of a run against judgments.

    Queries with an ideal DCG of zero (no relevant documents, or never
    judged) are recorded as skipped and excluded from the mean. A query
    judged relevant but missing from the run scores 0 and is included.
    """
    if k < 1:
        raise KMismatchError("k must be at least 1")
    per_query: dict[str, float] = {}
    skipped: list[str] = []
    query_ids = sorted(set(run.rankings) | set(qrels.judgments))
    for qid in query_ids:
        judged = qrels.judgments.get(qid, {})
        ideal_gains = sorted(judged.values(), reverse=True)
        idcg = dcg_at_k(ideal_gains, k)
        if idcg == 0.0:
            skipped.append(qid)
            continue
        ranked = run.rankings.get(qid, [])
        gains = [judged.get(sd.doc_id, 0) for sd in ranked]
        per_query[qid] = dcg_at_k(gains, k) / idcg
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return EvalReport(k=k, per_query=per_query, mean=mean, skipped_queries=tuple(skipped))


@dataclass(frozen=True)
class RunComparison:
    k: int
    means: dict[str, float]
    deltas: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"k": self.k, "means": self.means, "deltas": self.deltas}


def compare_runs(reports: list[tuple[str, EvalReport]]) -> RunComparison:
    """Mean nDCG per named report plus pairwise deltas (later - earlier)."""
    if not reports:
        raise KMismatchError("no reports to compare")
    k = reports[0][1].k
    if any(rep.k != k for _, rep in reports):
        raise KMismatchError("reports computed at different cutoffs")
    means = {name: rep.mean for name, rep in reports}
    if len(means) != len(reports):
        raise KMismatchError("report names must be unique")
    deltas: dict[str, float] = {}
    for i, (name_a, rep_a) in enumerate(reports):
        for name_b, rep_b in reports[i + 1:]:
            deltas[f"{name_b}-{name_a}"] = rep_b.mean - rep_a.mean
    return RunComparison(k=k, means=means, deltas=deltas)


def render_comparison(cmp: RunComparison) -> str:
    """Aligned plain-text table; values shown x100 for table parity."""
    lines = [f"{'run':<20} {'nDCG@' + str(cmp.k):>10}"]
    for name, mean in cmp.means.items():
        lines.append(f"{name:<20} {mean * 100:>10.2f}")
    if cmp.deltas:
        lines.append("")
        lines.append(f"{'delta':<20} {'x100':>10}")
        for name, delta in cmp.deltas.items():
            lines.append(f"{name:<20} {delta * 100:>+10.2f}")
    return "\n".join(lines)


def render_report(report: EvalReport) -> str:
    """Aligned per-query table for one report; values shown x100."""
    lines = [f"{'query':<24} {'nDCG@' + str(report.k):>10}"]
    for qid, value in sorted(report.per_query.items()):
        lines.append(f"{qid:<24} {value * 100:>10.2f}")
    lines.append(f"{'mean':<24} {report.mean * 100:>10.2f}")
    if report.skipped_queries:
        lines.append(f"skipped (no relevant docs): {', '.join(sorted(report.skipped_queries))}")
    return "\n".join(lines)
