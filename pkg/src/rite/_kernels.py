"""Hot numeric kernels: JIT-compiled with numba, pure-numpy fallback.

The two inner loops that dominate runtime are the causal-attention pass
of the toy model and the dense-index row scan. Both exist in two
implementations: a numba ``@njit`` kernel and a vectorized numpy one.

Selection: numba is used when importable unless the environment
variable ``RITE_NUMBA`` is set to ``0``/``false``/``off``/``no``, which
forces the numpy path. Both paths compute in float64 and agree to
~1e-13; ``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import math
import os

import numpy as np

_env = os.environ.get("RITE_NUMBA", "").strip().lower()
_FORCED_OFF = _env in {"0", "false", "off", "no"}

try:
    if _FORCED_OFF:
        raise ImportError("numba disabled via RITE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def causal_attention_numpy(q, k, v):
    """Multi-head causal attention over [n_heads, seq, d_head] float64.

    Returns (context, probs) where probs[h, i, :i+1] are the softmax
    weights of position i and zero beyond it.
    """
    n_heads, seq, d_head = q.shape
    scale = 1.0 / math.sqrt(d_head)
    scores = np.matmul(q, k.transpose(0, 2, 1)) * scale
    mask = np.triu(np.ones((seq, seq), dtype=bool), k=1)
    scores = np.where(mask[None, :, :], -np.inf, scores)
    scores -= scores.max(axis=-1, keepdims=True)
    expw = np.exp(scores)
    probs = expw / expw.sum(axis=-1, keepdims=True)
    ctx = np.matmul(probs, v)
    return ctx, probs


def dot_scores_numpy(matrix, query):
    """Row-wise dot products of a float32 matrix against a float64 query."""
    return matrix.astype(np.float64) @ query


if HAS_NUMBA:

    @njit(cache=True)
    def causal_attention_jit(q, k, v):  # pragma: no cover - numba path
        n_heads, seq, d_head = q.shape
        scale = 1.0 / math.sqrt(d_head)
        ctx = np.empty((n_heads, seq, d_head))
        probs = np.zeros((n_heads, seq, seq))
        for h in range(n_heads):
            for i in range(seq):
                row = np.empty(i + 1)
                m = -1e300
                for j in range(i + 1):
                    s = 0.0
                    for d in range(d_head):
                        s += q[h, i, d] * k[h, j, d]
                    s *= scale
                    row[j] = s
                    if s > m:
                        m = s
                z = 0.0
                for j in range(i + 1):
                    row[j] = math.exp(row[j] - m)
                    z += row[j]
                for j in range(i + 1):
                    probs[h, i, j] = row[j] / z
                for d in range(d_head):
                    acc = 0.0
                    for j in range(i + 1):
                        acc += probs[h, i, j] * v[h, j, d]
                    ctx[h, i, d] = acc
        return ctx, probs

    # Serial on purpose: thread fan-out costs more than the scan below
    # ~100k rows, and corpus shards can be searched concurrently and
    # merged (merge_results) when row counts warrant it.
    @njit(cache=True)
    def dot_scores_jit(matrix, query):  # pragma: no cover - numba path
        n, d = matrix.shape
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += matrix[i, j] * query[j]
            out[i] = acc
        return out

    causal_attention = causal_attention_jit
    dot_scores = dot_scores_jit
else:
    causal_attention = causal_attention_numpy
    dot_scores = dot_scores_numpy
