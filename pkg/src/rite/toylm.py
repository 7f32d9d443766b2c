"""Deterministic seed-initialized byte-level decoder-only transformer.

This small model stands in for a real instruction-tuned LLM so the full
embedding/retrieval pipeline can be exercised and golden-tested without
any external weights. It verifies mechanism, not retrieval quality.

Architecture: learned absolute position embeddings, pre-norm blocks
(LN -> causal multi-head attention -> residual, LN -> ReLU feed-forward
-> residual), a final layer norm, and an output projection tied to the
token embedding.

Tokenization is byte-level: token id == byte value, plus BOS/EOS/PAD
specials, so one byte is exactly one token after the leading BOS.

Determinism: every weight is drawn from uniform(-0.05, 0.05) using a
splitmix64 stream seeded by the config seed and consumed in a fixed
order (token embedding, position embedding, then per layer Q, K, V, O,
FF1, FF2, LN1 gain/bias, LN2 gain/bias, then the final LN gain/bias,
each row-major). Weights are stored float32; the forward pass computes
in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import GenConfig
from .errors import (
    ContextOverflowError,
    InternalError,
    InvalidConfigError,
    UnsupportedTemperatureError,
)

BOS = 256
EOS = 257
PAD = 258

_LN_EPS = 1e-8


@dataclass(frozen=True)
class ToyLMConfig:
    vocab_size: int = 259
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_context: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 259:
            raise InvalidConfigError("vocab_size must cover 256 bytes plus BOS/EOS/PAD")
        if self.d_model % self.n_heads != 0:
            raise InvalidConfigError("d_model must be divisible by n_heads")
        if self.max_context < 2:
            raise InvalidConfigError("max_context must be at least 2")
        if min(self.d_model, self.n_layers, self.n_heads, self.d_ff) < 1:
            raise InvalidConfigError("model dimensions must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfigError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ff1: np.ndarray
    ff2: np.ndarray
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray


@dataclass(frozen=True)
class ToyLM:
    config: ToyLMConfig
    token_embedding: np.ndarray
    position_embedding: np.ndarray
    layers: tuple[LayerWeights, ...]
    final_ln_gain: np.ndarray
    final_ln_bias: np.ndarray


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)


def param_count(config: ToyLMConfig) -> int:
    """Closed-form number of scalar weights for a config."""
    d, ff = config.d_model, config.d_ff
    per_layer = 4 * d * d + 2 * d * ff + 4 * d
    return (
        config.vocab_size * d
        + config.max_context * d
        + config.n_layers * per_layer
        + 2 * d
    )


def _splitmix64_uniform(seed: int, count: int) -> np.ndarray:
    """``count`` uniform [0,1) doubles from a splitmix64 stream."""
    golden = np.uint64(0x9E3779B97F4A7C15)
    with np.errstate(over="ignore"):
        states = np.uint64(seed) + golden * np.arange(1, count + 1, dtype=np.uint64)
        z = states
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def init_from_seed(config: ToyLMConfig) -> ToyLM:
    """Build a model whose weights are fully determined by the config seed."""
    flat = (-0.05 + 0.1 * _splitmix64_uniform(config.seed, param_count(config)))
    return _model_from_flat(config, flat.astype(np.float32))


def _model_from_flat(config: ToyLMConfig, flat: np.ndarray) -> ToyLM:
    pos = 0

    def take(*shape: int) -> np.ndarray:
        nonlocal pos
        n = int(np.prod(shape))
        arr = flat[pos:pos + n].reshape(shape)
        arr.setflags(write=False)
        pos += n
        return arr

    d, ff = config.d_model, config.d_ff
    token_embedding = take(config.vocab_size, d)
    position_embedding = take(config.max_context, d)
    layers = []
    for _ in range(config.n_layers):
        layers.append(
            LayerWeights(
                wq=take(d, d),
                wk=take(d, d),
                wv=take(d, d),
                wo=take(d, d),
                ff1=take(d, ff),
                ff2=take(ff, d),
                ln1_gain=take(d),
                ln1_bias=take(d),
                ln2_gain=take(d),
                ln2_bias=take(d),
            )
        )
    final_ln_gain = take(d)
    final_ln_bias = take(d)
    if pos != flat.shape[0]:
        raise InternalError("weight stream not fully consumed")
    return ToyLM(
        config=config,
        token_embedding=token_embedding,
        position_embedding=position_embedding,
        layers=tuple(layers),
        final_ln_gain=final_ln_gain,
        final_ln_bias=final_ln_bias,
    )


def weight_arrays(model: ToyLM) -> list[np.ndarray]:
    """All weight tensors in initialization order."""
    arrays = [model.token_embedding, model.position_embedding]
    for layer in model.layers:
        arrays += [
            layer.wq, layer.wk, layer.wv, layer.wo,
            layer.ff1, layer.ff2,
            layer.ln1_gain, layer.ln1_bias, layer.ln2_gain, layer.ln2_bias,
        ]
    arrays += [model.final_ln_gain, model.final_ln_bias]
    return arrays


def weight_fingerprint(model: ToyLM) -> str:
    """SHA-256 over the raw bytes of all weights in initialization order."""
    import hashlib

    h = hashlib.sha256()
    for arr in weight_arrays(model):
        h.update(arr.tobytes())
    return h.hexdigest()


def save_weights(model: ToyLM, path) -> None:
    """Dump all weights as one flat row in the binary vector container."""
    from . import container

    flat = np.concatenate([a.reshape(-1) for a in weight_arrays(model)])
    container.write_matrix(path, ["toylm"], flat.reshape(1, -1), container.ROLE_WEIGHTS)


def load_weights(config: ToyLMConfig, path) -> ToyLM:
    """Rebuild a model from a weight dump; the config fixes the layout."""
    from . import container
    from .errors import FormatError

    _, matrix, role = container.read_matrix(path)
    if role != container.ROLE_WEIGHTS:
        raise FormatError(f"container holds role {role}, expected weights")
    expected = param_count(config)
    if matrix.size != expected:
        raise FormatError(
            f"weight dump has {matrix.size} values, config needs {expected}"
        )
    return _model_from_flat(config, matrix.reshape(-1).copy())


def byte_tokenize(text: str, max_context: int | None = None) -> TokenSequence:
    """BOS followed by one token per UTF-8 byte (token id == byte value)."""
    ids = (BOS,) + tuple(text.encode("utf-8"))
    if max_context is not None and len(ids) > max_context:
        raise ContextOverflowError(
            f"{len(ids)} tokens exceed context of {max_context}"
        )
    return TokenSequence(ids)


def byte_detokenize(tokens: TokenSequence) -> str:
    """Inverse of byte_tokenize; recovers the original text exactly."""
    ids = tokens.ids
    if ids and ids[0] == BOS:
        ids = ids[1:]
    if any(t > 255 for t in ids):
        raise InvalidConfigError("special token inside byte payload")
    return bytes(ids).decode("utf-8")


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    """Returns (output, normalized) where normalized is pre-gain/bias."""
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    normed = (x - mean) / np.sqrt(var + _LN_EPS)
    return normed * gain.astype(np.float64) + bias.astype(np.float64), normed


def forward_hidden(model: ToyLM, tokens: TokenSequence, trace: dict | None = None) -> np.ndarray:
    """Final-layer, post-final-layer-norm hidden states, one row per position.

    Strictly causal: row i depends only on tokens 0..i. Pass a dict as
    ``trace`` to capture per-layer attention probabilities (key
    "attention") and pre-gain layer-norm activations (key "ln_normed").
    """
    n = len(tokens)
    cfg = model.config
    if n < 1:
        raise InvalidConfigError("token sequence must be non-empty")
    if n > cfg.max_context:
        raise ContextOverflowError(f"{n} tokens exceed context of {cfg.max_context}")
    ids = np.asarray(tokens.ids, dtype=np.int64)
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise InvalidConfigError("token id outside vocabulary")

    x = (
        model.token_embedding[ids].astype(np.float64)
        + model.position_embedding[:n].astype(np.float64)
    )
    d_head = cfg.d_model // cfg.n_heads
    if trace is not None:
        trace.setdefault("attention", [])
        trace.setdefault("ln_normed", [])

    def split_heads(m: np.ndarray) -> np.ndarray:
        return m.reshape(n, cfg.n_heads, d_head).transpose(1, 0, 2)

    for layer in model.layers:
        a, normed1 = _layer_norm(x, layer.ln1_gain, layer.ln1_bias)
        q = split_heads(a @ layer.wq.astype(np.float64))
        k = split_heads(a @ layer.wk.astype(np.float64))
        v = split_heads(a @ layer.wv.astype(np.float64))
        ctx, probs = _kernels.causal_attention(
            np.ascontiguousarray(q), np.ascontiguousarray(k), np.ascontiguousarray(v)
        )
        attn_out = ctx.transpose(1, 0, 2).reshape(n, cfg.d_model) @ layer.wo.astype(np.float64)
        x = x + attn_out

        f, normed2 = _layer_norm(x, layer.ln2_gain, layer.ln2_bias)
        hidden_ff = np.maximum(f @ layer.ff1.astype(np.float64), 0.0)
        x = x + hidden_ff @ layer.ff2.astype(np.float64)

        if trace is not None:
            trace["attention"].append(probs)
            trace["ln_normed"] += [normed1, normed2]

    out, normed_f = _layer_norm(x, model.final_ln_gain, model.final_ln_bias)
    if trace is not None:
        trace["ln_normed"].append(normed_f)
    return out


class _DecodeState:
    """Incremental per-position decoding with cached attention keys/values.

    Feeding tokens one at a time reproduces forward_hidden's last row
    (same math, one position at a time), which keeps generation linear
    in sequence length per step instead of quadratic.
    """

    def __init__(self, model: ToyLM):
        cfg = model.config
        self.model = model
        self.pos = 0
        d_head = cfg.d_model // cfg.n_heads
        shape = (cfg.n_layers, cfg.n_heads, cfg.max_context, d_head)
        self.k_cache = np.empty(shape)
        self.v_cache = np.empty(shape)

    def feed(self, token_id: int) -> np.ndarray:
        """Advance one position; returns the final hidden state row."""
        model, cfg = self.model, self.model.config
        if self.pos >= cfg.max_context:
            raise ContextOverflowError(f"context of {cfg.max_context} is full")
        n_heads = cfg.n_heads
        d_head = cfg.d_model // n_heads
        scale = 1.0 / np.sqrt(d_head)

        x = (
            model.token_embedding[token_id].astype(np.float64)
            + model.position_embedding[self.pos].astype(np.float64)
        )
        for li, layer in enumerate(model.layers):
            a, _ = _layer_norm(x, layer.ln1_gain, layer.ln1_bias)
            q = (a @ layer.wq.astype(np.float64)).reshape(n_heads, d_head)
            k = (a @ layer.wk.astype(np.float64)).reshape(n_heads, d_head)
            v = (a @ layer.wv.astype(np.float64)).reshape(n_heads, d_head)
            self.k_cache[li, :, self.pos] = k
            self.v_cache[li, :, self.pos] = v
            keys = self.k_cache[li, :, : self.pos + 1]
            values = self.v_cache[li, :, : self.pos + 1]
            scores = np.einsum("hd,hjd->hj", q, keys) * scale
            scores -= scores.max(axis=-1, keepdims=True)
            expw = np.exp(scores)
            probs = expw / expw.sum(axis=-1, keepdims=True)
            ctx = np.einsum("hj,hjd->hd", probs, values).reshape(cfg.d_model)
            x = x + ctx @ layer.wo.astype(np.float64)
            f, _ = _layer_norm(x, layer.ln2_gain, layer.ln2_bias)
            x = x + np.maximum(f @ layer.ff1.astype(np.float64), 0.0) @ layer.ff2.astype(np.float64)
        out, _ = _layer_norm(x, model.final_ln_gain, model.final_ln_bias)
        self.pos += 1
        return out


def penalized_logits(logits: np.ndarray, counts: np.ndarray, penalty: float) -> np.ndarray:
    """Subtract penalty * generation-count from each token's logit."""
    return logits - penalty * counts


def greedy_pick(logits: np.ndarray) -> int:
    """Argmax with ties broken by lowest token id."""
    return int(np.argmax(logits))


def generate(model: ToyLM, prompt: TokenSequence, cfg: GenConfig) -> TokenSequence:
    """Greedy autoregressive decoding with a frequency penalty.

    At each step every token's logit is reduced by ``frequency_penalty``
    times the number of times it was generated earlier in this call
    (prompt tokens are not counted). Decoding stops at ``max_tokens``,
    at EOS (excluded from the output), at a stop sequence (output
    truncated before it), or when the context fills up. BOS and PAD are
    never generated. Only sampling-free decoding is supported; any
    temperature other than 0 is rejected.
    """
    if cfg.temperature != 0.0:
        raise UnsupportedTemperatureError(
            f"toy model only supports temperature 0, got {cfg.temperature}"
        )
    if cfg.n_choices != 1:
        raise InvalidConfigError("toy model generates exactly one choice")
    ctx_limit = model.config.max_context
    if len(prompt) < 1:
        raise InvalidConfigError("prompt must contain at least one token")
    if len(prompt) + 1 > ctx_limit:
        raise ContextOverflowError(
            f"prompt of {len(prompt)} tokens leaves no room to generate"
        )

    emb = model.token_embedding.astype(np.float64)
    counts = np.zeros(model.config.vocab_size, dtype=np.float64)
    stop_byte_seqs = [s.encode("utf-8") for s in cfg.stop_sequences if s]
    generated: list[int] = []

    state = _DecodeState(model)
    for token_id in prompt.ids:
        hidden_row = state.feed(token_id)
    total = len(prompt)

    for _ in range(cfg.max_tokens):
        logits = hidden_row @ emb.T
        logits[BOS] = -np.inf
        logits[PAD] = -np.inf
        pick = greedy_pick(penalized_logits(logits, counts, cfg.frequency_penalty))
        if pick == EOS:
            break
        generated.append(pick)
        counts[pick] += 1.0
        total += 1
        if stop_byte_seqs:
            buf = bytes(generated)
            cut = min(
                (idx for idx in (buf.find(s) for s in stop_byte_seqs) if idx >= 0),
                default=-1,
            )
            if cut >= 0:
                generated = generated[:cut]
                break
        if total >= ctx_limit:
            break
        hidden_row = state.feed(pick)
    return TokenSequence(tuple(generated))
