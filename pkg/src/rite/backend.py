"""Uniform language-model backend contract.

Backends provide text generation and span-addressed pooled hidden-state
embeddings. Two implementations ship here: an in-process deterministic
toy transformer and a remote client speaking the HTTP wire protocol of
the model server (POST /v1/generate, POST /v1/embed_span, GET /v1/info,
plus POST /v1/count_tokens).

Byte spans are mapped to token positions by the backend's own
tokenizer: a token is included when its byte range overlaps the
requested span by at least one byte.
"""

from __future__ import annotations

import abc
import enum
import threading
from dataclasses import dataclass

import httpx
import numpy as np

from . import toylm
from .core import EmbeddingVector, GenConfig
from .errors import (
    BackendUnavailableError,
    ContextOverflowError,
    EmptySpanCoverageError,
    InvalidConfigError,
    ProtocolError,
    UnsupportedTemperatureError,
)


class PoolingMode(enum.Enum):
    """Which last-layer hidden states form the embedding.

    MEAN_SPAN averages the states at the token positions overlapping the
    span; MEAN_SPAN_SHIFTED averages the states one position earlier
    (the state from which each span token is generated); LAST_TOKEN
    takes the state at the final token of the whole text.
    """

    MEAN_SPAN = "mean_span"
    MEAN_SPAN_SHIFTED = "mean_span_shifted"
    LAST_TOKEN = "last_token"


def _is_char_boundary(raw: bytes, idx: int) -> bool:
    if idx == 0 or idx == len(raw):
        return True
    return (raw[idx] & 0xC0) != 0x80


@dataclass(frozen=True)
class EmbedSpanRequest:
    text: str
    span: tuple[int, int] | None
    pooling: PoolingMode

    def __post_init__(self):
        if not self.text:
            raise InvalidConfigError("embed text must be non-empty")
        if self.span is None:
            if self.pooling is not PoolingMode.LAST_TOKEN:
                raise InvalidConfigError(f"{self.pooling.value} pooling requires a span")
            return
        start, end = self.span
        raw = self.text.encode("utf-8")
        if not (0 <= start < end <= len(raw)):
            raise InvalidConfigError(f"span [{start}, {end}) out of range or reversed")
        if not (_is_char_boundary(raw, start) and _is_char_boundary(raw, end)):
            raise InvalidConfigError("span offsets must fall on character boundaries")


@dataclass(frozen=True)
class BackendInfo:
    model_name: str
    embedding_dim: int
    max_context_tokens: int


class Backend(abc.ABC):
    """Generation plus span-addressed pooled embeddings."""

    max_in_flight: int = 4

    @abc.abstractmethod
    def generate_text(self, prompt: str, cfg: GenConfig) -> str:
        """Decode a continuation of ``prompt`` (prompt text excluded)."""

    @abc.abstractmethod
    def embed_span(self, req: EmbedSpanRequest) -> EmbeddingVector:
        """Pool last-layer hidden states per the request; un-normalized."""

    @abc.abstractmethod
    def info(self) -> BackendInfo:
        ...

    @abc.abstractmethod
    def count_tokens(self, text: str) -> int:
        """Content tokens (specials excluded) under the backend tokenizer."""

    def truncate_to_tokens(self, text: str, limit: int) -> str:
        """Longest prefix of ``text`` whose token count is <= ``limit``.

        Head-keeping truncation on character boundaries. The default
        implementation binary-searches prefix lengths via count_tokens,
        assuming token counts are monotone in prefix length.
        """
        if limit < 1:
            raise InvalidConfigError("token limit must be at least 1")
        if not text or self.count_tokens(text) <= limit:
            return text
        lo, hi = 0, len(text)
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.count_tokens(text[:mid]) <= limit:
                lo = mid
            else:
                hi = mid - 1
        return text[:lo]

    def _check_generate_args(self, prompt: str, cfg: GenConfig) -> None:
        if not prompt:
            raise InvalidConfigError("prompt must be non-empty")
        if cfg.temperature != 0.0:
            raise UnsupportedTemperatureError(
                f"only temperature 0 is supported, got {cfg.temperature}"
            )
        if cfg.n_choices != 1:
            raise InvalidConfigError("exactly one response choice is supported")


class ToyBackend(Backend):
    """In-process backend over the deterministic toy transformer.

    Byte-level tokenization makes the byte-span to token-position map
    exact: byte i of the text sits at token position i + 1 (BOS at 0).
    """

    def __init__(self, config: toylm.ToyLMConfig | None = None):
        self.config = config or toylm.ToyLMConfig()
        self.model = toylm.init_from_seed(self.config)

    def info(self) -> BackendInfo:
        return BackendInfo(
            model_name=f"toy-lm-seed{self.config.seed}",
            embedding_dim=self.config.d_model,
            max_context_tokens=self.config.max_context,
        )

    def count_tokens(self, text: str) -> int:
        return len(text.encode("utf-8"))

    def truncate_to_tokens(self, text: str, limit: int) -> str:
        if limit < 1:
            raise InvalidConfigError("token limit must be at least 1")
        raw = text.encode("utf-8")
        if len(raw) <= limit:
            return text
        # A prefix of valid UTF-8 can only be broken at its tail.
        return raw[:limit].decode("utf-8", errors="ignore")

    def generate_text(self, prompt: str, cfg: GenConfig) -> str:
        self._check_generate_args(prompt, cfg)
        tokens = toylm.byte_tokenize(prompt, self.config.max_context)
        if len(tokens) + cfg.max_tokens > self.config.max_context:
            raise ContextOverflowError(
                f"prompt of {len(tokens)} tokens plus {cfg.max_tokens} "
                f"generated exceeds context of {self.config.max_context}"
            )
        out = toylm.generate(self.model, tokens, cfg)
        return bytes(out.ids).decode("utf-8", errors="replace")

    def embed_span(self, req: EmbedSpanRequest) -> EmbeddingVector:
        tokens = toylm.byte_tokenize(req.text, self.config.max_context)
        hidden = toylm.forward_hidden(self.model, tokens)
        if req.pooling is PoolingMode.LAST_TOKEN:
            pooled = hidden[-1]
        else:
            start, end = req.span  # type: ignore[misc]
            positions = list(range(start + 1, end + 1))
            if req.pooling is PoolingMode.MEAN_SPAN_SHIFTED:
                positions = [p - 1 for p in positions if p - 1 >= 0]
            if not positions:
                raise EmptySpanCoverageError("no token positions cover the span")
            pooled = hidden[positions].mean(axis=0)
        return EmbeddingVector.of(pooled.astype(np.float32))


class RemoteBackend(Backend):
    """Client for the model-server wire protocol.

    In-flight requests are bounded by a semaphore (default 4); the
    underlying HTTP client is thread-safe, so per-query jobs may call
    this backend concurrently.
    """

    def __init__(
        self,
        base_url: str,
        client: httpx.Client | None = None,
        max_in_flight: int = 4,
        timeout: float = 60.0,
    ):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)
        self.max_in_flight = max_in_flight
        self._slots = threading.Semaphore(max_in_flight)
        self._info: BackendInfo | None = None

    def _request(self, method: str, path: str, json_body: dict | None = None) -> dict:
        url = self.base_url + path
        try:
            with self._slots:
                resp = self._client.request(method, url, json=json_body)
        except httpx.HTTPError as exc:
            raise BackendUnavailableError(f"{url}: {exc}") from exc
        if resp.status_code == 503:
            raise BackendUnavailableError(f"{url}: model not ready (503)")
        if resp.status_code == 413:
            raise ContextOverflowError(_detail(resp))
        if resp.status_code == 404:
            raise EmptySpanCoverageError(_detail(resp))
        if resp.status_code in (400, 422):
            raise InvalidConfigError(_detail(resp))
        if resp.status_code != 200:
            raise ProtocolError(f"{url}: unexpected status {resp.status_code}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{url}: response is not JSON") from exc
        if not isinstance(body, dict):
            raise ProtocolError(f"{url}: response is not a JSON object")
        return body

    def generate_text(self, prompt: str, cfg: GenConfig) -> str:
        self._check_generate_args(prompt, cfg)
        body = self._request(
            "POST",
            "/v1/generate",
            {
                "prompt": prompt,
                "max_tokens": cfg.max_tokens,
                "temperature": cfg.temperature,
                "frequency_penalty": cfg.frequency_penalty,
                "n": cfg.n_choices,
                "stop": list(cfg.stop_sequences),
            },
        )
        try:
            choices = body["choices"]
            text = choices[0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed generate response: {body!r}") from exc
        if not isinstance(text, str):
            raise ProtocolError("generate response text is not a string")
        return text

    def embed_span(self, req: EmbedSpanRequest) -> EmbeddingVector:
        payload: dict = {"text": req.text, "pooling": req.pooling.value}
        if req.span is not None:
            payload["span"] = {"start": req.span[0], "end": req.span[1]}
        body = self._request("POST", "/v1/embed_span", payload)
        try:
            values = body["embedding"]
            dim = int(body["dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed embed response: {body!r}") from exc
        if not isinstance(values, list) or len(values) != dim:
            raise ProtocolError("embedding length disagrees with declared dim")
        return EmbeddingVector.of(np.asarray(values, dtype=np.float32))

    def info(self) -> BackendInfo:
        if self._info is None:
            body = self._request("GET", "/v1/info")
            try:
                self._info = BackendInfo(
                    model_name=str(body["model"]),
                    embedding_dim=int(body["dim"]),
                    max_context_tokens=int(body["max_context"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"malformed info response: {body!r}") from exc
        return self._info

    def count_tokens(self, text: str) -> int:
        if not text:
            return 0
        body = self._request("POST", "/v1/count_tokens", {"text": text})
        try:
            return int(body["count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed count response: {body!r}") from exc


def _detail(resp: httpx.Response) -> str:
    try:
        body = resp.json()
        if isinstance(body, dict) and "detail" in body:
            return str(body["detail"])
    except ValueError:
        pass
    return f"status {resp.status_code}"
