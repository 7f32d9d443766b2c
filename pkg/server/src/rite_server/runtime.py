"""Model runtime: greedy decoding and span-addressed hidden-state pooling.

Wraps a Hugging Face causal LM plus its fast tokenizer. All pooling is
performed here, server-side, so clients never see tokenizer internals:
byte spans arrive on the wire, get converted to character offsets, and
map to token positions through the tokenizer's offset mapping with a
>=1-unit overlap rule. Hidden states are the last layer, post final
layer norm. Forward passes are serialized behind a lock (single
accelerator assumption); request handling above stays concurrent.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import torch


class RuntimeError_(Exception):
    """Base for runtime failures that map to HTTP error codes."""


class SpanError(RuntimeError_):
    """Bad span: reversed, out of range, or off a character boundary."""


class EmptyCoverageError(RuntimeError_):
    """Span maps to no token positions."""


class OverflowError_(RuntimeError_):
    """Input does not fit the model context."""


class UnsupportedError(RuntimeError_):
    """Decoding parameters outside the greedy contract."""


@dataclass
class ServerConfig:
    model: str
    device: str = "cpu"
    dtype: str = "float32"
    max_context: int | None = None
    stop_scan_specials: bool = True
    extra_load_kwargs: dict = field(default_factory=dict)


POOLING_MODES = ("mean_span", "mean_span_shifted", "last_token")


def pick_next(logits: np.ndarray, counts: np.ndarray, penalty: float) -> int:
    """Greedy pick under a frequency penalty.

    Each token's logit is reduced by penalty times the number of times
    it was generated earlier in this call; ties resolve to the lowest
    token id.
    """
    return int(np.argmax(logits - penalty * counts))


class ModelRuntime:
    def __init__(self, config: ServerConfig):
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.model)
        if not self.tokenizer.is_fast:
            raise ValueError("a fast tokenizer with offset mapping is required")
        dtype = getattr(torch, config.dtype)
        self.model = AutoModelForCausalLM.from_pretrained(
            config.model, dtype=dtype, **config.extra_load_kwargs
        )
        self.model.to(config.device)
        self.model.eval()
        self._forward_lock = threading.Lock()

        model_limit = getattr(self.model.config, "max_position_embeddings", None)
        if model_limit is None:
            model_limit = getattr(self.model.config, "n_positions", 4096)
        self.max_context = min(config.max_context or model_limit, model_limit)
        self.dim = int(self.model.config.hidden_size)

    # --- info ---------------------------------------------------------------

    def info(self) -> dict:
        return {
            "model": self.config.model,
            "dim": self.dim,
            "max_context": int(self.max_context),
        }

    def count_tokens(self, text: str) -> int:
        if not text:
            return 0
        enc = self.tokenizer(text, add_special_tokens=False)
        return len(enc["input_ids"])

    # --- generation -----------------------------------------------------------

    def generate(
        self,
        prompt: str,
        max_tokens: int,
        temperature: float,
        frequency_penalty: float,
        n: int,
        stop: list[str],
    ) -> dict:
        if temperature != 0:
            raise UnsupportedError(f"temperature must be 0, got {temperature}")
        if n != 1:
            raise UnsupportedError(f"n must be 1, got {n}")
        if max_tokens < 1:
            raise UnsupportedError("max_tokens must be at least 1")

        enc = self.tokenizer(prompt, return_tensors="pt")
        ids = enc["input_ids"].to(self.config.device)
        n_prompt = ids.shape[1]
        if n_prompt + max_tokens > self.max_context:
            raise OverflowError_(
                f"prompt of {n_prompt} tokens plus {max_tokens} generated "
                f"exceeds context of {self.max_context}"
            )

        eos_id = self.tokenizer.eos_token_id
        counts = np.zeros(self.model.config.vocab_size, dtype=np.float64)
        generated: list[int] = []
        text = ""

        with self._forward_lock, torch.no_grad():
            out = self.model(ids, use_cache=True)
            past = out.past_key_values
            logits = out.logits[0, -1].double().cpu().numpy()
            for _ in range(max_tokens):
                pick = pick_next(logits, counts, frequency_penalty)
                if eos_id is not None and pick == eos_id:
                    break
                generated.append(pick)
                counts[pick] += 1.0
                text = self.tokenizer.decode(generated, skip_special_tokens=True)
                cut = min(
                    (i for i in (text.find(s) for s in stop if s) if i >= 0),
                    default=-1,
                )
                if cut >= 0:
                    text = text[:cut]
                    break
                if n_prompt + len(generated) >= self.max_context:
                    break
                step = torch.tensor([[pick]], device=self.config.device)
                out = self.model(step, past_key_values=past, use_cache=True)
                past = out.past_key_values
                logits = out.logits[0, -1].double().cpu().numpy()

        return {
            "choices": [{"text": text}],
            "usage": {
                "prompt_tokens": int(n_prompt),
                "completion_tokens": len(generated),
            },
        }

    # --- embeddings -----------------------------------------------------------

    def embed_span(self, text: str, span: tuple[int, int] | None, pooling: str) -> dict:
        if pooling not in POOLING_MODES:
            raise SpanError(f"unknown pooling mode {pooling!r}")
        if not text:
            raise SpanError("text must be non-empty")

        enc = self.tokenizer(
            text,
            return_tensors="pt",
            return_offsets_mapping=True,
            return_special_tokens_mask=True,
        )
        ids = enc["input_ids"].to(self.config.device)
        n_tokens = ids.shape[1]
        if n_tokens > self.max_context:
            raise OverflowError_(
                f"{n_tokens} tokens exceed context of {self.max_context}"
            )

        with self._forward_lock, torch.no_grad():
            out = self.model(ids, output_hidden_states=True)
        hidden = out.hidden_states[-1][0]  # post final layer norm

        if pooling == "last_token":
            pooled = hidden[-1]
            token_span = (n_tokens - 1, n_tokens)
        else:
            if span is None:
                raise SpanError(f"{pooling} requires a span")
            cs, ce = self._byte_span_to_chars(text, span)
            offsets = enc["offset_mapping"][0].tolist()
            specials = enc["special_tokens_mask"][0].tolist()
            positions = [
                i
                for i, (a, b) in enumerate(offsets)
                if not specials[i] and a < b and max(a, cs) < min(b, ce)
            ]
            if not positions:
                raise EmptyCoverageError("no token overlaps the span")
            token_span = (min(positions), max(positions) + 1)
            if pooling == "mean_span_shifted":
                positions = [p - 1 for p in positions if p - 1 >= 0]
                if not positions:
                    raise EmptyCoverageError(
                        "shifted span has no remaining positions"
                    )
            pooled = hidden[positions].mean(dim=0)

        vector = pooled.float().cpu().numpy().astype(np.float32)
        return {
            "embedding": [float(v) for v in vector],
            "dim": self.dim,
            "token_span": {"start": int(token_span[0]), "end": int(token_span[1])},
        }

    @staticmethod
    def _byte_span_to_chars(text: str, span: tuple[int, int]) -> tuple[int, int]:
        raw = text.encode("utf-8")
        start, end = span
        if not (0 <= start < end <= len(raw)):
            raise SpanError(f"span [{start}, {end}) reversed or out of range")
        for offset in (start, end):
            if 0 < offset < len(raw) and (raw[offset] & 0xC0) == 0x80:
                raise SpanError(f"byte offset {offset} is not a character boundary")
        return len(raw[:start].decode("utf-8")), len(raw[:end].decode("utf-8"))
