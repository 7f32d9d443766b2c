"""HTTP surface: the wire protocol consumed by the retrieval toolkit.

Endpoints:
    POST /v1/generate     greedy decoding with a frequency penalty
    POST /v1/embed_span   span-addressed pooled last-layer hidden states
    GET  /v1/info         model name, embedding dim, context size
    POST /v1/count_tokens tokenizer-reported content token count

Error codes: 400 malformed request or bad span, 404 span covers no
tokens, 413 context overflow, 422 unsupported decoding parameters
(temperature != 0 or n != 1), 503 model not loaded.
"""

from __future__ import annotations

from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .runtime import (
    EmptyCoverageError,
    ModelRuntime,
    OverflowError_,
    ServerConfig,
    SpanError,
    UnsupportedError,
)


class GenerateRequest(BaseModel):
    prompt: str = Field(min_length=1)
    max_tokens: int = Field(ge=1)
    temperature: float = 0.0
    frequency_penalty: float = 0.0
    n: int = 1
    stop: list[str] = []


class SpanModel(BaseModel):
    start: int
    end: int


class EmbedSpanRequest(BaseModel):
    text: str = Field(min_length=1)
    span: SpanModel | None = None
    pooling: str


class CountRequest(BaseModel):
    text: str


def create_app(config: ServerConfig, preload: bool = False) -> FastAPI:
    """Build the service; the model loads in the lifespan startup phase
    (or eagerly with ``preload=True``)."""

    state: dict[str, ModelRuntime | None] = {"runtime": None}

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        if state["runtime"] is None:
            state["runtime"] = ModelRuntime(config)
        yield

    app = FastAPI(title="rite-model-server", lifespan=lifespan)
    if preload:
        state["runtime"] = ModelRuntime(config)

    def runtime() -> ModelRuntime:
        rt = state["runtime"]
        if rt is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return rt

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors())})

    @app.post("/v1/generate")
    def handle_generate(req: GenerateRequest):
        try:
            return runtime().generate(
                prompt=req.prompt,
                max_tokens=req.max_tokens,
                temperature=req.temperature,
                frequency_penalty=req.frequency_penalty,
                n=req.n,
                stop=req.stop,
            )
        except UnsupportedError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except OverflowError_ as exc:
            raise HTTPException(status_code=413, detail=str(exc)) from exc

    @app.post("/v1/embed_span")
    def handle_embed_span(req: EmbedSpanRequest):
        span = (req.span.start, req.span.end) if req.span is not None else None
        try:
            return runtime().embed_span(req.text, span, req.pooling)
        except SpanError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except EmptyCoverageError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except OverflowError_ as exc:
            raise HTTPException(status_code=413, detail=str(exc)) from exc

    @app.get("/v1/info")
    def handle_info():
        return runtime().info()

    @app.post("/v1/count_tokens")
    def handle_count(req: CountRequest):
        return {"count": runtime().count_tokens(req.text)}

    return app
