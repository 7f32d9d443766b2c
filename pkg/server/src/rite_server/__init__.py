"""HTTP service exposing causal LMs for generation and span-pooled embeddings."""

from .app import create_app
from .runtime import ModelRuntime, ServerConfig

__all__ = ["create_app", "ModelRuntime", "ServerConfig"]
