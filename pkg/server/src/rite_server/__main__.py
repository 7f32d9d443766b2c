"""Launcher: ``rite-server --model <id-or-path> [--host] [--port] ...``"""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .runtime import ServerConfig


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="serve a causal LM over the embedding protocol")
    parser.add_argument("--model", required=True, help="HF model id or local path")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8321)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--dtype", default="float32")
    parser.add_argument("--max-context", type=int, default=None)
    args = parser.parse_args(argv)

    config = ServerConfig(
        model=args.model,
        device=args.device,
        dtype=args.dtype,
        max_context=args.max_context,
    )
    uvicorn.run(create_app(config), host=args.host, port=args.port)


if __name__ == "__main__":
    main()
