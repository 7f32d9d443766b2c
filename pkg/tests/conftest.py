from __future__ import annotations

from pathlib import Path

import pytest

from rite.backend import ToyBackend
from rite.toylm import ToyLMConfig

GOLDEN_DIR = Path(__file__).parent / "goldens"


@pytest.fixture(scope="session")
def toy_backend() -> ToyBackend:
    return ToyBackend(ToyLMConfig(seed=0))


@pytest.fixture(scope="session")
def small_backend() -> ToyBackend:
    """A reduced-context model for overflow tests."""
    return ToyBackend(ToyLMConfig(max_context=32, seed=7))


def read_golden(name: str) -> str:
    return (GOLDEN_DIR / name).read_bytes().decode("utf-8")
