from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from rite_server.app import create_app
from rite_server.runtime import ModelRuntime, ServerConfig
from rite_server.tinymodel import build_tiny_model


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory) -> str:
    return build_tiny_model(str(tmp_path_factory.mktemp("tiny-model")), seed=0)


@pytest.fixture(scope="session")
def server_config(model_dir) -> ServerConfig:
    return ServerConfig(model=model_dir)


@pytest.fixture(scope="session")
def runtime(server_config) -> ModelRuntime:
    return ModelRuntime(server_config)


@pytest.fixture(scope="session")
def client(server_config) -> TestClient:
    app = create_app(server_config, preload=True)
    with TestClient(app) as test_client:
        yield test_client
