"""Session-scoped tiny model, engine, and client (one model load per session)."""

from __future__ import annotations

import base64
import io
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient
from PIL import Image

from llava_shim.engine import ShimConfig, ShimEngine
from llava_shim.server import create_app
from llava_shim.tinymodel import build_tiny_checkpoint

#: Golden wire requests serialized by the evaluation engine's test suite.
GOLDEN_REQUESTS = Path(__file__).resolve().parents[2] / "tests" / "golden" / "requests"


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory) -> Path:
    return build_tiny_checkpoint(tmp_path_factory.mktemp("model") / "tiny-llava", seed=0)


@pytest.fixture(scope="session")
def engine(checkpoint) -> ShimEngine:
    return ShimEngine(ShimConfig(model_path=str(checkpoint)))


@pytest.fixture(scope="session")
def client(engine) -> TestClient:
    return TestClient(create_app(engine))


def png_b64(size: int = 32, color=(120, 180, 90)) -> str:
    image = Image.new("RGB", (size, size), color)
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return base64.b64encode(buffer.getvalue()).decode("ascii")


def score_request_body(**overrides) -> dict:
    body = {
        "model": "tiny-llava",
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "image", "data": png_b64(), "media_type": "image/png"},
                    {"type": "text", "text": "Your task is to rate the caption . A dog runs ."},
                ],
            }
        ],
        "temperature": 0.0,
        "top_p": 1.0,
        "max_tokens": 6,
        "logprobs": True,
        "top_logprobs": 20,
    }
    body.update(overrides)
    return body


def load_golden(name: str) -> dict:
    return json.loads((GOLDEN_REQUESTS / f"{name}.json").read_text(encoding="utf-8"))


def golden_names() -> list[str]:
    return sorted(p.stem for p in GOLDEN_REQUESTS.glob("*.json"))
