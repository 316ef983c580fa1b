from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import StubServer, make_chat_handler, make_embed_handler

SAMPLE_DIR = Path(__file__).resolve().parent.parent / "sample"

CANNED_FEEDBACK = (
    "<output>The loop update order looks wrong: trace the first two iterations "
    "by hand and compare against the expected sequence.</output>"
)


@pytest.fixture(scope="session")
def sample_dir() -> Path:
    return SAMPLE_DIR


@pytest.fixture()
def chat_stub():
    handler, state = make_chat_handler(CANNED_FEEDBACK)
    server = StubServer(handler)
    try:
        yield server, state
    finally:
        server.close()


@pytest.fixture()
def embed_stub():
    handler, state = make_embed_handler(dim=8)
    server = StubServer(handler)
    try:
        yield server, state
    finally:
        server.close()
