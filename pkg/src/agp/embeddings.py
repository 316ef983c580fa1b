"""Embedding vectors for code and text: remote provider protocol plus a
deterministic built-in double (hashed bag of tokens) so the whole pipeline
runs offline.
"""
from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np
import requests

from .errors import DimensionMismatch, EmptyText, NoTokens, ProviderUnavailable, ZeroVector

BATCH_SIZE = 64
MAX_RETRIES = 3
MAX_IN_FLIGHT = int(os.environ.get("AGP_EMBED_MAX_IN_FLIGHT", "4"))

_in_flight = threading.BoundedSemaphore(MAX_IN_FLIGHT)

_TOKEN_BYTES = re.compile(rb"[a-z0-9]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 1 << 64


class ProviderKind(Enum):
    REMOTE = "Remote"
    DETERMINISTIC_DOUBLE = "DeterministicDouble"


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    dim: int
    normalized: bool

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} components, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("embedding contains NaN or Inf components")
        if self.normalized and abs(np.linalg.norm(arr) - 1.0) > 1e-9:
            raise ValueError("vector marked normalized but |v|_2 deviates from 1")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class EmbeddingProvider:
    kind: ProviderKind
    dim: int
    endpoint: str | None = None
    model: str | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("provider dim must be >= 1")
        if self.kind is ProviderKind.REMOTE and not self.endpoint:
            raise ValueError("remote provider requires an endpoint")


def deterministic_provider(dim: int = 64) -> EmbeddingProvider:
    return EmbeddingProvider(kind=ProviderKind.DETERMINISTIC_DOUBLE, dim=dim)


def remote_provider_from_env() -> EmbeddingProvider:
    endpoint = os.environ.get("AGP_EMBED_ENDPOINT")
    if not endpoint:
        raise ProviderUnavailable("AGP_EMBED_ENDPOINT is not set")
    return EmbeddingProvider(
        kind=ProviderKind.REMOTE,
        dim=int(os.environ.get("AGP_EMBED_DIM", "64")),
        endpoint=endpoint,
        model=os.environ.get("AGP_EMBED_MODEL", "default"),
    )


def normalize(values) -> EmbeddingVector:
    """Scale a vector to unit L2 norm; idempotent to the bit.

    Repeated division can oscillate between two float vectors whose norms
    round to either side of 1, so the walk tracks visited states and, on a
    cycle, returns a canonical member - re-normalizing that member walks the
    same cycle and picks the same representative.
    """
    arr = np.array(values, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ZeroVector("cannot normalize the zero vector")
    unit = arr / norm
    seen: dict[bytes, np.ndarray] = {}
    while True:
        n = float(np.linalg.norm(unit))
        if n == 1.0:
            break
        key = unit.tobytes()
        if key in seen:
            cycle_started = False
            members = []
            for visited_key, visited in seen.items():
                if visited_key == key:
                    cycle_started = True
                if cycle_started:
                    members.append(visited)
            unit = min(members, key=lambda m: m.tobytes())
            break
        seen[key] = unit.copy()
        unit = unit / n
    return EmbeddingVector(values=unit, dim=unit.shape[0], normalized=True)


def fnv1a64(data: bytes) -> int:
    value = _FNV_OFFSET
    for byte in data:
        value = ((value ^ byte) * _FNV_PRIME) % _U64
    return value


def _tokenize(text: str) -> list[bytes]:
    return _TOKEN_BYTES.findall(text.encode("utf-8").lower())


def embed_deterministic(text: str, dim: int) -> EmbeddingVector:
    """Hashed bag-of-tokens unit vector: split on non-alphanumeric bytes,
    lowercase, FNV-1a-64 each token into one of `dim` count buckets."""
    if not text:
        raise EmptyText("cannot embed empty text")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    tokens = _tokenize(text)
    if not tokens:
        raise NoTokens(f"no alphanumeric content in {text!r}")
    counts = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        counts[fnv1a64(token) % dim] += 1.0
    return normalize(counts)


def _parse_response_vectors(payload: dict) -> list[list[float]]:
    if "embeddings" in payload:
        return payload["embeddings"]
    if "data" in payload:
        return [item["embedding"] for item in payload["data"]]
    raise ProviderUnavailable("embedding response has neither 'embeddings' nor 'data'")


def _post_batch(provider: EmbeddingProvider, batch: list[str]) -> list[list[float]]:
    headers = {}
    api_key = os.environ.get("AGP_EMBED_API_KEY")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last_error: Exception | None = None
    for attempt in range(MAX_RETRIES):
        try:
            with _in_flight:  # bound concurrent requests across caller threads
                response = requests.post(
                    provider.endpoint,
                    json={"model": provider.model, "input": batch},
                    headers=headers,
                    timeout=60,
                )
            if response.status_code >= 500:
                raise ProviderUnavailable(f"server error {response.status_code}")
            response.raise_for_status()
            return _parse_response_vectors(response.json())
        except (requests.ConnectionError, requests.Timeout, ProviderUnavailable) as exc:
            last_error = exc
            time.sleep(min(0.2 * (2**attempt), 2.0))
    raise ProviderUnavailable(f"embedding endpoint failed after {MAX_RETRIES} attempts: {last_error}")


def embed_texts(provider: EmbeddingProvider, texts: list[str]) -> list[EmbeddingVector]:
    """Embed a batch of texts, one normalized vector per text, order preserved."""
    if not texts:
        raise EmptyText("texts must be non-empty")
    for i, text in enumerate(texts):
        if not text:
            raise EmptyText(f"texts[{i}] is empty")
    if provider.kind is ProviderKind.DETERMINISTIC_DOUBLE:
        return [embed_deterministic(text, provider.dim) for text in texts]

    vectors: list[EmbeddingVector] = []
    for offset in range(0, len(texts), BATCH_SIZE):
        batch = texts[offset : offset + BATCH_SIZE]
        raw_vectors = _post_batch(provider, batch)
        if len(raw_vectors) != len(batch):
            raise ProviderUnavailable(
                f"endpoint returned {len(raw_vectors)} vectors for {len(batch)} inputs"
            )
        for raw in raw_vectors:
            if len(raw) != provider.dim:
                raise DimensionMismatch(
                    f"endpoint returned dim {len(raw)}, provider configured for {provider.dim}"
                )
            vectors.append(normalize(raw))
    return vectors


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity of two normalized vectors, clamped to [-1, 1]."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dim {a.dim} vs {b.dim}")
    return float(np.clip(np.dot(a.values, b.values), -1.0, 1.0))
