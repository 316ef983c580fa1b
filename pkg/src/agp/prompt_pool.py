"""Curated instructional prompt pool with precomputed embeddings and
best-match selection against a code embedding."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingProvider, EmbeddingVector, embed_texts
from .errors import DimensionMismatch, EmptyPool, MalformedPool


@dataclass(frozen=True)
class InstructionalPrompt:
    id: str
    text: str
    concept_tag: str


@dataclass(frozen=True)
class PromptPool:
    prompts: tuple[InstructionalPrompt, ...]
    embeddings: tuple[EmbeddingVector, ...]

    def __post_init__(self):
        if len(self.prompts) != len(self.embeddings):
            raise MalformedPool("prompts and embeddings must be parallel lists")


def parse_pool_file(path: Path | str) -> list[InstructionalPrompt]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MalformedPool(f"pool file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MalformedPool(f"pool file is not valid JSON: {exc}") from None
    if not isinstance(raw, list) or not raw:
        raise MalformedPool("pool file must be a non-empty JSON array")
    prompts: list[InstructionalPrompt] = []
    seen: set[str] = set()
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise MalformedPool(f"pool[{i}] must be an object")
        for key in ("id", "text", "concept_tag"):
            if not isinstance(item.get(key), str):
                raise MalformedPool(f"pool[{i}] missing string field {key!r}")
        if not item["text"]:
            raise MalformedPool(f"pool[{i}] has empty text")
        if item["id"] in seen:
            raise MalformedPool(f"duplicate prompt id {item['id']!r}")
        seen.add(item["id"])
        prompts.append(InstructionalPrompt(item["id"], item["text"], item["concept_tag"]))
    return prompts


def init_pool(path: Path | str, provider: EmbeddingProvider) -> PromptPool:
    """Load prompts and embed each one once; order is preserved."""
    prompts = parse_pool_file(path)
    embeddings = embed_texts(provider, [p.text for p in prompts])
    return PromptPool(prompts=tuple(prompts), embeddings=tuple(embeddings))


def select_prompt(
    code_embedding: EmbeddingVector, pool: PromptPool
) -> tuple[InstructionalPrompt, float]:
    """Return the pool prompt with the highest (signed) cosine similarity.

    Ties break toward the lowest pool index; the score is the signed cosine.
    """
    if not pool.prompts:
        raise EmptyPool("prompt pool is empty")
    if code_embedding.dim != pool.embeddings[0].dim:
        raise DimensionMismatch(
            f"code embedding dim {code_embedding.dim} != pool dim {pool.embeddings[0].dim}"
        )
    matrix = np.stack([e.values for e in pool.embeddings])
    scores = matrix @ code_embedding.values
    best = int(np.argmax(scores))  # argmax returns the first (lowest) index on ties
    return pool.prompts[best], float(scores[best])
