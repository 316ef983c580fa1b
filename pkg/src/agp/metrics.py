"""Feedback quality metrics: greedy token-matching precision/recall/F1 over
token embeddings, and sentence-level embedding cosine."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingProvider, EmbeddingVector, embed_texts
from .errors import DimensionMismatch, EmptyText, EmptyTokenList


@dataclass(frozen=True)
class MetricResult:
    precision: float
    recall: float
    f1: float
    sentence_cosine: float


@dataclass(frozen=True)
class FeedbackPair:
    student_id: str
    assignment_id: str
    generated: str
    reference: str


@dataclass(frozen=True)
class CorpusResult:
    pairs: list[FeedbackPair]
    results: list[MetricResult | None]
    errors: list[tuple[int, str]]
    averages: MetricResult


def _f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0


def token_score(
    candidate_tokens: list[EmbeddingVector], reference_tokens: list[EmbeddingVector]
) -> tuple[float, float, float]:
    """Greedy maximum-cosine alignment between token sets.

    Precision matches each candidate token to its best reference token,
    recall the reverse; per-token maxima are clamped at 0 so scores stay in
    [0, 1]. No idf weighting, no baseline rescaling.
    """
    if not candidate_tokens or not reference_tokens:
        raise EmptyTokenList("both token lists must be non-empty")
    dim = candidate_tokens[0].dim
    for vec in (*candidate_tokens, *reference_tokens):
        if vec.dim != dim:
            raise DimensionMismatch("all token embeddings must share one dim")
    cand = np.stack([v.values for v in candidate_tokens])
    ref = np.stack([v.values for v in reference_tokens])
    sim = cand @ ref.T
    precision = float(np.maximum(sim.max(axis=1), 0.0).mean())
    recall = float(np.maximum(sim.max(axis=0), 0.0).mean())
    return precision, recall, _f1(precision, recall)


def tokenize_for_metrics(text: str) -> list[str]:
    """Whitespace tokens that carry at least one alphanumeric character."""
    return [tok for tok in text.split() if any(ch.isalnum() for ch in tok)]


def token_vectors(text: str, provider: EmbeddingProvider) -> list[EmbeddingVector]:
    tokens = tokenize_for_metrics(text)
    if not tokens:
        raise EmptyTokenList(f"no embeddable tokens in {text!r}")
    return embed_texts(provider, tokens)


def sentence_cosine(generated: str, reference: str, provider: EmbeddingProvider) -> float:
    """Cosine of the two provider sentence embeddings, clamped to [-1, 1]."""
    if not generated or not reference:
        raise EmptyText("both texts must be non-empty")
    vec_gen, vec_ref = embed_texts(provider, [generated, reference])
    return float(np.clip(np.dot(vec_gen.values, vec_ref.values), -1.0, 1.0))


def score_pair(generated: str, reference: str, provider: EmbeddingProvider) -> MetricResult:
    p, r, f1 = token_score(token_vectors(generated, provider), token_vectors(reference, provider))
    return MetricResult(
        precision=p,
        recall=r,
        f1=f1,
        sentence_cosine=sentence_cosine(generated, reference, provider),
    )


def evaluate_corpus(pairs: list[FeedbackPair], provider: EmbeddingProvider) -> CorpusResult:
    """Score every (generated, reference) pair; failed pairs are recorded and
    excluded from the arithmetic means."""
    if not pairs:
        raise ValueError("need at least one pair")
    results: list[MetricResult | None] = []
    errors: list[tuple[int, str]] = []
    for index, pair in enumerate(pairs):
        try:
            results.append(score_pair(pair.generated, pair.reference, provider))
        except Exception as exc:
            results.append(None)
            errors.append((index, f"{type(exc).__name__}: {exc}"))
    scored = [r for r in results if r is not None]
    if scored:
        averages = MetricResult(
            precision=float(np.mean([r.precision for r in scored])),
            recall=float(np.mean([r.recall for r in scored])),
            f1=float(np.mean([r.f1 for r in scored])),
            sentence_cosine=float(np.mean([r.sentence_cosine for r in scored])),
        )
    else:
        averages = MetricResult(0.0, 0.0, 0.0, 0.0)
    return CorpusResult(pairs=pairs, results=results, errors=errors, averages=averages)


def corpus_to_csv(corpus: CorpusResult) -> str:
    """Per-pair rows plus a terminal AVERAGE row."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["student_id", "assignment_id", "precision", "recall", "f1", "sentence_cosine"])
    for pair, result in zip(corpus.pairs, corpus.results):
        if result is None:
            writer.writerow([pair.student_id, pair.assignment_id, "ERROR", "ERROR", "ERROR", "ERROR"])
        else:
            writer.writerow(
                [
                    pair.student_id,
                    pair.assignment_id,
                    f"{result.precision:.6f}",
                    f"{result.recall:.6f}",
                    f"{result.f1:.6f}",
                    f"{result.sentence_cosine:.6f}",
                ]
            )
    avg = corpus.averages
    writer.writerow(
        [
            "AVERAGE",
            "",
            f"{avg.precision:.6f}",
            f"{avg.recall:.6f}",
            f"{avg.f1:.6f}",
            f"{avg.sentence_cosine:.6f}",
        ]
    )
    return buffer.getvalue()
