"""Performance-aware embedding training.

Implements the multi-label supervised contrastive loss, the in-batch
multiple-negatives ranking loss, their convex combination, and plain
gradient-descent training of a linear projection head over frozen provider
vectors. Gradients are hand-derived and validated against central finite
differences in the test suite.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingVector
from .errors import (
    BatchTooSmall,
    DegenerateNorm,
    EmptyBatch,
    NonFiniteLoss,
    NonNormalizedInput,
    UnknownProblem,
)
from .models import PerformanceTier

TIER_CLASSES = ("tier_PASS", "tier_PARTIAL", "tier_FAIL")

_NORM_TOL = 1e-6
_MIN_PROJECTION_NORM = 1e-12


@dataclass(frozen=True)
class LabelVocab:
    """Ordered label classes: problem ids first, then the three tiers."""

    classes: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("vocab class names must be unique")
        for tier_class in TIER_CLASSES:
            if tier_class not in self.classes:
                raise ValueError(f"vocab must contain {tier_class}")

    @classmethod
    def from_problems(cls, problem_ids: list[str]) -> "LabelVocab":
        return cls(classes=tuple(f"problem_{p}" for p in problem_ids) + TIER_CLASSES)

    @property
    def size(self) -> int:
        return len(self.classes)

    def index_of(self, name: str) -> int:
        return self.classes.index(name)


@dataclass(frozen=True)
class LabelVector:
    bits: tuple[bool, ...]
    vocab_ref: str

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.float64)


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.07
    alpha: float = 0.5
    mnr_scale: float = 20.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.mnr_scale <= 0:
            raise ValueError("mnr_scale must be > 0")


@dataclass
class ProjectionHead:
    """Linear map to the performance-aware space, applied as z = normalize(W e)."""

    weights: np.ndarray
    d_in: int
    d_out: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.d_out, self.d_in):
            raise ValueError(f"weights must be {self.d_out}x{self.d_in}")
        if not np.isfinite(self.weights).all():
            raise ValueError("weights must be finite")

    def project(self, raw: np.ndarray) -> np.ndarray:
        """Project raw row vectors and L2-normalize each row."""
        raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        projected = raw @ self.weights.T
        norms = np.linalg.norm(projected, axis=1)
        if (norms < _MIN_PROJECTION_NORM).any():
            raise DegenerateNorm("projected vector collapsed to (near) zero norm")
        return projected / norms[:, None]

    def to_json_dict(self) -> dict:
        return {"d_in": self.d_in, "d_out": self.d_out, "weights": self.weights.tolist()}

    @classmethod
    def from_json_dict(cls, raw: dict) -> "ProjectionHead":
        return cls(
            weights=np.array(raw["weights"], dtype=np.float64),
            d_in=int(raw["d_in"]),
            d_out=int(raw["d_out"]),
        )


def init_head(d_in: int, d_out: int, seed: int) -> ProjectionHead:
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_out, d_in))
    return ProjectionHead(weights=weights, d_in=d_in, d_out=d_out)


def save_head(head: ProjectionHead, path: Path | str) -> None:
    Path(path).write_text(json.dumps(head.to_json_dict()), encoding="utf-8")


def load_head(path: Path | str) -> ProjectionHead:
    return ProjectionHead.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Batch:
    """N normalized anchors with multi-hot labels; similarity is derived."""

    anchors: np.ndarray  # N x D, rows unit-norm
    labels: np.ndarray  # N x C in {0, 1}

    def __post_init__(self):
        object.__setattr__(self, "anchors", np.asarray(self.anchors, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.float64))
        if self.anchors.ndim != 2 or self.labels.ndim != 2:
            raise ValueError("anchors and labels must be 2-D")
        if self.anchors.shape[0] != self.labels.shape[0]:
            raise ValueError("anchors and labels must agree on N")

    @classmethod
    def from_samples(cls, vectors: list[EmbeddingVector], labels: list[LabelVector]) -> "Batch":
        return cls(
            anchors=np.stack([v.values for v in vectors]),
            labels=np.stack([l.as_array() for l in labels]),
        )

    @property
    def similarity(self) -> np.ndarray:
        return self.anchors @ self.anchors.T

    def __len__(self) -> int:
        return self.anchors.shape[0]


def encode_labels(problem_id: str, tier: PerformanceTier, vocab: LabelVocab) -> LabelVector:
    """Two-hot label: the sample's problem class plus its tier class."""
    problem_class = f"problem_{problem_id}"
    if problem_class not in vocab.classes:
        raise UnknownProblem(f"problem {problem_id!r} not in vocab")
    bits = [False] * vocab.size
    bits[vocab.index_of(problem_class)] = True
    bits[vocab.index_of(f"tier_{tier.value}")] = True
    return LabelVector(bits=tuple(bits), vocab_ref=",".join(vocab.classes))


def _check_rows_normalized(matrix: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(matrix, axis=1)
    if (np.abs(norms - 1.0) > _NORM_TOL).any():
        raise NonNormalizedInput(f"{what} must be unit-norm (max deviation {np.abs(norms - 1).max():.2e})")


def _masked_log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log softmax over the off-diagonal entries (self excluded)."""
    n = logits.shape[0]
    masked = logits.copy()
    np.fill_diagonal(masked, -np.inf)
    row_max = masked.max(axis=1, keepdims=True)
    log_denom = row_max + np.log(np.exp(masked - row_max).sum(axis=1, keepdims=True))
    return logits - log_denom


def _positive_weights(labels: np.ndarray) -> np.ndarray:
    """w[i, j] = sum over classes k owned by both i and j of 1/|P(i, k)|, j != i.

    Summing log-probabilities against these weights reproduces the per-class
    positive-set averages masked by the anchor's own labels.
    """
    n = labels.shape[0]
    # shared[i, j, k] = 1 iff i and j both own class k
    shared = labels[:, None, :] * labels[None, :, :]
    idx = np.arange(n)
    shared[idx, idx, :] = 0.0
    counts = shared.sum(axis=1)  # |P(i, k)| per anchor and class
    inv_counts = np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)
    return np.einsum("ijk,ik->ij", shared, inv_counts)


def mulsupcon_loss(batch: Batch, tau: float) -> float:
    """Multi-label supervised contrastive loss over the batch.

    Per anchor and per owned class, averages -log softmax probability over
    the in-batch positives of that class; sums across owned classes; means
    over anchors that own at least one label.
    """
    n = len(batch)
    if n < 2:
        raise BatchTooSmall("need at least 2 samples")
    _check_rows_normalized(batch.anchors, "batch anchors")
    has_label = batch.labels.sum(axis=1) > 0
    if not has_label.any():
        return 0.0
    log_prob = _masked_log_softmax(batch.similarity / tau)
    weights = _positive_weights(batch.labels)
    per_anchor = -(weights * np.where(np.isfinite(log_prob), log_prob, 0.0)).sum(axis=1)
    return float(per_anchor[has_label].mean())


def mnr_loss(anchor_positive_pairs: list[tuple[EmbeddingVector, EmbeddingVector]], scale: float) -> float:
    """Ranking loss: each anchor must score its own positive above the
    positives of every other pair in the batch."""
    if not anchor_positive_pairs:
        raise EmptyBatch("need at least one (anchor, positive) pair")
    anchors = np.stack([a.values for a, _ in anchor_positive_pairs])
    positives = np.stack([p.values for _, p in anchor_positive_pairs])
    _check_rows_normalized(anchors, "anchors")
    _check_rows_normalized(positives, "positives")
    return _mnr_loss_from_rows(anchors, positives, scale)


def _mnr_loss_from_rows(anchors: np.ndarray, positives: np.ndarray, scale: float) -> float:
    logits = scale * (anchors @ positives.T)
    row_max = logits.max(axis=1, keepdims=True)
    log_denom = row_max.squeeze(1) + np.log(np.exp(logits - row_max).sum(axis=1))
    return float(np.mean(log_denom - np.diag(logits)))


def hybrid_loss(
    batch: Batch,
    pairs: list[tuple[EmbeddingVector, EmbeddingVector]],
    cfg: LossConfig,
) -> float:
    """alpha-weighted combination of the contrastive and ranking losses."""
    if cfg.alpha == 1.0:
        return mulsupcon_loss(batch, cfg.tau)
    if cfg.alpha == 0.0:
        return mnr_loss(pairs, cfg.mnr_scale)
    return cfg.alpha * mulsupcon_loss(batch, cfg.tau) + (1.0 - cfg.alpha) * mnr_loss(
        pairs, cfg.mnr_scale
    )


def _mulsupcon_grad_wrt_z(z: np.ndarray, labels: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """Loss value and its gradient with respect to the normalized embeddings."""
    n = z.shape[0]
    has_label = labels.sum(axis=1) > 0
    if n < 2 or not has_label.any():
        return 0.0, np.zeros_like(z)
    logits = (z @ z.T) / tau
    masked = logits.copy()
    np.fill_diagonal(masked, -np.inf)
    row_max = masked.max(axis=1, keepdims=True)
    exp_shifted = np.exp(masked - row_max)
    softmax = exp_shifted / exp_shifted.sum(axis=1, keepdims=True)  # zero on the diagonal
    log_prob = logits - (row_max + np.log(exp_shifted.sum(axis=1, keepdims=True)))

    weights = _positive_weights(labels) / has_label.sum()
    weights[~has_label, :] = 0.0
    loss = -(weights * np.where(np.isfinite(log_prob), log_prob, 0.0)).sum()

    total_weight = weights.sum(axis=1, keepdims=True)
    dlogits = total_weight * softmax - weights
    grad_z = ((dlogits + dlogits.T) @ z) / tau
    return float(loss), grad_z


def _mnr_grad_wrt_z(
    z: np.ndarray, pairs_index: list[tuple[int, int]], scale: float
) -> tuple[float, np.ndarray]:
    """Loss value and gradient w.r.t. z for in-batch ranking pairs."""
    if not pairs_index:
        return 0.0, np.zeros_like(z)
    a_idx = np.array([a for a, _ in pairs_index], dtype=int)
    p_idx = np.array([p for _, p in pairs_index], dtype=int)
    anchors = z[a_idx]
    positives = z[p_idx]
    logits = scale * (anchors @ positives.T)
    row_max = logits.max(axis=1, keepdims=True)
    exp_shifted = np.exp(logits - row_max)
    softmax = exp_shifted / exp_shifted.sum(axis=1, keepdims=True)
    m = len(pairs_index)
    loss = float(np.mean(np.log(exp_shifted.sum(axis=1)) + row_max.squeeze(1) - np.diag(logits)))
    dlogits = (softmax - np.eye(m)) / m
    grad_z = np.zeros_like(z)
    np.add.at(grad_z, a_idx, scale * (dlogits @ positives))
    np.add.at(grad_z, p_idx, scale * (dlogits.T @ anchors))
    return loss, grad_z


def _forward_backward(
    head: ProjectionHead,
    raw_inputs: np.ndarray,
    labels: np.ndarray,
    pairs_index: list[tuple[int, int]],
    cfg: LossConfig,
) -> tuple[float, np.ndarray]:
    """Hybrid loss and its gradient with respect to the head weights."""
    raw = np.asarray(raw_inputs, dtype=np.float64)
    projected = raw @ head.weights.T
    norms = np.linalg.norm(projected, axis=1)
    if (norms < _MIN_PROJECTION_NORM).any():
        raise DegenerateNorm("some projected input has (near) zero norm")
    z = projected / norms[:, None]

    loss_con, grad_con = (0.0, np.zeros_like(z))
    loss_mnr, grad_mnr = (0.0, np.zeros_like(z))
    if cfg.alpha > 0.0:
        loss_con, grad_con = _mulsupcon_grad_wrt_z(z, labels, cfg.tau)
    if cfg.alpha < 1.0 and pairs_index:
        loss_mnr, grad_mnr = _mnr_grad_wrt_z(z, pairs_index, cfg.mnr_scale)
    loss = cfg.alpha * loss_con + (1.0 - cfg.alpha) * loss_mnr
    grad_z = cfg.alpha * grad_con + (1.0 - cfg.alpha) * grad_mnr

    # back through z = u / |u|: du = (dz - (dz . z) z) / |u|
    inner = (grad_z * z).sum(axis=1, keepdims=True)
    grad_u = (grad_z - inner * z) / norms[:, None]
    grad_w = grad_u.T @ raw
    return loss, grad_w


def loss_gradient(
    head: ProjectionHead,
    raw_inputs: np.ndarray,
    labels: list[LabelVector] | np.ndarray,
    pairs_index: list[tuple[int, int]],
    cfg: LossConfig,
) -> np.ndarray:
    """Gradient of the hybrid loss with respect to the projection weights."""
    if isinstance(labels, np.ndarray):
        label_matrix = np.asarray(labels, dtype=np.float64)
    else:
        label_matrix = np.stack([l.as_array() for l in labels])
    _, grad = _forward_backward(head, raw_inputs, label_matrix, pairs_index, cfg)
    return grad


@dataclass(frozen=True)
class ComposedBatch:
    """Dataset indices of one batch plus in-batch ranking pairs (positions)."""

    indices: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]  # (anchor position, positive position)


def compose_batches(
    dataset: list[tuple[np.ndarray, str, PerformanceTier]],
    vocab: LabelVocab,
    batch_size: int,
    seed: int,
) -> list[ComposedBatch]:
    """Stratified, seeded batch composition.

    Samples are grouped by (problem, tier), shuffled within groups, and
    interleaved round-robin so each batch mixes strata. Each anchor is paired
    with a same-tier in-batch positive when one exists; trailing singleton
    batches are merged into their predecessor.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    if not dataset:
        raise ValueError("dataset must be non-empty")
    rng = np.random.default_rng(seed)

    groups: dict[tuple[str, str], list[int]] = {}
    for i, (_, problem_id, tier) in enumerate(dataset):
        groups.setdefault((problem_id, tier.value), []).append(i)
    order: list[int] = []
    shuffled = [list(rng.permutation(groups[key])) for key in sorted(groups)]
    while shuffled:
        for group in shuffled:
            order.append(int(group.pop(0)))
        shuffled = [g for g in shuffled if g]

    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2].extend(chunks.pop())

    batches: list[ComposedBatch] = []
    for chunk in chunks:
        tiers = [dataset[i][2] for i in chunk]
        pairs: list[tuple[int, int]] = []
        for pos, tier in enumerate(tiers):
            candidates = [j for j, other in enumerate(tiers) if j != pos and other == tier]
            if candidates:
                pairs.append((pos, int(rng.choice(candidates))))
        batches.append(ComposedBatch(indices=tuple(chunk), pairs=tuple(pairs)))
    return batches


def train_projection(
    dataset: list[tuple[np.ndarray, str, PerformanceTier]],
    vocab: LabelVocab,
    cfg: LossConfig,
    d_out: int,
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int = 32,
) -> tuple[ProjectionHead, list[float]]:
    """Plain gradient descent on the hybrid loss; returns head + loss trace."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if lr < 0:
        raise ValueError("lr must be >= 0")
    d_in = int(np.asarray(dataset[0][0]).shape[0])
    head = init_head(d_in, d_out, seed)
    label_matrix = np.stack(
        [encode_labels(problem_id, tier, vocab).as_array() for _, problem_id, tier in dataset]
    )
    raw_matrix = np.stack([np.asarray(vec, dtype=np.float64) for vec, _, _ in dataset])
    batches = compose_batches(dataset, vocab, batch_size, seed)

    trace: list[float] = []
    for epoch in range(epochs):
        batch_losses: list[float] = []
        for batch in batches:
            idx = list(batch.indices)
            loss, grad = _forward_backward(
                head, raw_matrix[idx], label_matrix[idx], list(batch.pairs), cfg
            )
            if not np.isfinite(loss):
                exc = NonFiniteLoss(f"loss diverged at epoch {epoch}")
                exc.trace = trace
                raise exc
            head.weights = head.weights - lr * grad
            batch_losses.append(loss)
        trace.append(float(np.mean(batch_losses)))
    return head, trace


def load_dataset_jsonl(path: Path | str) -> list[dict]:
    """Read the per-submission embedding dataset (one JSON object per line)."""
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            records.append(json.loads(line))
    return records


def dataset_records_to_samples(
    records: list[dict],
) -> list[tuple[np.ndarray, str, PerformanceTier]]:
    return [
        (
            np.array(r["embedding"], dtype=np.float64),
            r["problem_id"],
            PerformanceTier(r["tier"]),
        )
        for r in records
    ]
