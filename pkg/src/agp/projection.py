"""2D embedding maps for instructor analytics.

A simplified neighbor-embedding projector: exact kNN graph, fuzzy neighbor
weights with per-point bandwidths, and a seeded stochastic attract/repulse
layout. Deterministic given (input, seed); no spectral initialization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingVector
from .errors import TooFewPoints
from .models import PerformanceTier

_EPS_REPULSE = 1e-3
_STEP_CLAMP = 4.0
_BANDWIDTH_ITERS = 64


@dataclass(frozen=True)
class ProjectionConfig:
    k: int = 15
    epochs: int = 200
    neg_samples: int = 5
    lr0: float = 1.0
    curve_a: float = 1.577
    curve_b: float = 0.895
    seed: int = 42

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if min(self.epochs, self.neg_samples) < 1 or min(self.lr0, self.curve_a, self.curve_b) <= 0:
            raise ValueError("epochs, neg_samples, lr0, curve_a, curve_b must be positive")

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "epochs": self.epochs,
            "neg_samples": self.neg_samples,
            "lr0": self.lr0,
            "curve_a": self.curve_a,
            "curve_b": self.curve_b,
        }


@dataclass(frozen=True)
class ProjectedPoint:
    student_id: str
    x: float
    y: float
    tier: PerformanceTier
    problem_id: str


@dataclass(frozen=True)
class SparseWeights:
    """Symmetric edge weights, stored once per unordered pair (i < j)."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray


def knn_graph(vectors: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact brute-force k nearest neighbors under Euclidean distance.

    Ties break toward the lower index. Returns (neighbors, distances),
    both N x k, rows sorted by ascending distance.
    """
    points = np.asarray(vectors, dtype=np.float64)
    n = points.shape[0]
    if n <= k:
        raise TooFewPoints(f"need more than k={k} points, got {n}")
    sq = np.sum(points**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (points @ points.T), 0.0)
    np.fill_diagonal(d2, np.inf)
    dist = np.sqrt(d2)
    # lexsort on (index, distance): stable ascending distance, lower index first
    neighbors = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k), dtype=np.float64)
    idx = np.arange(n)
    for i in range(n):
        order = np.lexsort((idx, dist[i]))[:k]
        neighbors[i] = order
        distances[i] = dist[i, order]
    return neighbors, distances


def _solve_bandwidth(row: np.ndarray, rho: float, target: float) -> float:
    """Binary-search sigma so sum_j exp(-max(0, d_j - rho) / sigma) = target."""
    shifted = np.maximum(row - rho, 0.0)
    if shifted.max() <= 0.0:  # all distances equal the nearest: no solvable sigma
        return 1.0

    def membership_sum(sigma: float) -> float:
        return float(np.exp(-shifted / sigma).sum())

    lo, hi = 0.0, 1.0
    for _ in range(_BANDWIDTH_ITERS):
        if membership_sum(hi) >= target:
            break
        hi *= 2.0
    for _ in range(_BANDWIDTH_ITERS):
        mid = (lo + hi) / 2.0
        if membership_sum(mid) < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def fuzzy_weights(neighbors: np.ndarray, distances: np.ndarray, k: int) -> SparseWeights:
    """Per-point exponential neighbor memberships, symmetrized by fuzzy union.

    rho_i is the distance to the nearest neighbor; sigma_i is solved so each
    row's membership sum equals log2(k).
    """
    n = neighbors.shape[0]
    target = math.log2(k)
    directed: dict[tuple[int, int], float] = {}
    for i in range(n):
        rho = float(distances[i, 0])
        sigma = _solve_bandwidth(distances[i], rho, target)
        for j_pos in range(neighbors.shape[1]):
            j = int(neighbors[i, j_pos])
            w = math.exp(-max(0.0, float(distances[i, j_pos]) - rho) / sigma)
            directed[(i, j)] = w

    merged: dict[tuple[int, int], float] = {}
    for (i, j), w_ij in directed.items():
        key = (min(i, j), max(i, j))
        if key in merged:
            continue
        w_ji = directed.get((j, i), 0.0)
        merged[key] = w_ij + w_ji - w_ij * w_ji
    keys = sorted(merged)
    return SparseWeights(
        n=n,
        rows=np.array([a for a, _ in keys], dtype=np.int64),
        cols=np.array([b for _, b in keys], dtype=np.int64),
        weights=np.array([merged[key] for key in keys], dtype=np.float64),
    )


def _clamp(value: float) -> float:
    if value > _STEP_CLAMP:
        return _STEP_CLAMP
    if value < -_STEP_CLAMP:
        return -_STEP_CLAMP
    return value


def optimize_layout(weights: SparseWeights, config: ProjectionConfig) -> np.ndarray:
    """Seeded stochastic layout: per epoch each edge attracts with probability
    equal to its weight and pushes away sampled non-neighbors."""
    n = weights.n
    rng = np.random.default_rng(config.seed)
    coords = rng.normal(0.0, 10.0 / math.sqrt(n), size=(n, 2))

    xs = [float(v) for v in coords[:, 0]]
    ys = [float(v) for v in coords[:, 1]]
    edge_i = weights.rows.tolist()
    edge_j = weights.cols.tolist()
    edge_w = weights.weights.tolist()
    n_edges = len(edge_w)
    a, b = config.curve_a, config.curve_b

    for epoch in range(config.epochs):
        lr = config.lr0 * (1.0 - epoch / config.epochs)
        fire = rng.random(n_edges).tolist()
        negatives = rng.integers(0, n, size=(n_edges, config.neg_samples)).tolist()
        for e in range(n_edges):
            if fire[e] >= edge_w[e]:
                continue
            i, j = edge_i[e], edge_j[e]
            dx = xs[i] - xs[j]
            dy = ys[i] - ys[j]
            d2 = dx * dx + dy * dy
            if d2 > 1e-12:
                coeff = (-2.0 * a * b * math.pow(d2, b - 1.0)) / (1.0 + a * math.pow(d2, b))
                step_x = _clamp(coeff * dx) * lr
                step_y = _clamp(coeff * dy) * lr
                xs[i] += step_x
                ys[i] += step_y
                xs[j] -= step_x
                ys[j] -= step_y
            for c in negatives[e]:
                if c == i:
                    continue
                dx = xs[i] - xs[c]
                dy = ys[i] - ys[c]
                d2 = dx * dx + dy * dy
                coeff = (2.0 * b) / ((_EPS_REPULSE + d2) * (1.0 + a * math.pow(d2, b)))
                xs[i] += _clamp(coeff * dx) * lr
                ys[i] += _clamp(coeff * dy) * lr
    return np.column_stack([xs, ys])


def project_cohort(
    records: list[tuple[str, str, PerformanceTier, EmbeddingVector]],
    config: ProjectionConfig,
) -> list[ProjectedPoint]:
    """Project a cohort to 2D. Records are canonicalized by (student, problem)
    so input order never affects the result."""
    if len(records) <= config.k:
        raise TooFewPoints(f"need more than k={config.k} records, got {len(records)}")
    ordered = sorted(records, key=lambda r: (r[0], r[1]))
    vectors = np.stack([r[3].values for r in ordered])
    neighbors, distances = knn_graph(vectors, config.k)
    weights = fuzzy_weights(neighbors, distances, config.k)
    coords = optimize_layout(weights, config)
    return [
        ProjectedPoint(
            student_id=rec[0],
            x=float(coords[i, 0]),
            y=float(coords[i, 1]),
            tier=rec[2],
            problem_id=rec[1],
        )
        for i, rec in enumerate(ordered)
    ]


def projection_to_json_dict(
    assignment_id: str, points: list[ProjectedPoint], config: ProjectionConfig
) -> dict:
    """The projection wire format consumed by the instructor UI."""
    return {
        "assignment_id": assignment_id,
        "points": [
            {
                "student_id": p.student_id,
                "x": p.x,
                "y": p.y,
                "tier": p.tier.value,
                "problem_id": p.problem_id,
            }
            for p in points
        ],
        "seed": config.seed,
        "config": config.to_json_dict(),
    }
