"""Shared test fixtures: synthetic cohorts, separation metrics, stub servers."""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np

from agp.models import PerformanceTier

PROBLEMS = ("p1", "p2", "p3")
TIERS = (PerformanceTier.PASS, PerformanceTier.PARTIAL, PerformanceTier.FAIL)


def synthetic_cohort(
    seed: int = 42,
    dim: int = 64,
    per_cluster: int = 30,
    noise: float = 0.3,
    tier_component: float = 0.1,
) -> list[tuple[np.ndarray, str, PerformanceTier]]:
    """3 problems x 3 tiers of unit vectors around cluster centers.

    Each center carries a weak shared per-tier direction: submissions in the
    same tier share structure across problems, which is the premise the
    trained head is supposed to amplify.
    """
    rng = np.random.default_rng(seed)
    tier_dirs = {}
    for tier in TIERS:
        direction = rng.normal(size=dim)
        tier_dirs[tier] = direction / np.linalg.norm(direction)
    dataset = []
    for problem in PROBLEMS:
        for tier in TIERS:
            center = rng.normal(size=dim)
            center = center / np.linalg.norm(center)
            center = center + tier_component * tier_dirs[tier]
            center = center / np.linalg.norm(center)
            for _ in range(per_cluster):
                sample = center + rng.normal(scale=noise, size=dim)
                dataset.append((sample / np.linalg.norm(sample), problem, tier))
    return dataset


def tier_separation(projected: np.ndarray, tiers: list[PerformanceTier]) -> float:
    """Mean same-tier cosine minus mean cross-tier cosine over all pairs."""
    sims = projected @ projected.T
    labels = np.array([t.value for t in tiers])
    upper = np.triu_indices(len(labels), k=1)
    same = (labels[:, None] == labels[None, :])[upper]
    values = sims[upper]
    return float(values[same].mean() - values[~same].mean())


def knn_purity(coords: np.ndarray, labels: np.ndarray, k: int = 5) -> float:
    """Fraction of each point's k nearest 2D neighbors sharing its label."""
    d2 = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    scores = [
        (labels[np.argsort(d2[i])[:k]] == labels[i]).mean() for i in range(len(labels))
    ]
    return float(np.mean(scores))


class StubServer:
    """Tiny single-purpose HTTP server running on a daemon thread."""

    def __init__(self, handler_factory):
        self.httpd = HTTPServer(("127.0.0.1", 0), handler_factory)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


def make_chat_handler(reply_text: str, fail_first: int = 0):
    """Chat-completion stub; optionally fails the first N requests with 503."""
    state = {"failures_left": fail_first, "requests": []}

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length)) if length else {}
            state["requests"].append(body)
            if state["failures_left"] > 0:
                state["failures_left"] -= 1
                self.send_response(503)
                self.end_headers()
                return
            payload = {"choices": [{"message": {"content": reply_text}}]}
            data = json.dumps(payload).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    return Handler, state


def make_embed_handler(dim: int, shape: str = "embeddings", fail_first: int = 0):
    """Embeddings stub returning deterministic one-hot-ish vectors."""
    state = {"failures_left": fail_first, "requests": []}

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length)) if length else {}
            state["requests"].append(body)
            if state["failures_left"] > 0:
                state["failures_left"] -= 1
                self.send_response(503)
                self.end_headers()
                return
            vectors = []
            for text in body.get("input", []):
                vec = [0.0] * dim
                vec[hash(text) % dim] = 1.0
                vectors.append(vec)
            if shape == "embeddings":
                payload = {"embeddings": vectors}
            else:
                payload = {"data": [{"embedding": v} for v in vectors]}
            data = json.dumps(payload).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    return Handler, state
