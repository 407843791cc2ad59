"""Embedding quality: average distortion, mAP, and ranking metrics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import UsageError
from .product import Signature, weighted_sq_distance

EXACT_PAIR_LIMIT_NODES = 2000
SAMPLED_PAIRS = 2_000_000
_CHUNK = 200_000


def pair_from_index(k, n):
    """Map linear indices over the strict upper triangle to ``(i, j)``, i < j."""
    k = np.asarray(k, dtype=np.int64)
    i = (n - 2 - np.floor(np.sqrt(-8.0 * k + 4.0 * n * (n - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    # guard against floating-point off-by-one
    start = i * (2 * n - i - 1) // 2
    i = np.where(k < start, i - 1, i)
    start = i * (2 * n - i - 1) // 2
    nxt = (i + 1) * (2 * n - i - 2) // 2
    i = np.where(k >= nxt, i + 1, i)
    start = i * (2 * n - i - 1) // 2
    j = k - start + i + 1
    return i, j


def evaluation_pairs(n, seed=0):
    total = n * (n - 1) // 2
    if n <= EXACT_PAIR_LIMIT_NODES or total <= SAMPLED_PAIRS:
        i, j = np.triu_indices(n, 1)
        return i, j
    rng = np.random.default_rng(seed)
    k = np.sort(rng.choice(total, size=SAMPLED_PAIRS, replace=False))
    return pair_from_index(k, n)


def pair_distortions(dist_graph, sig, points, i, j):
    dg = np.asarray(dist_graph)[i, j].astype(float)
    out = np.empty(len(i))
    for s in range(0, len(i), _CHUNK):
        sl = slice(s, s + _CHUNK)
        dp2 = weighted_sq_distance(sig, points[i[sl]], points[j[sl]])
        out[sl] = np.abs(dp2 / dg[sl] ** 2 - 1.0)
    return out


def avg_distortion(dist_graph, sig: Signature, points, seed=0, return_pairs=False):
    """Mean over node pairs of |(d_P / d_G)^2 - 1|.

    All pairs for graphs up to 2000 nodes, a fixed-seed sample of 2e6 pairs
    beyond that.
    """
    n = np.shape(dist_graph)[0]
    if n < 2:
        raise UsageError("distortion needs at least two nodes")
    i, j = evaluation_pairs(n, seed)
    value = float(pair_distortions(dist_graph, sig, np.asarray(points), i, j).mean())
    return (value, len(i)) if return_pairs else value


def map_score(graph, sig: Signature, points) -> float:
    """Mean average precision of neighbourhood retrieval.

    The ball around ``f(a)`` that reaches neighbour ``b`` is closed, so nodes
    tied with ``b`` on the boundary are retrieved with it.
    """
    points = np.asarray(points)
    deg = graph.degrees()
    if np.any(deg < 1):
        raise UsageError("mAP needs every node to have at least one neighbour")
    total = 0.0
    for a in range(graph.n):
        d = weighted_sq_distance(sig, points[a], points)
        others = np.delete(d, a)
        others.sort()
        nb_d = np.sort(d[graph.neighbors(a)])
        ball = np.searchsorted(others, nb_d, side="right")
        hits = np.searchsorted(nb_d, nb_d, side="right")
        total += float(np.mean(hits / ball))
    return total / graph.n


def rank_metrics(ranks, k):
    ranks = np.asarray(ranks, dtype=float)
    if ranks.size == 0:
        raise UsageError("rank_metrics needs at least one rank")
    if np.any(ranks < 1):
        raise UsageError("ranks start at 1")
    return float(np.mean(1.0 / ranks)), float(np.mean(ranks <= k))


@dataclass
class EvalReport:
    d_avg: float
    map: float
    n_pairs: int
    signature: str
    weights: list
    seconds: float = 0.0

    CSV_FIELDS = ("signature", "weights", "d_avg", "map", "n_pairs", "seconds")

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self) -> str:
        buf = io.StringIO()
        row = dict(self.to_dict())
        row["weights"] = " ".join(f"{w:.6f}" for w in self.weights)
        csv.DictWriter(buf, fieldnames=self.CSV_FIELDS, lineterminator="\n").writerow(row)
        return buf.getvalue()
