"""Discrete sectional curvature of graphs and a signature heuristic.

For a node ``v`` with neighbours ``b, c`` and a reference node ``a``::

    xi(v; b, c; a) = (d(a,v)^2 + d(b,c)^2 / 4 - (d(a,b)^2 + d(a,c)^2) / 2) / (2 d(a,v))

The node curvature is the mean of ``xi`` over neighbour pairs and reference
nodes.  Stars give -1 at the centre, even cycles 1/(n-3), odd cycles
n/((n-1)(n-3)), trees values in [-1, 0].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import UsageError

NEAR_ZERO = 0.05
MAX_PAIRS = 50


def xi_quadruple(dist, v, b, c, a) -> float:
    dist = np.asarray(dist)
    if a in (v, b, c):
        raise UsageError(f"reference node a={a} must differ from v, b and c")
    if b == c:
        raise UsageError("neighbours b and c must be distinct")
    if dist[v, b] != 1 or dist[v, c] != 1:
        raise UsageError(f"b={b} and c={c} must both be neighbours of v={v}")
    dav = float(dist[a, v])
    return (dav**2 + dist[b, c] ** 2 / 4.0 - (dist[a, b] ** 2 + dist[a, c] ** 2) / 2.0) / (2.0 * dav)


def _neighbor_pairs(graph, v, rng):
    nb = graph.neighbors(v)
    bi, ci = np.triu_indices(len(nb), 1)
    if len(bi) > MAX_PAIRS:
        pick = np.sort(rng.choice(len(bi), size=MAX_PAIRS, replace=False))
        bi, ci = bi[pick], ci[pick]
    return nb[bi], nb[ci]


def _xi_many(dist, v, b, c, a):
    dav = dist[a, v].astype(float)
    # a == v gives 0/0; callers mask those entries out
    with np.errstate(divide="ignore", invalid="ignore"):
        return (dav**2 + dist[b, c] ** 2 / 4.0 - (dist[a, b] ** 2 + dist[a, c] ** 2) / 2.0) / (2.0 * dav)


def node_curvature(graph, dist, v, sample_budget, rng) -> float:
    """Mean xi over neighbour pairs of ``v`` and reference nodes.

    ``sample_budget`` caps the number of (pair, reference) quadruples.  When
    it covers every quadruple the exact average is returned; otherwise
    quadruples are drawn uniformly.  Nodes of degree < 2 return NaN.
    """
    n = graph.n
    if n < 4:
        raise UsageError("sectional curvature needs at least 4 nodes")
    if graph.degrees()[v] < 2:
        return math.nan
    dist = np.asarray(dist, dtype=np.int64)
    b, c = _neighbor_pairs(graph, v, rng)
    total = len(b) * (n - 3)
    if sample_budget >= total:
        a = np.arange(n)
        vals = _xi_many(dist, v, b[:, None], c[:, None], a[None, :])
        valid = (a[None, :] != v) & (a[None, :] != b[:, None]) & (a[None, :] != c[:, None])
        return float(vals[valid].mean())
    if sample_budget < 1:
        raise UsageError("sample_budget must be >= 1 for sampled curvature")
    p = rng.integers(len(b), size=sample_budget)
    bp, cp = b[p], c[p]
    # draw a uniformly from the n-3 nodes outside {v, b, c}
    a = rng.integers(n - 3, size=sample_budget)
    excl = np.sort(np.stack([np.full_like(bp, v), bp, cp], axis=1), axis=1)
    for j in range(3):
        a = a + (a >= excl[:, j])
    return float(_xi_many(dist, v, bp, cp, a).mean())


@dataclass
class CurvatureSummary:
    node_means: list
    hist_counts: list
    hist_edges: list
    negative: float
    near_zero: float
    positive: float
    near_zero_negative: float
    near_zero_positive: float
    budget_used: int
    eps: float = NEAR_ZERO
    skipped: list = field(default_factory=list)

    @property
    def fractions(self):
        return (self.negative, self.near_zero, self.positive)

    def to_dict(self):
        return asdict(self)


def curvature_summary(graph, dist, budget, rng, eps=NEAR_ZERO, bins=20) -> CurvatureSummary:
    if graph.n < 4:
        raise UsageError("curvature summary needs at least 4 nodes")
    means, skipped, used = [], [], 0
    deg = graph.degrees()
    for v in range(graph.n):
        if deg[v] < 2:
            skipped.append(v)
            means.append(None)
            continue
        means.append(node_curvature(graph, dist, v, budget, rng))
        pairs = min(deg[v] * (deg[v] - 1) // 2, MAX_PAIRS)
        used += min(budget, pairs * (graph.n - 3))
    vals = np.array([m for m in means if m is not None], dtype=float)
    if len(vals) == 0:
        frac = (0.0, 1.0, 0.0, 0.0, 0.0)
        counts, edges = np.zeros(bins, dtype=int), np.linspace(-1, 1, bins + 1)
    else:
        neg = int(np.sum(vals < -eps))
        pos = int(np.sum(vals > eps))
        band = np.abs(vals) <= eps
        frac = (
            neg / len(vals),
            int(band.sum()) / len(vals),
            pos / len(vals),
            int(np.sum(band & (vals < 0))) / len(vals),
            int(np.sum(band & (vals > 0))) / len(vals),
        )
        lo, hi = min(-1.0, vals.min()), max(1.0, vals.max())
        counts, edges = np.histogram(vals, bins=bins, range=(lo, hi))
    return CurvatureSummary(
        node_means=means,
        hist_counts=[int(x) for x in counts],
        hist_edges=[float(x) for x in edges],
        negative=frac[0],
        near_zero=frac[1],
        positive=frac[2],
        near_zero_negative=frac[3],
        near_zero_positive=frac[4],
        budget_used=int(used),
        eps=eps,
        skipped=skipped,
    )


def _allocate(weights, total):
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    raw = w * total
    alloc = np.floor(raw).astype(int)
    order = np.argsort(-(raw - alloc), kind="stable")
    for i in order[: total - alloc.sum()]:
        alloc[i] += 1
    # blocks narrower than 2 dims are folded into the widest block
    while total >= 2 and np.any((alloc > 0) & (alloc < 2)):
        small = np.flatnonzero((alloc > 0) & (alloc < 2))[0]
        extra = alloc[small]
        alloc[small] = 0
        alloc[int(np.argmax(alloc))] += extra
    return alloc


def suggest_signature(summary: CurvatureSummary, total_intrinsic_dim: int) -> str:
    """Split ``total_intrinsic_dim`` over h/s/e in proportion to the curvature
    fractions (negative, positive, near-zero).

    When every node falls in the near-zero band, the band's signed halves pick
    between h and s before e.
    """
    if total_intrinsic_dim < 2:
        raise UsageError("total_intrinsic_dim must be >= 2")
    weights = [summary.negative, summary.positive, summary.near_zero]
    if summary.negative == 0 and summary.positive == 0:
        flat = summary.near_zero - summary.near_zero_negative - summary.near_zero_positive
        weights = [summary.near_zero_negative, summary.near_zero_positive, max(flat, 0.0)]
    if sum(weights) <= 0:
        weights = [0.0, 0.0, 1.0]
    alloc = _allocate(weights, total_intrinsic_dim)
    return ",".join(f"{k}{d}" for k, d in zip("hse", alloc) if d > 0)
