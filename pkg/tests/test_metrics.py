import csv
import io
import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from prodembed import geometry as geo
from prodembed import graphs
from prodembed.errors import UsageError
from prodembed.metrics import (
    EvalReport,
    avg_distortion,
    evaluation_pairs,
    map_score,
    pair_from_index,
    rank_metrics,
)
from prodembed.product import parse_signature, random_product_point, set_weights, weighted_sq_distance, with_scale


def naive_distortion(dist, sig, pts):
    n = len(pts)
    total, count = 0.0, 0
    for a in range(n):
        for b in range(a + 1, n):
            dp2 = sum(
                w * geo.distance(c, pts[a][sl], pts[b][sl]) ** 2 for c, sl, w in zip(sig.components, sig.slices, sig.weights)
            )
            total += abs(sig.scale**2 * dp2 / dist[a, b] ** 2 - 1)
            count += 1
    return total / count


def naive_map(graph, sig, pts):
    out = []
    for a in range(graph.n):
        d = {b: float(weighted_sq_distance(sig, pts[a], pts[b])) for b in range(graph.n) if b != a}
        nbrs = set(graph.neighbors(a).tolist())
        precs = []
        for b in nbrs:
            ball = [c for c in d if d[c] <= d[b]]
            precs.append(len(nbrs.intersection(ball)) / len(ball))
        out.append(np.mean(precs))
    return float(np.mean(out))


def test_distortion_examples():
    g = graphs.path(3)
    dist = graphs.apsp(g)
    sig = parse_signature("e1")
    pts = np.array([[0.0], [1.0], [2.0]])
    assert avg_distortion(dist, sig, pts) == 0.0
    assert avg_distortion(dist, sig, 2 * pts) == pytest.approx(3.0)
    assert map_score(g, sig, pts) == 1.0
    with pytest.raises(UsageError):
        avg_distortion(np.zeros((1, 1)), sig, pts[:1])


def test_distortion_matches_naive(rng):
    g = graphs.ring_of_trees(4, 2, 1)
    dist = graphs.apsp(g)
    sig = with_scale(set_weights(parse_signature("h2,s2,e1"), rng.normal(size=3)), 1.7)
    pts = random_product_point(sig, 0.5, rng, size=g.n)
    assert abs(avg_distortion(dist, sig, pts) - naive_distortion(dist, sig, pts)) <= 1e-12


def test_single_component_is_classic_distortion():
    g = graphs.cycle(10)
    dist = graphs.apsp(g)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        for text in ("h3", "s3", "e3"):
            sig = parse_signature(text)
            c = sig.components[0]
            pts = random_product_point(sig, 0.5, rng, size=g.n)
            i, j = np.triu_indices(g.n, 1)
            classic = np.mean(np.abs((geo.distance(c, pts[i], pts[j]) / dist[i, j]) ** 2 - 1))
            assert abs(avg_distortion(dist, sig, pts) - classic) <= 1e-12


def test_map_adversarial():
    g = graphs.path(3)
    sig = parse_signature("e1")
    # node 0 sees non-neighbour 2 before its only neighbour 1
    pts = np.array([[0.0], [2.0], [1.5]])
    assert map_score(g, sig, pts) == pytest.approx((0.5 + 1 + 1) / 3)
    assert map_score(g, sig, pts) == pytest.approx(naive_map(g, sig, pts))


def test_map_matches_naive_and_in_range(rng):
    for g in (graphs.cycle(12), graphs.tree(2, 15), graphs.barbell(4)):
        sig = parse_signature("h2,s1")
        pts = random_product_point(sig, 0.5, rng, size=g.n)
        m = map_score(g, sig, pts)
        assert 0 <= m <= 1
        assert m == pytest.approx(naive_map(g, sig, pts), abs=1e-12)


def test_map_closed_ball_ties():
    # node 0 has neighbour 1 and non-neighbour 2 at the same distance: the closed ball holds both
    g = graphs.path(3)
    pts = np.array([[0.0], [1.0], [-1.0]])
    assert map_score(g, parse_signature("e1"), pts) == pytest.approx((0.5 + 1 + 0.5) / 3)


def test_map_requires_neighbours():
    g = graphs.Graph.from_edges(3, [(0, 1)])
    with pytest.raises(UsageError):
        map_score(g, parse_signature("e1"), np.zeros((3, 1)))


def _random_isometry(sig, rng):
    maps = []
    for c in sig.components:
        if c.kind is geo.Kind.SPHERICAL:
            q, _ = np.linalg.qr(rng.normal(size=(c.ambient_dim, c.ambient_dim)))
            maps.append(lambda x, q=q: x @ q.T)
        elif c.kind is geo.Kind.HYPERBOLIC:
            t = rng.uniform(-1, 1)
            boost = np.eye(c.ambient_dim)
            boost[:2, :2] = [[np.cosh(t), np.sinh(t)], [np.sinh(t), np.cosh(t)]]
            rot = np.eye(c.ambient_dim)
            if c.dim > 1:
                q, _ = np.linalg.qr(rng.normal(size=(c.dim, c.dim)))
                rot[1:, 1:] = q
            m = rot @ boost
            maps.append(lambda x, m=m: x @ m.T)
        else:
            shift = rng.normal(size=c.ambient_dim)
            maps.append(lambda x, s=shift: x + s)
    return maps


def test_metrics_invariant_under_isometries():
    g = graphs.ring_of_trees(4, 2, 1)
    dist = graphs.apsp(g)
    sig = set_weights(parse_signature("h2,s2,e2"), [0.3, -0.2, 0.1])
    for seed in range(5):
        rng = np.random.default_rng(seed)
        pts = random_product_point(sig, 0.4, rng, size=g.n)
        moved = pts.copy()
        for f, sl in zip(_random_isometry(sig, rng), sig.slices):
            moved[:, sl] = f(pts[:, sl])
        assert abs(avg_distortion(dist, sig, moved) - avg_distortion(dist, sig, pts)) <= 1e-9
        assert abs(map_score(g, sig, moved) - map_score(g, sig, pts)) <= 1e-9


def test_rank_metrics_examples():
    assert rank_metrics([1, 1, 1], 3) == (1.0, 1.0)
    mrr, hr = rank_metrics([1, 2, 4], 3)
    assert mrr == pytest.approx(1.75 / 3) and hr == pytest.approx(2 / 3)
    assert rank_metrics([10], 3) == (0.1, 0.0)
    with pytest.raises(UsageError):
        rank_metrics([], 3)
    with pytest.raises(UsageError):
        rank_metrics([0, 1], 3)


@given(st.lists(st.integers(1, 50), min_size=1, max_size=20), st.integers(0, 19), st.integers(1, 10))
def test_rank_metrics_monotone(ranks, idx, k):
    idx %= len(ranks)
    better = list(ranks)
    better[idx] = max(1, better[idx] - 1)
    m0, h0 = rank_metrics(ranks, k)
    m1, h1 = rank_metrics(better, k)
    assert 0 < m0 <= 1 and 0 <= h0 <= 1
    assert m1 >= m0 and h1 >= h0


@pytest.mark.parametrize("n", [2, 3, 7, 50, 401])
def test_pair_from_index_matches_triu(n):
    i, j = np.triu_indices(n, 1)
    pi, pj = pair_from_index(np.arange(len(i)), n)
    assert np.array_equal(pi, i) and np.array_equal(pj, j)


def test_pair_from_index_large_n():
    n = 4941
    total = n * (n - 1) // 2
    k = np.array([0, 1, n - 2, n - 1, total // 2, total - 2, total - 1])
    i, j = pair_from_index(k, n)
    start = i * (2 * n - i - 1) // 2
    assert np.all(i < j) and np.all(j < n) and np.array_equal(start + j - i - 1, k)


def test_evaluation_pairs_sampling():
    i, j = evaluation_pairs(100)
    assert len(i) == 4950
    i, j = evaluation_pairs(2000)
    assert len(i) == 2000 * 1999 // 2
    i1, j1 = evaluation_pairs(3000, seed=1)
    i2, j2 = evaluation_pairs(3000, seed=1)
    assert len(i1) == 2_000_000 and np.array_equal(i1, i2) and np.array_equal(j1, j2)
    assert len(set(zip(i1[:1000].tolist(), j1[:1000].tolist()))) == 1000


def test_eval_report_serialisation():
    r = EvalReport(0.1, 0.9, 3, "h2,s1", [0.25, 0.75], 0.5)
    assert json.loads(r.to_json())["map"] == 0.9
    row = next(csv.reader(io.StringIO(r.csv_row())))
    assert len(row) == len(EvalReport.CSV_FIELDS) and row[1] == "0.250000 0.750000"


def test_permutation_relabelling(rng):
    g = graphs.tree(2, 15)
    sig = parse_signature("h2")
    pts = random_product_point(sig, 0.5, rng, size=g.n)
    perm = rng.permutation(g.n)
    inv = np.argsort(perm)
    g2 = graphs.Graph.from_edges(g.n, [(inv[a], inv[b]) for a, b in g.edges()])
    assert map_score(g2, sig, pts[perm]) == pytest.approx(map_score(g, sig, pts), abs=1e-12)
    dist2 = graphs.apsp(g2)
    assert avg_distortion(dist2, sig, pts[perm]) == pytest.approx(avg_distortion(graphs.apsp(g), sig, pts), abs=1e-12)


def test_all_pairs_used_exactly():
    i, j = evaluation_pairs(5)
    assert list(zip(i, j)) == list(itertools.combinations(range(5), 2))
