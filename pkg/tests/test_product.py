import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from prodembed import geometry as geo
from prodembed.errors import ParseError, UsageError
from prodembed.product import (
    component_sq_distances,
    parse_signature,
    product_distance,
    random_product_point,
    set_weights,
    sq_distance_gradient,
    weighted_sq_distance,
    with_scale,
)

from conftest import random_tangent


def test_parse_examples():
    sig = parse_signature("h2,s1")
    assert sig.n_components == 2
    assert [c.dim for c in sig.components] == [2, 1]
    assert [c.ambient_dim for c in sig.components] == [3, 2]
    assert sig.weights == (0.5, 0.5)
    sig = parse_signature("h10*3,s10*2")
    assert sig.n_components == 5
    assert [c.kind.value for c in sig.components] == ["h", "h", "h", "s", "s"]
    assert parse_signature("h2*2,s2*2,e10").total_dim == 18


@pytest.mark.parametrize("text,offset", [("x3", 0), ("h2,q1", 3), ("h0", 0), ("h2,s2*0", 3), ("h", 0), ("", 0)])
def test_parse_errors_carry_offset(text, offset):
    with pytest.raises(ParseError) as exc:
        parse_signature(text)
    assert exc.value.position == offset


def test_weighted_distance_examples():
    sig = parse_signature("e1,e1")
    p, q = np.array([0.0, 0.0]), np.array([1.0, 2.0])
    assert weighted_sq_distance(sig, p, q) == pytest.approx(2.5)
    assert weighted_sq_distance(sig, p, p) == 0.0
    sig2 = set_weights(sig, np.log([0.83, 0.16]))
    assert sig2.weights[0] == pytest.approx(0.83 / 0.99)
    assert weighted_sq_distance(sig2, p, np.array([1.0, 1.0])) == pytest.approx(1.0)
    with pytest.raises(UsageError):
        weighted_sq_distance(sig, np.zeros(3), q)


def test_uniform_weights_equal_scaled_unweighted_distance(rng):
    sig = parse_signature("h2,s2,e3")
    p = random_product_point(sig, 0.5, rng, size=20)
    q = random_product_point(sig, 0.5, rng, size=20)
    unweighted = sum(geo.distance(c, p[:, sl], q[:, sl]) ** 2 for c, sl in zip(sig.components, sig.slices))
    assert np.allclose(weighted_sq_distance(sig, p, q), unweighted / 3, rtol=1e-14)
    assert np.allclose(product_distance(sig, p, q) ** 2, unweighted / 3, rtol=1e-12)


def test_monotone_in_component_distance():
    sig = set_weights(parse_signature("e1,e1"), [0.3, -0.2])
    base = weighted_sq_distance(sig, np.zeros(2), np.array([1.0, 1.0]))
    assert weighted_sq_distance(sig, np.zeros(2), np.array([1.1, 1.0])) > base
    assert weighted_sq_distance(sig, np.zeros(2), np.array([1.0, 1.1])) > base


def test_gradient_examples():
    sig = parse_signature("e2")
    g, comp = sq_distance_gradient(sig, np.array([1.0, 0.0]), np.zeros(2))
    assert np.allclose(g, [2, 0]) and np.allclose(comp, [1.0])
    p = np.array([0.6, 0.8])
    g, _ = sq_distance_gradient(sig, p, p)
    assert np.array_equal(g, [0, 0])


def _tangent_fd(sig, p, q, w, eps=1e-6):
    def move(t):
        out = p.copy()
        for c, sl in zip(sig.components, sig.slices):
            out[sl] = geo.exp_map(c, p[sl], t * w[sl], check=False)
        return weighted_sq_distance(sig, out, q)

    return (move(eps) - move(-eps)) / (2 * eps)


def test_gradient_h2_unit_distance():
    sig = parse_signature("h2")
    p = np.array([1.0, 0.0, 0.0])
    q = np.array([math.cosh(1), math.sinh(1), 0.0])
    g, _ = sq_distance_gradient(sig, p, q)
    for w in (np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.3, -0.7])):
        assert float(g @ w) == pytest.approx(_tangent_fd(sig, p, q, w, 1e-5), rel=1e-5)


def test_gradient_matches_differences_random(rng):
    """200 random draws across all kinds; directional derivatives along tangent vectors."""
    kinds = ["h2,s2", "e3,h1", "s3,e2,h3", "h4", "s1,s1"]
    worst = 0.0
    for trial in range(200):
        sig = set_weights(parse_signature(kinds[trial % len(kinds)]), rng.normal(size=len(kinds[trial % len(kinds)].split(","))))
        sig = with_scale(sig, rng.uniform(0.5, 2.0))
        p = random_product_point(sig, 0.5, rng)
        q = random_product_point(sig, 0.5, rng)
        comp = component_sq_distances(sig, p, q)
        if np.any(np.sqrt(comp) < 0.05):
            continue
        g, _ = sq_distance_gradient(sig, p, q)
        w = np.concatenate([random_tangent(c, p[sl], rng) for c, sl in zip(sig.components, sig.slices)])
        numeric = _tangent_fd(sig, p, q, w)
        worst = max(worst, abs(float(g @ w) - numeric) / max(abs(numeric), 1e-8))
    assert worst <= 1e-4


def test_random_point_properties(rng):
    sig = parse_signature("h2,s1,e2")
    assert np.allclose(random_product_point(sig, 0.0, rng), sig.base_point())
    pts = random_product_point(parse_signature("s1"), 0.4, rng, size=100)
    assert np.allclose(np.sum(pts**2, axis=1), 1, atol=1e-9)
    a = random_product_point(parse_signature("e2"), 0.1, np.random.default_rng(7))
    b = random_product_point(parse_signature("e2"), 0.1, np.random.default_rng(7))
    assert np.array_equal(a, b)
    with pytest.raises(UsageError):
        random_product_point(sig, 0.6, rng)


def test_set_weights_examples():
    sig = parse_signature("h2,s2")
    assert set_weights(sig, [0, 0]).weights == (0.5, 0.5)
    assert np.allclose(set_weights(parse_signature("e1*3"), [7, 7, 7]).weights, [1 / 3] * 3)
    assert np.allclose(set_weights(sig, [math.log(4), 0]).weights, [0.8, 0.2], atol=1e-15)
    with pytest.raises(UsageError):
        set_weights(sig, [np.nan, 0])
    with pytest.raises(UsageError):
        set_weights(sig, [0, 0, 0])


@given(st.lists(st.floats(-30, 30), min_size=3, max_size=3), st.floats(-50, 50))
def test_set_weights_shift_invariant(raw, c):
    sig = parse_signature("h2,s2,e2")
    a = np.array(set_weights(sig, raw).weights)
    b = np.array(set_weights(sig, np.array(raw) + c).weights)
    assert np.all(a > 0) and abs(a.sum() - 1) <= 1e-12
    assert np.allclose(a, b, atol=1e-12)
