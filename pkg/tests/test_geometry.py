import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from prodembed import geometry as geo
from prodembed.errors import DivergedError, InvalidPointError, InvalidTangentError, UndefinedDirectionError, UsageError

from conftest import SPACES, random_point, random_tangent

E2 = geo.ModelSpace("e", 2)
S2 = geo.ModelSpace("s", 2)
H2 = geo.ModelSpace("h", 2)
H1POINT = np.array([math.cosh(1), math.sinh(1), 0.0])


def test_ambient_dims():
    assert (E2.ambient_dim, S2.ambient_dim, H2.ambient_dim) == (2, 3, 3)
    with pytest.raises(UsageError):
        geo.ModelSpace("h", 0)


def test_distance_examples():
    assert geo.distance(S2, [1, 0, 0], [0, 1, 0]) == pytest.approx(math.pi / 2, abs=1e-15)
    assert geo.distance(H2, [1, 0, 0], [1, 0, 0]) == 0.0
    assert geo.distance(H2, [1, 0, 0], H1POINT) == pytest.approx(1.0, abs=1e-12)


def test_distance_errors():
    with pytest.raises(UsageError):
        geo.distance(S2, [1, 0], [0, 1, 0])
    with pytest.raises(InvalidPointError):
        geo.distance(S2, [1.1, 0, 0], [0, 1, 0])
    with pytest.raises(InvalidPointError):
        geo.distance(H2, [-1, 0, 0], [1, 0, 0])


def test_exp_examples():
    assert np.allclose(geo.exp_map(E2, [1, 2], [0.5, 0]), [1.5, 2])
    assert np.allclose(geo.exp_map(S2, [1, 0, 0], [0, math.pi / 2, 0]), [0, 1, 0], atol=1e-15)
    for sp in SPACES:
        x = sp.base_point()
        assert np.array_equal(geo.exp_map(sp, x, np.zeros_like(x)), x)
    with pytest.raises(InvalidTangentError):
        geo.exp_map(S2, [1, 0, 0], [1, 0, 0])


def test_log_examples():
    v = geo.log_map(H2, [1, 0, 0], H1POINT)
    assert np.allclose(v, [0, 1, 0], atol=1e-12)
    assert np.allclose(geo.log_map(E2, [1, 2], [3, 5]), [2, 3])
    x = np.array([0.6, 0.8, 0.0])
    assert np.allclose(geo.log_map(S2, x, x), 0)
    with pytest.raises(UndefinedDirectionError):
        geo.log_map(S2, [1, 0, 0], [-1, 0, 0])


def test_tangent_projection_examples():
    assert np.allclose(geo.tangent_from_ambient(E2, [0, 0], [1, 2]), [1, 2])
    assert np.allclose(geo.tangent_from_ambient(S2, [1, 0, 0], [5, 1, 0]), [0, 1, 0])
    assert np.allclose(geo.tangent_from_ambient(H2, [1, 0, 0], [2, 3, 0]), [0, 3, 0])


def test_renormalize_examples():
    assert np.allclose(geo.renormalize(S2, [1.0004, 0, 0]), [1, 0, 0])
    assert np.allclose(geo.renormalize(H2, [1.0000001, 0, 0]), [1, 0, 0], atol=1e-15)
    assert np.array_equal(geo.renormalize(E2, [3.0, 4.0]), [3.0, 4.0])
    # the unit-norm rescale for (2,0,0) is the radial rule; its drift is far past the divergence guard
    assert np.allclose(geo.renormalize(S2, [2.0, 0, 0], check=False), [1, 0, 0])
    with pytest.raises(DivergedError):
        geo.renormalize(S2, [2.0, 0, 0])


@pytest.mark.parametrize("space", SPACES, ids=str)
def test_renormalize_tolerance_and_displacement(space, rng):
    x = random_point(space, rng, size=50)
    noisy = x + rng.normal(scale=1e-6, size=x.shape)
    y = geo.renormalize(space, noisy)
    assert np.all(geo.point_violation(space, y) <= 1e-12)
    if space.kind is not geo.Kind.EUCLIDEAN:
        absolute = np.abs(geo.inner(space, noisy, noisy) - space.curvature)
        disp = np.linalg.norm(y - noisy, axis=1)
        assert np.all(disp <= 2 * absolute + 1e-15)


def test_mobius_examples():
    x = np.array([0.3, -0.2])
    assert np.allclose(geo.mobius_add(1.0, x, np.zeros(2)), x)
    assert np.allclose(geo.mobius_add(1.0, np.zeros(2), x), x)
    assert np.allclose(geo.mobius_add(1.0, [0.3, 0], [0.4, 0]), [0.625, 0])
    with pytest.warns(geo.NumericClampWarning):
        out = geo.mobius_add(1.0, [0.999999999, 0], [0.999999999, 0])
    assert np.linalg.norm(out) < 1.0


def test_exp0_ball_examples():
    assert np.allclose(geo.exp0_ball(1.0, [0, 0]), 0)
    assert np.allclose(geo.exp0_ball(1.0, [1, 0]), [math.tanh(1), 0])
    assert np.linalg.norm(geo.exp0_ball(2.0, [10, 0])) < 1 / math.sqrt(2)
    norms = [np.linalg.norm(geo.exp0_ball(1.0, [r, 0])) for r in np.linspace(0, 3, 20)]
    assert np.all(np.diff(norms) > 0)
    assert np.allclose(geo.log0_ball(1.0, geo.exp0_ball(1.0, [0.3, -0.7])), [0.3, -0.7])


def test_block_rotate_examples():
    x = np.array([0.2, -1.0, 3.0, 0.5])
    assert np.array_equal(geo.block_rotate(x, [0, 0]), x)
    assert np.allclose(geo.block_rotate([1, 0], [math.pi / 2]), [0, 1], atol=1e-15)
    assert np.allclose(geo.block_rotate([1, 0, 0, 1], [math.pi, math.pi / 2]), [-1, 0, -1, 0], atol=1e-15)
    with pytest.raises(UsageError):
        geo.block_rotate([1, 0, 0], [0])


@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6), st.lists(st.floats(-7, 7), min_size=3, max_size=3))
def test_block_rotate_preserves_norm(x, angles):
    x = np.array(x)
    assert abs(np.linalg.norm(geo.block_rotate(x, angles)) - np.linalg.norm(x)) <= 1e-12 * max(1.0, np.linalg.norm(x))


def test_model_convert_examples(rng):
    assert np.allclose(geo.model_convert("hyperboloid->ball", [1, 0, 0]), [0, 0])
    assert np.allclose(geo.model_convert("ball->hyperboloid", [0, 0]), [1, 0, 0])
    b = geo.model_convert("hyperboloid->ball", H1POINT)
    assert b[0] == pytest.approx(math.sinh(1) / (1 + math.cosh(1)))
    assert geo.ball_distance(1.0, np.zeros(2), b) == pytest.approx(1.0, abs=1e-12)
    x = random_point(H2, rng, size=100)
    y = random_point(H2, rng, size=100)
    bx, by = geo.model_convert("hyperboloid->ball", x), geo.model_convert("hyperboloid->ball", y)
    assert np.allclose(geo.model_convert("ball->hyperboloid", bx), x, atol=1e-10)
    assert np.allclose(geo.ball_distance(1.0, bx, by), geo.distance(H2, x, y), atol=1e-8)


def test_stereographic_sphere_distance(rng):
    # the k = +1 chart reproduces sphere distances
    x = random_point(S2, rng, size=100)
    y = random_point(S2, rng, size=100)
    bx, by = geo.to_stereographic(x), geo.to_stereographic(y)
    assert np.allclose(geo.from_stereographic(bx, 1.0), x, atol=1e-10)
    assert np.allclose(geo.dist_k(bx, by, 1.0), geo.distance(S2, x, y), atol=1e-8)


@pytest.mark.parametrize("space", SPACES, ids=str)
def test_exp_log_round_trip(space, rng):
    x = random_point(space, rng, size=500)
    v = random_tangent(space, x, rng) * rng.uniform(0, 1, size=(500, 1))
    v = v * np.minimum(1.0, 1.0 / np.maximum(geo.tangent_norm(space, v), 1e-12))[:, None]
    y = geo.exp_map(space, x, v)
    assert np.all(geo.point_violation(space, y) <= 1e-9)
    assert np.allclose(geo.log_map(space, x, y), v, atol=1e-7)
    assert np.allclose(geo.distance(space, x, y), geo.tangent_norm(space, v), atol=1e-7)


@pytest.mark.parametrize("space", SPACES, ids=str)
def test_exp_distance_equals_norm_up_to_five(space, rng):
    x = random_point(space, rng, size=200)
    r = rng.uniform(0.01, 5.0, size=200)
    if space.kind is geo.Kind.SPHERICAL:
        r = np.minimum(r, math.pi - 0.01)  # geodesics stop being minimal past pi
    v = random_tangent(space, x, rng, norm=r)
    assert np.allclose(geo.distance(space, x, geo.exp_map(space, x, v)), r, atol=1e-7)


@pytest.mark.parametrize("space", SPACES, ids=str)
def test_log_norm_is_distance(space, rng):
    x = random_point(space, rng, size=300)
    y = random_point(space, rng, size=300)
    assert np.allclose(geo.tangent_norm(space, geo.log_map(space, x, y)), geo.distance(space, x, y), atol=1e-8)


@pytest.mark.parametrize("space", SPACES, ids=str)
def test_distance_metric_axioms(space, rng):
    a, b, c = (random_point(space, rng, size=1000) for _ in range(3))
    dab, dbc, dac = geo.distance(space, a, b), geo.distance(space, b, c), geo.distance(space, a, c)
    assert np.array_equal(dab, geo.distance(space, b, a))
    assert np.all(dac <= dab + dbc + 1e-9)
    assert np.allclose(geo.distance(space, a, a), 0, atol=1e-7)


@pytest.mark.parametrize("space", SPACES, ids=str)
def test_projection_tangent_linear_idempotent(space, rng):
    x = random_point(space, rng, size=100)
    h1, h2 = rng.normal(size=x.shape), rng.normal(size=x.shape)
    v1 = geo.tangent_from_ambient(space, x, h1)
    if space.kind is not geo.Kind.EUCLIDEAN:
        assert np.all(np.abs(geo.inner(space, x, v1)) <= 1e-10)
    v12 = geo.tangent_from_ambient(space, x, 2 * h1 - 3 * h2)
    assert np.allclose(v12, 2 * v1 - 3 * geo.tangent_from_ambient(space, x, h2), atol=1e-10)
    if space.kind is not geo.Kind.HYPERBOLIC:
        # the J flip makes the hyperbolic rule a gradient conversion, not a projection
        assert np.allclose(geo.tangent_from_ambient(space, x, v1), v1, atol=1e-12)


def test_hyperbolic_projection_is_riemannian_gradient(rng):
    # <grad, w>_L must equal the Euclidean directional derivative for tangent w
    x = random_point(H2, rng)
    h = rng.normal(size=3)
    g = geo.tangent_from_ambient(H2, x, h)
    w = random_tangent(H2, x, rng)
    assert geo.minkowski_dot(g, w) == pytest.approx(float(h @ w), rel=1e-10, abs=1e-12)


def _midpoint(space, b, c):
    return geo.exp_map(space, b, 0.5 * geo.log_map(space, b, c))


@pytest.mark.parametrize("space", SPACES, ids=str)
def test_triangle_midpoint_sign(space, rng):
    """d(a,m)^2 + d(b,c)^2/4 - (d(a,b)^2 + d(a,c)^2)/2: 0 flat, > 0 sphere, < 0 hyperbolic."""
    checked = 0
    while checked < 1000:
        a = random_point(space, rng)
        b = geo.exp_map(space, a, random_tangent(space, a, rng, norm=rng.uniform(0.1, 1.5)))
        c = geo.exp_map(space, a, random_tangent(space, a, rng, norm=rng.uniform(0.1, 1.5)))
        sides = [geo.distance(space, a, b), geo.distance(space, a, c), geo.distance(space, b, c)]
        if min(sides) < 0.1 or max(sides) > 1.5:
            continue
        # skip nearly collinear triangles where the quantity vanishes in every space
        ab, ac, bc = sides
        if min(ab + ac - bc, ab + bc - ac, ac + bc - ab) < 1e-3:
            continue
        m = _midpoint(space, b, c)
        q = geo.distance(space, a, m) ** 2 + bc**2 / 4 - (ab**2 + ac**2) / 2
        if space.kind is geo.Kind.EUCLIDEAN:
            assert abs(q) <= 1e-9
        elif space.kind is geo.Kind.SPHERICAL:
            assert q > 0
        else:
            assert q < 0
        checked += 1


@pytest.mark.parametrize("space", SPACES, ids=str)
def test_sq_distance_grad_matches_differences(space, rng):
    from conftest import central_diff

    for _ in range(20):
        x = random_point(space, rng)
        y = random_point(space, rng)

        def f(z):
            return float(geo.distance(space, z, y, check=False) ** 2)

        _, g = geo.sq_distance_grad(space, x, y)
        # compare along tangent directions (the ambient gradient is defined up to normal parts)
        for _ in range(3):
            w = random_tangent(space, x, rng)
            numeric = (f(geo.exp_map(space, x, 1e-6 * w)) - f(geo.exp_map(space, x, -1e-6 * w))) / 2e-6
            assert float(g @ w) == pytest.approx(numeric, rel=1e-5, abs=1e-7)
        if space.kind is geo.Kind.EUCLIDEAN:
            assert np.allclose(g, central_diff(f, x), rtol=1e-5, atol=1e-7)
