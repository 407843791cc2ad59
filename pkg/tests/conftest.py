import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from prodembed import geometry as geo

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SPACES = [geo.ModelSpace(geo.Kind.EUCLIDEAN, 3), geo.ModelSpace(geo.Kind.SPHERICAL, 3), geo.ModelSpace(geo.Kind.HYPERBOLIC, 3)]


def random_point(space, rng, spread=0.7, size=None):
    shape = () if size is None else (size,)
    base = np.broadcast_to(space.base_point(), shape + (space.ambient_dim,))
    v = np.zeros(shape + (space.ambient_dim,))
    noise = rng.normal(0.0, spread, size=shape + (space.dim,))
    if space.kind is geo.Kind.EUCLIDEAN:
        v[...] = noise
    else:
        v[..., 1:] = noise
    return geo.exp_map(space, base, v, check=False)


def random_tangent(space, x, rng, norm=None):
    v = geo.tangent_from_ambient(space, x, rng.normal(size=x.shape))
    if norm is not None:
        v = v * (norm / geo.tangent_norm(space, v))[..., None]
    return v


def central_diff(f, x, eps=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"criterion {criterion:>2}: {status}  {detail}")
    print(ACCEPTANCE_LINES[-1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
