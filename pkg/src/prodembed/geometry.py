"""Constant-curvature model spaces.

Spherical points live on the unit sphere, hyperbolic points on the upper
sheet of the unit hyperboloid ``<x, x>_L = -1``.  Euclidean points are plain
vectors.  All kernels broadcast over leading axes; the last axis holds the
ambient coordinates.

The Poincare-ball helpers at the bottom are parameterised by the sectional
curvature ``k`` (``k = -c`` for the c-ball, ``k = +1`` for the stereographic
sphere) so the knowledge-graph scorer can share one code path across both
curved kinds.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidPointError,
    InvalidTangentError,
    NumericClampWarning,
    UndefinedDirectionError,
    UsageError,
    DivergedError,
)

POINT_TOL = 1e-6
TANGENT_TOL = 1e-6
DRIFT_TOL = 1e-3
ANTIPODAL_TOL = 1e-9
COINCIDENT = 1e-7
BALL_EPS = 1e-7


class Kind(str, enum.Enum):
    EUCLIDEAN = "e"
    SPHERICAL = "s"
    HYPERBOLIC = "h"


@dataclass(frozen=True)
class ModelSpace:
    kind: Kind
    dim: int

    def __post_init__(self):
        if not isinstance(self.kind, Kind):
            object.__setattr__(self, "kind", Kind(self.kind))
        if int(self.dim) < 1:
            raise UsageError(f"intrinsic dimension must be >= 1, got {self.dim}")

    @property
    def ambient_dim(self) -> int:
        return self.dim if self.kind is Kind.EUCLIDEAN else self.dim + 1

    @property
    def curvature(self) -> float:
        return {Kind.EUCLIDEAN: 0.0, Kind.SPHERICAL: 1.0, Kind.HYPERBOLIC: -1.0}[self.kind]

    def base_point(self) -> np.ndarray:
        x = np.zeros(self.ambient_dim)
        if self.kind is not Kind.EUCLIDEAN:
            x[0] = 1.0
        return x

    def __str__(self):
        return f"{self.kind.value}{self.dim}"


def minkowski_dot(x, y):
    """Lorentzian inner product -x0*y0 + sum_i xi*yi over the last axis."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.sum(x[..., 1:] * y[..., 1:], axis=-1) - x[..., 0] * y[..., 0]


def inner(space: ModelSpace, x, y):
    if space.kind is Kind.HYPERBOLIC:
        return minkowski_dot(x, y)
    return np.sum(np.asarray(x) * np.asarray(y), axis=-1)


def tangent_norm(space: ModelSpace, v):
    return np.sqrt(np.maximum(inner(space, v, v), 0.0))


def _check_shape(space, *arrays):
    for a in arrays:
        if np.shape(a)[-1:] != (space.ambient_dim,):
            raise UsageError(
                f"expected {space.ambient_dim} ambient coordinates for {space}, got shape {np.shape(a)}"
            )


def point_violation(space: ModelSpace, x):
    x = np.asarray(x, dtype=float)
    if space.kind is Kind.SPHERICAL:
        return np.abs(np.sum(x * x, axis=-1) - 1.0)
    if space.kind is Kind.HYPERBOLIC:
        # the lower sheet counts as maximally invalid
        # relative to x0^2: cancellation error in <x,x> grows with the radius
        v = np.abs(minkowski_dot(x, x) + 1.0) / np.maximum(1.0, x[..., 0] ** 2)
        return np.where(x[..., 0] > 0, v, np.inf)
    return np.zeros(x.shape[:-1])


def check_point(space: ModelSpace, x, tol: float = POINT_TOL):
    _check_shape(space, x)
    if not np.all(np.isfinite(x)):
        raise InvalidPointError(f"non-finite coordinates on {space}")
    worst = float(np.max(point_violation(space, x)))
    if worst > tol:
        raise InvalidPointError(f"point is off {space} by {worst:.3g} (tolerance {tol:g})")


def check_tangent(space: ModelSpace, x, v, tol: float = TANGENT_TOL):
    _check_shape(space, x, v)
    if space.kind is Kind.EUCLIDEAN:
        return
    worst = float(np.max(np.abs(inner(space, x, v))))
    if worst > tol:
        raise InvalidTangentError(f"vector is not tangent at base point (|<x,v>| = {worst:.3g})")


def _clamped_cos(space, x, y, check):
    """Cosine-like argument of the distance, clamped to its legal domain."""
    if space.kind is Kind.SPHERICAL:
        u = np.sum(x * y, axis=-1)
        over = np.maximum(np.abs(u) - 1.0, 0.0)
        lo, hi = -1.0, 1.0
    else:
        u = -minkowski_dot(x, y)
        over = np.maximum(1.0 - u, 0.0)
        lo, hi = 1.0, np.inf
    if check and np.any(over > POINT_TOL):
        raise InvalidPointError(f"distance argument left its domain by {float(np.max(over)):.3g}")
    return np.clip(u, lo, hi)


def distance(space: ModelSpace, x, y, check: bool = True):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if check:
        check_point(space, x)
        check_point(space, y)
    if space.kind is Kind.EUCLIDEAN:
        return np.linalg.norm(x - y, axis=-1)
    u = _clamped_cos(space, x, y, check)
    # chord forms near 0 (and near pi on the sphere) where arccos/arccosh lose half the digits
    if space.kind is Kind.SPHERICAL:
        near = 2.0 * np.arcsin(np.minimum(np.linalg.norm(x - y, axis=-1) / 2.0, 1.0))
        far = np.pi - 2.0 * np.arcsin(np.minimum(np.linalg.norm(x + y, axis=-1) / 2.0, 1.0))
        return np.where(np.abs(u) < 0.5, np.arccos(u), np.where(u > 0, near, far))
    chord = np.sqrt(np.maximum(minkowski_dot(x - y, x - y), 0.0))
    return np.where(u < 2.0, 2.0 * np.arcsinh(chord / 2.0), np.arccosh(u))


def sq_distance_grad(space: ModelSpace, x, y):
    """Squared geodesic distance and its ambient gradient with respect to ``x``.

    Coincident pairs (distance below 1e-7) get a zero gradient.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if space.kind is Kind.EUCLIDEAN:
        diff = x - y
        return np.sum(diff * diff, axis=-1), 2.0 * diff
    u = _clamped_cos(space, x, y, check=False)
    if space.kind is Kind.SPHERICAL:
        d = np.arccos(u)
        ratio = d / np.maximum(np.sin(d), 1e-12)
        dudx = y
        coef = -2.0 * ratio
    else:
        d = np.arccosh(u)
        ratio = d / np.maximum(np.sinh(d), 1e-300)
        dudx = np.concatenate([y[..., :1], -y[..., 1:]], axis=-1)
        coef = 2.0 * ratio
    coef = np.where(d < COINCIDENT, 0.0, coef)
    return d * d, coef[..., None] * dudx


def _sin_over(n):
    safe = np.where(n > 1e-8, n, 1.0)
    return np.where(n > 1e-8, np.sin(safe) / safe, 1.0 - n * n / 6.0)


def _sinh_over(n):
    safe = np.where(n > 1e-8, n, 1.0)
    return np.where(n > 1e-8, np.sinh(safe) / safe, 1.0 + n * n / 6.0)


def renormalize(space: ModelSpace, x, check: bool = True):
    """Pull a slightly drifted point back onto the manifold."""
    x = np.array(x, dtype=float)
    _check_shape(space, x)
    if space.kind is Kind.EUCLIDEAN:
        return x
    if check:
        drift = float(np.max(point_violation(space, x)))
        if not np.isfinite(drift) or drift > DRIFT_TOL:
            raise DivergedError(
                f"point drifted {drift:.3g} off {space}; lower the learning rate"
            )
    if space.kind is Kind.SPHERICAL:
        return x / np.linalg.norm(x, axis=-1, keepdims=True)
    x[..., 0] = np.sqrt(1.0 + np.sum(x[..., 1:] ** 2, axis=-1))
    return x


def exp_map(space: ModelSpace, x, v, check: bool = True):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if check:
        check_point(space, x)
        check_tangent(space, x, v)
    if space.kind is Kind.EUCLIDEAN:
        return x + v
    n = tangent_norm(space, v)[..., None]
    if space.kind is Kind.SPHERICAL:
        y = np.cos(n) * x + _sin_over(n) * v
    else:
        y = np.cosh(n) * x + _sinh_over(n) * v
    return renormalize(space, y, check=check)


def log_map(space: ModelSpace, x, y, check: bool = True):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if check:
        check_point(space, x)
        check_point(space, y)
    if space.kind is Kind.EUCLIDEAN:
        return y - x
    u = _clamped_cos(space, x, y, check)
    if space.kind is Kind.SPHERICAL:
        if np.any(u <= -1.0 + ANTIPODAL_TOL):
            raise UndefinedDirectionError("log map between antipodal points has no unique direction")
        d = np.arccos(u)
        ratio = d / np.where(d > 1e-8, np.sin(d), 1.0)
        ratio = np.where(d > 1e-8, ratio, 1.0)
    else:
        d = np.arccosh(u)
        ratio = np.where(d > 1e-8, d / np.where(d > 1e-8, np.sinh(d), 1.0), 1.0)
    w = y - u[..., None] * x
    return ratio[..., None] * w


def tangent_from_ambient(space: ModelSpace, x, h):
    """Riemannian gradient direction from an ambient (Euclidean) gradient.

    Hyperbolic gradients are first flipped by J = diag(-1, 1, ..., 1) and then
    projected onto the tangent space of the hyperboloid.
    """
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    _check_shape(space, x, h)
    if space.kind is Kind.EUCLIDEAN:
        return h.copy()
    if space.kind is Kind.SPHERICAL:
        return h - np.sum(x * h, axis=-1, keepdims=True) * x
    v = h.copy()
    v[..., 0] = -v[..., 0]
    return v + minkowski_dot(x, v)[..., None] * x


# ---------------------------------------------------------------------------
# ball / stereographic models


def tan_k(r, k):
    if k < 0:
        s = np.sqrt(-k)
        return np.tanh(s * r) / s
    if k > 0:
        s = np.sqrt(k)
        return np.tan(s * r) / s
    return r


def artan_k(r, k):
    if k < 0:
        s = np.sqrt(-k)
        return np.arctanh(np.minimum(s * r, 1.0 - 1e-15)) / s
    if k > 0:
        s = np.sqrt(k)
        return np.arctan(s * r) / s
    return r


def project_ball(x, k):
    """Clamp points to radius (1 - 1e-7) / sqrt(-k) when ``k < 0``.

    Returns the clamped array and a boolean mask of clamped rows.
    """
    x = np.asarray(x, dtype=float)
    if k >= 0:
        return x, np.zeros(x.shape[:-1], dtype=bool)
    limit = (1.0 - BALL_EPS) / np.sqrt(-k)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    over = norm > limit
    scale = np.where(over, limit / np.maximum(norm, 1e-300), 1.0)
    return x * scale, over[..., 0]


def mobius_add_k(x, y, k):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xy = np.sum(x * y, axis=-1, keepdims=True)
    x2 = np.sum(x * x, axis=-1, keepdims=True)
    y2 = np.sum(y * y, axis=-1, keepdims=True)
    num = (1.0 - 2.0 * k * xy - k * y2) * x + (1.0 + k * x2) * y
    den = 1.0 - 2.0 * k * xy + k * k * x2 * y2
    return num / np.maximum(den, 1e-15)


def exp0_k(v, k):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(n > 1e-15, n, 1.0)
    out = np.where(n > 1e-15, tan_k(safe, k) / safe, 1.0) * v
    return project_ball(out, k)[0]


def log0_k(y, k):
    y = np.asarray(y, dtype=float)
    n = np.linalg.norm(y, axis=-1, keepdims=True)
    safe = np.where(n > 1e-15, n, 1.0)
    return np.where(n > 1e-15, artan_k(safe, k) / safe, 1.0) * y


def dist_k(x, y, k):
    if k == 0:
        return np.linalg.norm(np.asarray(y) - np.asarray(x), axis=-1)
    m = mobius_add_k(-np.asarray(x, dtype=float), y, k)
    return 2.0 * artan_k(np.linalg.norm(m, axis=-1), k)


def _check_c(c):
    if not c > 0:
        raise UsageError(f"ball curvature magnitude must be positive, got {c}")


def mobius_add(c: float, x, y):
    """Mobius addition in the Poincare ball of curvature -c."""
    _check_c(c)
    out, clamped = project_ball(mobius_add_k(x, y, -c), -c)
    if np.any(clamped):
        warnings.warn("mobius_add result clamped inside the ball", NumericClampWarning, stacklevel=2)
    return out


def exp0_ball(c: float, v):
    _check_c(c)
    return exp0_k(v, -c)


def log0_ball(c: float, y):
    _check_c(c)
    return log0_k(y, -c)


def ball_distance(c: float, x, y):
    _check_c(c)
    return dist_k(x, y, -c)


def block_rotate(x, angles):
    """Rotate each coordinate pair (x[2j], x[2j+1]) by ``angles[j]``."""
    x = np.asarray(x, dtype=float)
    angles = np.asarray(angles, dtype=float)
    if x.shape[-1] % 2:
        raise UsageError(f"block_rotate needs an even dimension, got {x.shape[-1]}")
    if angles.shape[-1] != x.shape[-1] // 2:
        raise UsageError(f"expected {x.shape[-1] // 2} angles, got {angles.shape[-1]}")
    pairs = x.reshape(x.shape[:-1] + (-1, 2))
    cos, sin = np.cos(angles), np.sin(angles)
    a, b = pairs[..., 0], pairs[..., 1]
    out = np.stack([cos * a - sin * b, sin * a + cos * b], axis=-1)
    return out.reshape(x.shape)


def to_stereographic(x):
    """Hyperboloid -> Poincare ball, or unit sphere -> stereographic chart."""
    x = np.asarray(x, dtype=float)
    return x[..., 1:] / (1.0 + x[..., :1])


def from_stereographic(b, k):
    """Inverse of :func:`to_stereographic`; ``k = -1`` ball, ``k = +1`` sphere."""
    b = np.asarray(b, dtype=float)
    b2 = np.sum(b * b, axis=-1, keepdims=True)
    den = 1.0 + k * b2
    return np.concatenate([(1.0 - k * b2) / den, 2.0 * b / den], axis=-1)


def model_convert(direction: str, point):
    """Move a hyperbolic point between the hyperboloid and the unit ball.

    ``direction`` is ``"hyperboloid->ball"`` or ``"ball->hyperboloid"``.
    """
    if direction == "hyperboloid->ball":
        return to_stereographic(point)
    if direction == "ball->hyperboloid":
        return from_stereographic(point, -1.0)
    raise UsageError(f"unknown conversion {direction!r}")
