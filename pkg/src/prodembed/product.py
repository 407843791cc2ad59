"""Weighted products of model spaces.

A :class:`Signature` is an ordered tuple of component spaces together with a
softmax-normalised weight vector ``s`` and a global length ``scale``.  The
squared product distance is

    d_P^2(x, y) = scale^2 * sum_k s_k * dist_k^2(x^k, y^k)

With ``scale = 1`` this is exactly the weighted distance; the scale restores the
overall length direction that softmax normalisation removes, so that
``scale^2 * s_k`` plays the role of a per-component squared curvature radius.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .errors import ParseError, UsageError
from .geometry import Kind, ModelSpace

_TERM = re.compile(r"\s*([A-Za-z]?)(\d*)(?:\*(\d*))?\s*")


def softmax(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - np.max(z))
    return e / e.sum()


@dataclass(frozen=True)
class Signature:
    components: tuple
    weights: tuple
    scale: float = 1.0
    slices: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.components) < 1:
            raise UsageError("a signature needs at least one component")
        w = tuple(float(v) for v in self.weights)
        if len(w) != len(self.components):
            raise UsageError("one weight per component is required")
        if min(w) <= 0 or abs(sum(w) - 1.0) > 1e-9:
            raise UsageError(f"weights must be positive and sum to 1, got {w}")
        object.__setattr__(self, "weights", w)
        bounds, start = [], 0
        for comp in self.components:
            bounds.append(slice(start, start + comp.ambient_dim))
            start += comp.ambient_dim
        object.__setattr__(self, "slices", tuple(bounds))

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def total_ambient_dim(self) -> int:
        return sum(c.ambient_dim for c in self.components)

    @property
    def total_dim(self) -> int:
        return sum(c.dim for c in self.components)

    @property
    def text(self) -> str:
        return ",".join(str(c) for c in self.components)

    @property
    def s(self) -> np.ndarray:
        return np.array(self.weights)

    def describe(self) -> str:
        return " x ".join(f"{w:.3f} {c}" for w, c in zip(self.weights, self.components))

    def base_point(self) -> np.ndarray:
        return np.concatenate([c.base_point() for c in self.components])


def parse_signature(text: str) -> Signature:
    """Parse ``h2,s1`` / ``h10*3,s10*2`` style strings (uniform weights)."""
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty signature", 0)
    comps = []
    offset = 0
    for term in text.split(","):
        m = _TERM.fullmatch(term)
        where = offset + (len(term) - len(term.lstrip()))
        if m is None:
            raise ParseError(f"malformed term {term!r}", where)
        letter, dim, rep = m.groups()
        if letter.lower() not in ("h", "s", "e") or not letter:
            raise ParseError(f"unknown space kind in {term.strip()!r} (expected h, s or e)", where)
        if not dim:
            raise ParseError(f"missing dimension in {term.strip()!r}", where)
        if int(dim) == 0:
            raise ParseError(f"zero dimension in {term.strip()!r}", where)
        count = 1
        if rep is not None:
            if not rep or int(rep) == 0:
                raise ParseError(f"bad repetition count in {term.strip()!r}", where)
            count = int(rep)
        comps.extend([ModelSpace(Kind(letter.lower()), int(dim))] * count)
        offset += len(term) + 1
    n = len(comps)
    return Signature(tuple(comps), (1.0 / n,) * n)


def set_weights(sig: Signature, raw_scores) -> Signature:
    raw = np.asarray(raw_scores, dtype=float)
    if raw.shape != (sig.n_components,):
        raise UsageError(f"expected {sig.n_components} scores, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise UsageError("weight scores must be finite")
    return replace(sig, weights=tuple(softmax(raw)))


def with_scale(sig: Signature, scale: float) -> Signature:
    if not scale > 0:
        raise UsageError(f"scale must be positive, got {scale}")
    return replace(sig, scale=float(scale))


def _check(sig, *points):
    for p in points:
        if np.shape(p)[-1:] != (sig.total_ambient_dim,):
            raise UsageError(
                f"point has shape {np.shape(p)}, signature {sig.text} needs {sig.total_ambient_dim} coordinates"
            )


def component_sq_distances(sig: Signature, p, q) -> np.ndarray:
    """Per-component squared distances, shape ``(..., N)``."""
    _check(sig, p, q)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return np.stack(
        [geo.distance(c, p[..., sl], q[..., sl], check=False) ** 2 for c, sl in zip(sig.components, sig.slices)],
        axis=-1,
    )


def weighted_sq_distance(sig: Signature, p, q):
    return sig.scale**2 * component_sq_distances(sig, p, q) @ sig.s


def product_distance(sig: Signature, p, q):
    return np.sqrt(weighted_sq_distance(sig, p, q))


def sq_distance_gradient(sig: Signature, p, q):
    """Ambient gradient of ``weighted_sq_distance`` w.r.t. ``p``.

    Returns ``(grad, comp_sq)`` where ``comp_sq[..., k]`` is the unweighted
    squared distance of component ``k`` (the partial derivative of d_P^2 with
    respect to ``s_k`` up to the ``scale^2`` factor).
    """
    _check(sig, p, q)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    grad = np.empty(np.broadcast(p, q).shape)
    comp_sq = []
    for k, (c, sl) in enumerate(zip(sig.components, sig.slices)):
        d2, g = geo.sq_distance_grad(c, p[..., sl], q[..., sl])
        grad[..., sl] = sig.scale**2 * sig.weights[k] * g
        comp_sq.append(d2)
    return grad, np.stack(comp_sq, axis=-1)


def random_product_point(sig: Signature, scale: float, rng, size=None):
    """Exp-map a Gaussian tangent vector (std ``scale``) at every base point."""
    if not 0 <= scale <= 0.5:
        raise UsageError(f"initialisation scale must lie in [0, 0.5], got {scale}")
    shape = () if size is None else (size,)
    parts = []
    for c in sig.components:
        base = np.broadcast_to(c.base_point(), shape + (c.ambient_dim,))
        v = np.zeros(shape + (c.ambient_dim,))
        noise = rng.normal(0.0, scale, size=shape + (c.dim,))
        if c.kind is Kind.EUCLIDEAN:
            v[...] = noise
        else:
            v[..., 1:] = noise
        parts.append(geo.exp_map(c, base, v, check=False))
    return np.concatenate(parts, axis=-1)


def project_gradient(sig: Signature, p, h):
    """Apply :func:`geometry.tangent_from_ambient` component-wise."""
    out = np.empty_like(np.asarray(h, dtype=float))
    for c, sl in zip(sig.components, sig.slices):
        out[..., sl] = geo.tangent_from_ambient(c, p[..., sl], h[..., sl])
    return out


def check_product_point(sig: Signature, p, tol: float = geo.POINT_TOL):
    _check(sig, p)
    for c, sl in zip(sig.components, sig.slices):
        geo.check_point(c, np.asarray(p)[..., sl], tol)
