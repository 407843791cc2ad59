"""Riemannian SGD over product points and Adam for Euclidean parameters."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import DivergedError, PoisonedValueError, UsageError
from .product import Signature

log = logging.getLogger(__name__)


@dataclass
class RsgdConfig:
    lr: float = 0.3
    clip: float = 1.0
    epochs: int = 1000
    burnin: int = 10
    seed: int = 0
    decay: float = 0.01  # lr multiplier reached at the last epoch (1.0 = constant)

    def __post_init__(self):
        if not self.lr > 0:
            raise UsageError(f"opt.lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise UsageError(f"opt.epochs must be >= 1, got {self.epochs}")
        if not 0 < self.decay <= 1:
            raise UsageError(f"opt.decay must lie in (0, 1], got {self.decay}")
        if self.burnin < 0:
            raise UsageError(f"opt.burnin must be >= 0, got {self.burnin}")

    def lr_at(self, epoch: int) -> float:
        """lr/10 during burn-in, then geometric decay from lr to lr * decay."""
        if epoch < self.burnin:
            return self.lr / 10.0
        return self.lr * self.decay ** (epoch / max(self.epochs - 1, 1))


def rsgd_step(sig: Signature, points, ambient_grads, cfg: RsgdConfig, lr=None):
    """One Riemannian SGD step for a table of product points (rows).

    Per component: project the ambient gradient to the tangent space (with
    the J flip on hyperbolic components), clip its norm to ``cfg.clip``, and
    move along ``Exp_x(-lr * v)``.  Rows with non-finite gradients are left
    untouched.
    """
    lr = cfg.lr if lr is None else lr
    x = np.asarray(points, dtype=float)
    h = np.asarray(ambient_grads, dtype=float)
    if x.shape != h.shape or x.shape[-1] != sig.total_ambient_dim:
        raise UsageError(f"points {x.shape} and gradients {h.shape} must match signature {sig.text}")
    squeeze = x.ndim == 1
    x, h = np.atleast_2d(x), np.atleast_2d(h)
    bad = ~np.all(np.isfinite(h), axis=1)
    if bad.any():
        log.warning("rsgd_step: skipped %d points with non-finite gradients", int(bad.sum()))
        h = np.where(bad[:, None], 0.0, h)
    out = x.copy()
    for c, sl in zip(sig.components, sig.slices):
        xc = x[:, sl]
        v = geo.tangent_from_ambient(c, xc, h[:, sl])
        norm = geo.tangent_norm(c, v)
        if cfg.clip is not None and cfg.clip > 0:
            v = v * np.minimum(1.0, cfg.clip / np.maximum(norm, 1e-300))[:, None]
        move = norm > 0
        if not move.any():
            continue
        try:
            stepped = geo.exp_map(c, xc[move], -lr * v[move], check=False)
            stepped = geo.renormalize(c, stepped, check=True)
        except DivergedError as exc:
            raise DivergedError(f"{exc} (component {c}, lr={lr})") from None
        out[np.flatnonzero(move), sl] = stepped
    return out[0] if squeeze else out


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> dict:
    """Bias-corrected Adam update; returns new parameter arrays."""
    for k, g in grads.items():
        if np.shape(g) != np.shape(params[k]):
            raise UsageError(f"gradient for {k} has shape {np.shape(g)}, parameter {np.shape(params[k])}")
        if not np.all(np.isfinite(g)):
            raise PoisonedValueError(f"non-finite gradient for {k}")
    state.step += 1
    b1, b2, t = state.beta1, state.beta2, state.step
    out = dict(params)
    for k, g in grads.items():
        m = state.m.get(k, np.zeros_like(g))
        v = state.v.get(k, np.zeros_like(g))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[k], state.v[k] = m, v
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        out[k] = params[k] - lr * mhat / (np.sqrt(vhat) + state.eps)
    return out
