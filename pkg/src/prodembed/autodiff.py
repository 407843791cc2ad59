"""A small reverse-mode autodiff tape over dense 2-D matrices.

No broadcasting: every op checks shapes explicitly.  Each tape supports a
single backward pass.

    tape = Tape()
    w = tape.leaf(np.ones((2, 3)))
    loss = frobenius_sq(matmul(x, w))
    grads = backward(tape, loss)   # {w.id: dL/dw}
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import PoisonedValueError, UsageError

_ids = itertools.count()


class Tensor:
    __slots__ = ("data", "tape", "id", "parents", "vjp", "trainable", "name")

    def __init__(self, data, tape, parents=(), vjp=None, trainable=False, name=None):
        self.data = data
        self.tape = tape
        self.id = next(_ids)
        self.parents = parents
        self.vjp = vjp
        self.trainable = trainable
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return not self.parents

    def item(self) -> float:
        return float(self.data[0, 0])

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, id={self.id})"


class Tape:
    def __init__(self):
        self.nodes = []
        self.kinks = []
        self.consumed = False

    def _as_matrix(self, value):
        a = np.array(value, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2:
            raise UsageError(f"tensors are 2-D matrices, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise PoisonedValueError("non-finite value entering the tape")
        return a

    def leaf(self, value, trainable=True, name=None) -> Tensor:
        t = Tensor(self._as_matrix(value), self, trainable=trainable, name=name)
        self.nodes.append(t)
        return t

    def constant(self, value, name=None) -> Tensor:
        return self.leaf(value, trainable=False, name=name)

    def leaves(self):
        return [t for t in self.nodes if t.is_leaf and t.trainable]

    def activation_pattern(self):
        """Boolean masks of every relu on this tape; a change means a kink was crossed."""
        return tuple(m.tobytes() for m in self.kinks)


def _record(value, parents, vjp):
    tape = parents[0].tape
    for p in parents[1:]:
        if p.tape is not tape:
            raise UsageError("operands live on different tapes")
    if tape.consumed:
        raise UsageError("tape already used for a backward pass")
    if not np.all(np.isfinite(value)):
        raise PoisonedValueError("operation produced a non-finite value")
    out = Tensor(value, tape, parents=tuple(parents), vjp=vjp)
    tape.nodes.append(out)
    return out


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise UsageError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise UsageError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    A, B = a.data, b.data
    return _record(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _record(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _record(a.data - b.data, (a, b), lambda g: (g, -g))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("hadamard", a, b)
    A, B = a.data, b.data
    return _record(A * B, (a, b), lambda g: (g * B, g * A))


def scalar_mul(alpha: float, a: Tensor) -> Tensor:
    alpha = float(alpha)
    return _record(alpha * a.data, (a,), lambda g: (alpha * g,))


def transpose(a: Tensor) -> Tensor:
    return _record(a.data.T.copy(), (a,), lambda g: (g.T,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    a.tape.kinks.append(mask)
    return _record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def row_softmax(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return (p * (g - np.sum(g * p, axis=1, keepdims=True)),)

    return _record(p, (a,), vjp)


def row_normalize(a: Tensor) -> Tensor:
    """Divide each row by its sum (rows must have positive sums)."""
    r = a.data.sum(axis=1, keepdims=True)
    if np.any(r <= 0):
        raise UsageError("row_normalize needs strictly positive row sums")
    out = a.data / r

    def vjp(g):
        return ((g - np.sum(g * out, axis=1, keepdims=True)) / r,)

    return _record(out, (a,), vjp)


def frobenius_sq(a: Tensor) -> Tensor:
    A = a.data
    return _record(np.array([[np.sum(A * A)]]), (a,), lambda g: (2.0 * g[0, 0] * A,))


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise UsageError("sqrt of a negative entry")
    r = np.sqrt(a.data)

    def vjp(g):
        return (np.where(r > 0, g / (2.0 * np.where(r > 0, r, 1.0)), 0.0),)

    return _record(r, (a,), vjp)


def row_entropy_mean(a: Tensor) -> Tensor:
    """Mean Shannon entropy (nats) of the rows of a row-stochastic matrix."""
    P = a.data
    if np.any(P < 0):
        raise UsageError("row_entropy_mean needs nonnegative entries")
    n = P.shape[0]
    logp = np.log(np.where(P > 0, P, 1.0))
    h = -np.sum(P * logp) / n
    return _record(np.array([[h]]), (a,), lambda g: (-g[0, 0] * (np.where(P > 0, logp, -745.0) + 1.0) / n,))


def concat_cols(parts) -> Tensor:
    parts = list(parts)
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise UsageError(f"concat_cols: row counts differ {[p.shape for p in parts]}")
    widths = np.cumsum([0] + [p.shape[1] for p in parts])

    def vjp(g):
        return tuple(g[:, widths[i] : widths[i + 1]] for i in range(len(parts)))

    return _record(np.concatenate([p.data for p in parts], axis=1), tuple(parts), vjp)


def backward(tape: Tape, loss: Tensor) -> dict:
    """Gradients of a scalar ``loss`` for every trainable leaf, keyed by id."""
    if loss.shape != (1, 1):
        raise UsageError(f"loss must be a 1x1 tensor, got {loss.shape}")
    if loss.tape is not tape:
        raise UsageError("loss was not recorded on this tape")
    if tape.consumed:
        raise UsageError("backward already ran on this tape")
    tape.consumed = True
    grads = {loss.id: np.ones((1, 1))}
    for node in reversed(tape.nodes):
        g = grads.get(node.id)
        if g is None or node.is_leaf:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + pg
            else:
                grads[parent.id] = pg
    return {
        t.id: grads.get(t.id, np.zeros_like(t.data))
        for t in tape.nodes
        if t.is_leaf and t.trainable
    }


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    checked: int
    excluded: int
    tolerance: float


def grad_check(f, leaves: dict, tolerance=1e-5, step=1e-5, floor=1e-8) -> GradCheckReport:
    """Compare tape gradients of ``f`` against central differences.

    ``f(tape, tensors)`` builds the computation from a dict of leaf tensors
    and returns the scalar loss.  Entries whose perturbation flips any relu
    mask sit on a kink and are excluded from the comparison.
    """
    leaves = {k: np.array(v, dtype=float) for k, v in leaves.items()}

    def run(values):
        tape = Tape()
        ts = {k: tape.leaf(v, name=k) for k, v in values.items()}
        loss = f(tape, ts)
        return tape, ts, loss

    tape, ts, loss = run(leaves)
    pattern = tape.activation_pattern()
    analytic = backward(tape, loss)
    worst, checked, excluded = 0.0, 0, 0
    for name, value in leaves.items():
        ga = analytic[ts[name].id]
        for idx in np.ndindex(value.shape):
            vals = {}
            for sign in (1, -1):
                pert = dict(leaves)
                pert[name] = value.copy()
                pert[name][idx] += sign * step
                t, _, out = run(pert)
                vals[sign] = (out.item(), t.activation_pattern())
            if vals[1][1] != pattern or vals[-1][1] != pattern:
                excluded += 1
                continue
            numeric = (vals[1][0] - vals[-1][0]) / (2 * step)
            err = abs(ga[idx] - numeric) / max(abs(ga[idx]), abs(numeric), floor)
            worst = max(worst, err)
            checked += 1
    return GradCheckReport(worst, worst <= tolerance, checked, excluded, tolerance)
