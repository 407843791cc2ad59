"""Pooling GNN + attention gate that maps a graph to component weights ``s``.

Each level runs two one-layer GCNs on (propagation matrix, features):

    S   = row_softmax(P X W1)          soft assignment, n_{l-1} x n_l
    X'  = S^T relu(P X W2)             pooled features
    A'  = S^T A S                      coarsened adjacency

The final width is the number of product components N.  The product of all
assignment matrices (original node -> component memberships) is scored
against an attention vector ``U`` split into ``k`` heads; per-component head
scores are averaged and a softmax over components gives ``s``.

Auxiliary losses per level: ``||A - S S^T||_F`` and the mean row entropy of S.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, UsageError
from .graphs import Graph, normalized_adjacency

log = logging.getLogger(__name__)


@dataclass
class GatingConfig:
    levels: int = 1
    hidden: int = 16
    heads: int = 4
    aux_weight: float = 1.0
    lr: float = 0.05
    period: int = 5
    init_scale: float = 0.1
    curvature_budget: int = 200


@dataclass
class GatingParams:
    W1: list
    W2: list
    U: np.ndarray
    heads: int
    widths: tuple

    def as_dict(self) -> dict:
        out = {f"W1_{i}": w for i, w in enumerate(self.W1)}
        out.update({f"W2_{i}": w for i, w in enumerate(self.W2)})
        out["U"] = self.U
        return out

    def replace_arrays(self, arrays: dict) -> "GatingParams":
        L = len(self.W1)
        return GatingParams(
            W1=[arrays[f"W1_{i}"] for i in range(L)],
            W2=[arrays[f"W2_{i}"] for i in range(L)],
            U=arrays["U"],
            heads=self.heads,
            widths=self.widths,
        )


@dataclass
class GraphOperands:
    """Dense matrices the gate consumes, precomputed once per graph."""

    A: np.ndarray
    A_hat: np.ndarray
    X: np.ndarray

    @classmethod
    def build(cls, graph: Graph, features) -> "GraphOperands":
        return cls(graph.adjacency(), normalized_adjacency(graph), np.asarray(features, dtype=float))


@dataclass
class GatingOutput:
    S: list
    A: list
    X: list
    raw_scores: np.ndarray
    s: np.ndarray
    l_lp: float
    l_e: float
    _tape: ad.Tape = field(repr=False, default=None)
    _handles: dict = field(repr=False, default_factory=dict)


def _level_widths(n, n_components, levels):
    widths = []
    width = n
    for _ in range(levels - 1):
        width = max(n_components + 1, width // 4)
        widths.append(width)
    widths.append(n_components)
    if any(b >= a for a, b in zip([n] + widths, widths)) and levels > 1:
        raise ConfigError(f"graph with {n} nodes is too small for {levels} pooling levels")
    return tuple(widths)


def _divisor_at_most(n, k):
    for d in range(min(k, n), 0, -1):
        if n % d == 0:
            return d
    return 1


def init_gating(n_nodes, n_features, n_components, cfg: GatingConfig, rng) -> GatingParams:
    """Uniform(-init_scale, init_scale) parameters.

    The attention vector has one entry per original node, so the head count is
    lowered to the largest divisor of ``n_nodes`` not above ``cfg.heads``.
    """
    if cfg.levels < 1 or cfg.hidden < 1 or cfg.heads < 1:
        raise ConfigError("gating.levels, gating.hidden and gating.heads must be >= 1")
    widths = _level_widths(n_nodes, n_components, cfg.levels)
    heads = _divisor_at_most(n_nodes, cfg.heads)
    if heads != cfg.heads:
        log.info("gating heads lowered from %d to %d to divide %d nodes", cfg.heads, heads, n_nodes)
    a = cfg.init_scale
    W1, W2 = [], []
    f_in = n_features
    for w in widths:
        W1.append(rng.uniform(-a, a, size=(f_in, w)))
        W2.append(rng.uniform(-a, a, size=(f_in, cfg.hidden)))
        f_in = cfg.hidden
    U = rng.uniform(-a, a, size=(n_nodes, 1))
    return GatingParams(W1, W2, U, heads, widths)


def gcn_forward(P: ad.Tensor, X: ad.Tensor, W: ad.Tensor, activate=True) -> ad.Tensor:
    """One propagation ``relu(P X W)``; ``activate=False`` returns the logits."""
    out = ad.matmul(ad.matmul(P, X), W)
    return ad.relu(out) if activate else out


def pool_step(P, A, X, W1, W2):
    S = ad.row_softmax(gcn_forward(P, X, W1, activate=False))
    St = ad.transpose(S)
    X_next = ad.matmul(St, gcn_forward(P, X, W2))
    A_next = ad.matmul(ad.matmul(St, A), S)
    return S, X_next, A_next


def attention_pool(M: ad.Tensor, U: ad.Tensor, heads: int):
    """Raw per-component scores and ``s`` from membership columns of ``M``.

    Head j scores component t by ``M[slice_j, t] . U[slice_j]``; averaging the
    k head scores equals ``M^T U / k`` because the slices partition the rows.
    """
    if M.shape[0] % heads:
        raise ConfigError(f"{heads} heads do not divide attention length {M.shape[0]}")
    if U.shape != (M.shape[0], 1):
        raise UsageError(f"attention vector shape {U.shape} does not match {M.shape}")
    raw = ad.scalar_mul(1.0 / heads, ad.matmul(ad.transpose(M), U))
    s = ad.row_softmax(ad.transpose(raw))
    return raw, s


def aux_losses(S: ad.Tensor, A_prev: ad.Tensor):
    lp = ad.sqrt(ad.frobenius_sq(ad.sub(A_prev, ad.matmul(S, ad.transpose(S)))))
    return lp, ad.row_entropy_mean(S)


def gating_forward(graph, features, params: GatingParams, tape=None) -> GatingOutput:
    ops = graph if isinstance(graph, GraphOperands) else GraphOperands.build(graph, features)
    tape = tape or ad.Tape()
    handles = {k: tape.leaf(v, name=k) for k, v in params.as_dict().items()}
    P = tape.constant(ops.A_hat)
    A = tape.constant(ops.A)
    X = tape.constant(ops.X)
    Ss, As, Xs = [], [], []
    lp_terms, le_terms = [], []
    M = None
    for level in range(len(params.W1)):
        if level > 0:
            P = ad.row_normalize(A)
        S, X, A_next = pool_step(P, A, X, handles[f"W1_{level}"], handles[f"W2_{level}"])
        lp, le = aux_losses(S, A)
        lp_terms.append(lp)
        le_terms.append(le)
        M = S if M is None else ad.matmul(M, S)
        A = A_next
        Ss.append(S.data)
        As.append(A.data)
        Xs.append(X.data)
    raw, s = attention_pool(M, handles["U"], params.heads)
    l_lp, l_e = lp_terms[0], le_terms[0]
    for a, b in zip(lp_terms[1:], le_terms[1:]):
        l_lp, l_e = ad.add(l_lp, a), ad.add(l_e, b)
    handles.update(_s=s, _lp=l_lp, _le=l_e)
    return GatingOutput(
        S=Ss,
        A=As,
        X=Xs,
        raw_scores=raw.data[:, 0].copy(),
        s=s.data[0].copy(),
        l_lp=l_lp.item(),
        l_e=l_e.item(),
        _tape=tape,
        _handles=handles,
    )


def gating_backward(output: GatingOutput, upstream, aux_weight: float = 1.0) -> dict:
    """Parameter gradients of ``upstream . s + aux_weight * (L_LP + L_e)``.

    ``upstream`` is dL_base/ds (treated as a constant).  Gradients are keyed
    like :meth:`GatingParams.as_dict`.
    """
    tape, h = output._tape, output._handles
    if tape is None:
        raise UsageError("gating output carries no tape")
    if tape.consumed:
        raise UsageError("gating_backward already ran for this forward pass")
    g = np.asarray(upstream, dtype=float).reshape(-1, 1)
    if g.shape[0] != h["_s"].shape[1]:
        raise UsageError(f"upstream gradient has {g.shape[0]} entries, s has {h['_s'].shape[1]}")
    loss = ad.matmul(h["_s"], tape.constant(g))
    if aux_weight:
        loss = ad.add(loss, ad.scalar_mul(aux_weight, ad.add(h["_lp"], h["_le"])))
    grads = ad.backward(tape, loss)
    return {k: grads[t.id] for k, t in h.items() if not k.startswith("_")}


def gating_loss_value(graph, features, params, upstream, aux_weight=1.0) -> float:
    """Scalar objective matching :func:`gating_backward` (for finite differences)."""
    out = gating_forward(graph, features, params)
    return float(np.dot(out.s, upstream) + aux_weight * (out.l_lp + out.l_e))
