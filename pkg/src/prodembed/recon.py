"""Graph reconstruction: fit a weighted product embedding to hop distances.

Per epoch the pairs are shuffled into batches.  Each batch contributes the
distortion loss

    L_base = sum_pairs |scale^2 * sum_k s_k dist_k^2 / d_G^2 - 1|

whose ambient gradient drives an R-SGD step on the points.  The gradient with
respect to ``s`` (from the cached per-component squared distances) and the
log-scale is accumulated over the epoch.  Every ``gating.period`` epochs the
gate is run forward, ``L_LP + L_e`` is added, and Adam updates the gate
parameters; the new ``s`` replaces the signature weights.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh

from . import __version__
from . import geometry as geo
from .errors import CheckpointError, DivergedError, UsageError
from .gating import GatingConfig, GatingParams, GraphOperands, gating_backward, gating_forward, init_gating
from .graphs import Graph, apsp, node_features
from .metrics import EvalReport, avg_distortion, map_score, pair_from_index
from .optim import AdamState, RsgdConfig, adam_step, rsgd_step
from .product import Signature, parse_signature, random_product_point, sq_distance_gradient, with_scale

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"PMCK"
CHECKPOINT_VERSION = 1


@dataclass
class ReconConfig:
    signature: str = "h2,s1"
    gating: bool = True
    batch_size: int = 10_000
    init: str = "mds"
    init_std: float = 0.1
    init_noise: float = 0.01
    scale_lr: float = 0.01
    opt: RsgdConfig = field(default_factory=RsgdConfig)
    gate: GatingConfig = field(default_factory=GatingConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if self.init not in ("mds", "random"):
            raise UsageError(f"init must be 'mds' or 'random', got {self.init!r}")

    @property
    def seed(self):
        return self.opt.seed

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    signature: str
    weights: list
    scale: float
    seed: int
    trace: list
    final: dict
    config: dict
    build: str = f"prodembed {__version__}"
    seconds: float = 0.0

    TRACE_FIELDS = ("epoch", "l_base", "l_lp", "l_e")

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def trace_csv(self) -> str:
        n = len(self.weights)
        head = list(self.TRACE_FIELDS) + [f"s{k + 1}" for k in range(n)]
        lines = [",".join(head)]
        for row in self.trace:
            vals = [str(row["epoch"])] + [repr(row[k]) for k in self.TRACE_FIELDS[1:]]
            vals += [repr(v) for v in row["s"]]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"


@dataclass
class ReconState:
    sig: Signature
    points: np.ndarray
    gate: GatingParams | None
    epoch: int = 0


def _batches(n, batch_size, rng):
    total = n * (n - 1) // 2
    if total <= batch_size:
        i, j = np.triu_indices(n, 1)
        yield i, j
        return
    order = rng.permutation(total)
    for s in range(0, total, batch_size):
        yield pair_from_index(order[s : s + batch_size], n)


def _scatter(n, idx, rows):
    out = np.zeros((n, rows.shape[1]))
    np.add.at(out, idx, rows)
    return out


def batch_objective(sig, points, i, j, dg2):
    """Distortion loss of a pair batch with gradients.

    Returns ``(loss_sum, point_grad, grad_s, grad_log_scale)``; gradients are
    of the summed loss.
    """
    gi, comp = sq_distance_gradient(sig, points[i], points[j])
    gj, _ = sq_distance_gradient(sig, points[j], points[i])
    s2 = sig.scale**2
    dp2 = s2 * comp @ sig.s
    r = dp2 / dg2
    coef = np.sign(r - 1.0) / dg2
    grad = _scatter(len(points), i, coef[:, None] * gi) + _scatter(len(points), j, coef[:, None] * gj)
    grad_s = s2 * coef @ comp
    grad_log_scale = 2.0 * float(coef @ dp2)
    return float(np.abs(r - 1.0).sum()), grad, grad_s, grad_log_scale


def _initial_scale(sig, points, dist):
    n = len(points)
    i, j = np.triu_indices(n, 1)
    if len(i) > 20_000:
        keep = np.linspace(0, len(i) - 1, 20_000).astype(int)
        i, j = i[keep], j[keep]
    from .product import component_sq_distances

    comp = component_sq_distances(sig, points[i], points[j]) @ sig.s
    ratio = dist[i, j].astype(float) ** 2 / np.maximum(comp, 1e-12)
    return float(np.sqrt(np.median(ratio)))


def mds_coordinates(dist, k, rng):
    """Top-``k`` classical MDS coordinates of a hop-distance matrix."""
    n = len(dist)
    k = min(k, n - 1)
    d2 = np.asarray(dist, dtype=float) ** 2
    row = d2.mean(axis=1)
    B = -0.5 * (d2 - row[:, None] - row[None, :] + row.mean())
    if n <= 1000:
        w, V = eigh(B, subset_by_index=[n - k, n - 1])
    else:
        w, V = eigsh(B, k=k, which="LA", v0=rng.normal(size=n))
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    # fix eigenvector signs so runs do not depend on the solver's choice
    V = V * np.where(V[np.abs(V).argmax(axis=0), np.arange(V.shape[1])] < 0, -1.0, 1.0)
    return V * np.sqrt(np.maximum(w, 0.0))


def mds_init(sig: Signature, dist, rng, noise=0.01):
    """Place nodes using classical MDS of the graph distances.

    Every component reuses the leading MDS axes: spherical components take
    the direction of the first ``dim + 1`` coordinates, flat and hyperbolic
    ones a tangent vector at the base point (coordinates divided by the
    diameter).  Small seeded noise breaks ties.
    """
    n = len(dist)
    width = max(c.ambient_dim if c.kind is geo.Kind.SPHERICAL else c.dim for c in sig.components)
    Y = mds_coordinates(dist, width, rng)
    if Y.shape[1] < width:
        Y = np.concatenate([Y, np.zeros((n, width - Y.shape[1]))], axis=1)
    Y = Y / max(float(np.max(dist)), 1.0)
    parts = []
    for c in sig.components:
        if c.kind is geo.Kind.SPHERICAL:
            z = Y[:, : c.ambient_dim] + noise * rng.normal(size=(n, c.ambient_dim))
            parts.append(z / np.linalg.norm(z, axis=1, keepdims=True))
            continue
        z = Y[:, : c.dim] + noise * rng.normal(size=(n, c.dim))
        if c.kind is geo.Kind.EUCLIDEAN:
            parts.append(z)
        else:
            v = np.concatenate([np.zeros((n, 1)), z], axis=1)
            parts.append(geo.exp_map(c, np.tile(c.base_point(), (n, 1)), v, check=False))
    return np.concatenate(parts, axis=1)


def initial_points(sig, dist, cfg, rng):
    if cfg.init == "mds":
        return mds_init(sig, dist, rng, cfg.init_noise)
    return random_product_point(sig, cfg.init_std, rng, size=len(dist))


def train_reconstruction(graph: Graph, cfg: ReconConfig, dist=None, checkpoint_path=None):
    """Fit an embedding of ``graph``; returns ``(points, signature, report)``."""
    t0 = time.perf_counter()
    if dist is None:
        dist = apsp(graph)
    rng = np.random.default_rng(cfg.seed)
    sig = parse_signature(cfg.signature)
    points = initial_points(sig, dist, cfg, rng)
    gate = None
    gate_state = AdamState()
    operands = None
    out = None
    if cfg.gating:
        feats = node_features(graph, cfg.gate.curvature_budget, rng, dist=dist)
        operands = GraphOperands.build(graph, feats)
        gate = init_gating(graph.n, feats.shape[1], sig.n_components, cfg.gate, rng)
        out = gating_forward(operands, None, gate)
        sig = replace(sig, weights=tuple(out.s))
    sig = with_scale(sig, _initial_scale(sig, points, dist))
    log_scale = np.log(sig.scale)
    scale_state = AdamState()
    n_pairs = graph.n * (graph.n - 1) // 2
    trace = []
    last_good = None
    l_lp = out.l_lp if out is not None else 0.0
    l_e = out.l_e if out is not None else 0.0
    grad_s = np.zeros(sig.n_components)
    for epoch in range(cfg.opt.epochs):
        lr = cfg.opt.lr_at(epoch)
        total = 0.0
        grad_ls = 0.0
        for i, j in _batches(graph.n, cfg.batch_size, rng):
            dg2 = dist[i, j].astype(float) ** 2
            loss, grad, gs, gl = batch_objective(sig, points, i, j, dg2)
            if not np.isfinite(loss):
                raise DivergedError(f"L_base became non-finite at epoch {epoch}; last good checkpoint: {last_good}")
            points = rsgd_step(sig, points, grad, cfg.opt, lr=lr)
            total += loss
            grad_s += gs
            grad_ls += gl
        l_base = total / n_pairs
        log_scale = adam_step({"log_scale": log_scale}, {"log_scale": np.asarray(grad_ls / n_pairs)}, scale_state, cfg.scale_lr)["log_scale"]
        sig = with_scale(sig, float(np.exp(log_scale)))
        if gate is not None and (epoch + 1) % cfg.gate.period == 0:
            upstream = grad_s / cfg.gate.period
            grad_s = np.zeros(sig.n_components)
            grads = gating_backward(out, upstream, cfg.gate.aux_weight)
            gate_lr = cfg.gate.lr * lr / cfg.opt.lr
            gate = gate.replace_arrays(adam_step(gate.as_dict(), grads, gate_state, gate_lr))
            out = gating_forward(operands, None, gate)
            sig = replace(sig, weights=tuple(out.s))
            l_lp, l_e = out.l_lp, out.l_e
        trace.append({"epoch": epoch, "l_base": l_base, "l_lp": l_lp, "l_e": l_e, "s": list(sig.weights)})
        if checkpoint_path is not None and (epoch + 1) % 100 == 0:
            save_checkpoint(checkpoint_path, points, sig, gate)
            last_good = str(checkpoint_path)
    final = evaluate_embedding(graph, sig, points, dist=dist)
    report = TrainReport(
        signature=sig.text,
        weights=list(sig.weights),
        scale=sig.scale,
        seed=cfg.seed,
        trace=trace,
        final=final.to_dict(),
        config=cfg.to_dict(),
        seconds=time.perf_counter() - t0,
    )
    return points, sig, report


def evaluate_embedding(graph: Graph, sig: Signature, points, dist=None) -> EvalReport:
    t0 = time.perf_counter()
    if dist is None:
        dist = apsp(graph)
    d_avg, n_pairs = avg_distortion(dist, sig, points, return_pairs=True)
    m = map_score(graph, sig, points)
    return EvalReport(
        d_avg=d_avg,
        map=m,
        n_pairs=n_pairs,
        signature=sig.text,
        weights=list(sig.weights),
        seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# checkpoints


def signature_hash(sig: Signature) -> str:
    return hashlib.sha256(sig.text.encode()).hexdigest()[:16]


def save_checkpoint(path, points, sig: Signature, gate: GatingParams | None = None):
    arrays = {"points": np.asarray(points)}
    meta = {
        "version": CHECKPOINT_VERSION,
        "signature": sig.text,
        "weights": list(sig.weights),
        "scale": sig.scale,
        "hash": signature_hash(sig),
    }
    if gate is not None:
        arrays.update({f"gate_{k}": v for k, v in gate.as_dict().items()})
        meta["gate"] = {"heads": gate.heads, "widths": list(gate.widths), "levels": len(gate.W1)}
    buf = io.BytesIO()
    np.savez(buf, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(CHECKPOINT_MAGIC + CHECKPOINT_VERSION.to_bytes(4, "little") + buf.getvalue())
    tmp.replace(path)


def load_checkpoint(path, expect_signature: str | None = None):
    """Returns ``(points, signature, gate_or_None)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC or len(raw) < 8:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version = int.from_bytes(raw[4:8], "little")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {CHECKPOINT_VERSION}")
    try:
        with np.load(io.BytesIO(raw[8:])) as z:
            data = {k: z[k] for k in z.files}
        meta = json.loads(bytes(data.pop("meta")).decode())
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable or truncated checkpoint ({exc})") from None
    sig = parse_signature(meta["signature"])
    if meta["hash"] != signature_hash(sig):
        raise CheckpointError(f"{path}: signature hash mismatch")
    if expect_signature is not None and signature_hash(parse_signature(expect_signature)) != meta["hash"]:
        raise CheckpointError(
            f"{path}: checkpoint was written for signature {meta['signature']!r}, not {expect_signature!r} (hash mismatch)"
        )
    sig = with_scale(replace(sig, weights=tuple(meta["weights"])), meta["scale"])
    gate = None
    if "gate" in meta:
        g = meta["gate"]
        arrays = {k[len("gate_"):]: v for k, v in data.items() if k.startswith("gate_")}
        L = g["levels"]
        gate = GatingParams(
            W1=[arrays[f"W1_{i}"] for i in range(L)],
            W2=[arrays[f"W2_{i}"] for i in range(L)],
            U=arrays["U"],
            heads=g["heads"],
            widths=tuple(g["widths"]),
        )
    return data["points"], sig, gate
