"""Knowledge-graph completion in a weighted product manifold.

Each curved component is handled in its stereographic ball chart (curvature
``k = -1`` for hyperbolic, ``+1`` for spherical); Euclidean components use
``k = 0`` where Mobius addition is ordinary addition.  For a triple
``(h, r, t)`` and component ``k``:

    Q = Rot(x_h (+) exp0(alpha_r), gamma_r) (+) exp0(beta_r)
    d^2 = sum_k s_k dist_k(Q, x_t)^2

and the loss per triple is ``softplus(-Y * (b0_r - d))`` with ``Y = +1`` for
observed triples and ``-1`` for sampled corruptions.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import geometry as geo
from .curvature import curvature_summary, suggest_signature
from .errors import CheckpointError, DivergedError, UsageError
from .gating import GatingConfig, GraphOperands, gating_forward, init_gating
from .graphs import Graph, apsp, node_features
from .metrics import rank_metrics
from .optim import AdamState, RsgdConfig, adam_step, rsgd_step
from .product import Signature, parse_signature, random_product_point

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


# ---------------------------------------------------------------------------
# data


@dataclass
class TripleStore:
    entities: list
    relations: list
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    unseen_test_entities: int = 0
    test_in_train: int = 0

    @property
    def n_entities(self):
        return len(self.entities)

    @property
    def n_relations(self):
        return len(self.relations)

    def all_triples(self):
        return np.concatenate([self.train, self.valid, self.test])

    def known_set(self):
        return {tuple(t) for t in self.all_triples().tolist()}

    def entity_graph(self) -> Graph:
        """Undirected graph over entities with an edge for every training triple."""
        tr = self.train
        return Graph.from_edges(self.n_entities, np.stack([tr[:, 0], tr[:, 2]], axis=1), name="kg-entities")

    def summary(self) -> dict:
        return {
            "entities": self.n_entities,
            "relations": self.n_relations,
            "train": len(self.train),
            "valid": len(self.valid),
            "test": len(self.test),
            "unseen_test_entities": self.unseen_test_entities,
            "test_in_train": self.test_in_train,
        }


def _read_split(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise UsageError(f"{path}:{lineno}: expected 'head<TAB>relation<TAB>tail'")
            rows.append(parts)
    return rows


def build_store(splits: dict) -> TripleStore:
    """Index string triples ``{"train": [(h, r, t), ...], ...}``."""
    ent, rel = {}, {}
    arrays = {}
    for name in SPLITS:
        ids = []
        for h, r, t in splits.get(name, []):
            ids.append((ent.setdefault(h, len(ent)), rel.setdefault(r, len(rel)), ent.setdefault(t, len(ent))))
        arrays[name] = np.array(ids, dtype=np.int64).reshape(-1, 3)
    seen = set(arrays["train"][:, [0, 2]].ravel().tolist())
    test_ents = set(arrays["test"][:, [0, 2]].ravel().tolist())
    unseen = len(test_ents - seen)
    train_set = {tuple(t) for t in arrays["train"].tolist()}
    dup = sum(tuple(t) in train_set for t in arrays["test"].tolist())
    if unseen:
        log.warning("%d test entities never appear in train (ranked anyway)", unseen)
    if dup:
        log.warning("%d test triples also appear in train", dup)
    return TripleStore(
        entities=list(ent),
        relations=list(rel),
        unseen_test_entities=unseen,
        test_in_train=dup,
        **arrays,
    )


def load_triples(directory) -> TripleStore:
    directory = Path(directory)
    splits = {}
    for name in SPLITS:
        path = directory / f"{name}.txt"
        if not path.is_file():
            raise UsageError(f"missing split file {path}")
        splits[name] = _read_split(path)
    store = build_store(splits)
    log.info("loaded %s: %s", directory, store.summary())
    return store


def save_triples(store: TripleStore, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        rows = getattr(store, name)
        text = "".join(f"{store.entities[h]}\t{store.relations[r]}\t{store.entities[t]}\n" for h, r, t in rows)
        tmp = directory / f".{name}.txt.tmp"
        tmp.write_text(text)
        tmp.replace(directory / f"{name}.txt")


def tree_kg(n_entities=200, branching=2, seed=0, valid_frac=0.1, test_frac=0.1) -> TripleStore:
    """Tree-shaped toy KG with ``parent_of`` edges and their ``child_of`` inverses.

    Test and valid triples are drawn so that every entity keeps at least one
    training triple.
    """
    rng = np.random.default_rng(seed)
    triples = []
    for child in range(1, n_entities):
        parent = (child - 1) // branching
        triples.append((f"e{parent}", "parent_of", f"e{child}"))
        triples.append((f"e{child}", "child_of", f"e{parent}"))
    order = rng.permutation(len(triples))
    n_test = int(round(test_frac * len(triples)))
    n_valid = int(round(valid_frac * len(triples)))
    held, train = [], []
    for idx in order:
        h, _, t = triples[idx]
        held.append(triples[idx]) if len(held) < n_test + n_valid else train.append(triples[idx])
    # every entity must still be seen in training
    seen = {e for h, _, t in train for e in (h, t)}
    keep = []
    for tr in held:
        if tr[0] in seen and tr[2] in seen:
            keep.append(tr)
        else:
            train.append(tr)
            seen.update((tr[0], tr[2]))
    return build_store({"train": train, "valid": keep[n_test:], "test": keep[:n_test]})


# ---------------------------------------------------------------------------
# parameters


def _curvature(comp):
    return {geo.Kind.HYPERBOLIC: -1.0, geo.Kind.SPHERICAL: 1.0, geo.Kind.EUCLIDEAN: 0.0}[comp.kind]


@dataclass
class KGParams:
    sig: Signature
    points: np.ndarray  # entities x ambient dims
    alpha: np.ndarray  # relations x intrinsic dims
    beta: np.ndarray
    gamma: np.ndarray  # relations x sum(dim_k // 2)
    b0: np.ndarray  # relations

    def rel_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma, "b0": self.b0}

    def with_rel(self, arrays):
        gamma = np.angle(np.exp(1j * arrays["gamma"]))  # wrap to (-pi, pi]
        gamma = np.where(gamma <= -np.pi, np.pi, gamma)
        return KGParams(self.sig, self.points, arrays["alpha"], arrays["beta"], gamma, arrays["b0"])


def _layout(sig):
    """Per component: (ambient slice, intrinsic slice, angle slice, k)."""
    out, i, a = [], 0, 0
    for comp, sl in zip(sig.components, sig.slices):
        half = comp.dim // 2
        out.append((sl, slice(i, i + comp.dim), slice(a, a + half), _curvature(comp), comp))
        i += comp.dim
        a += half
    return out


def init_kg_params(sig: Signature, n_entities, n_relations, rng, init_std=0.1, b0=1.0) -> KGParams:
    n_angles = sum(c.dim // 2 for c in sig.components)
    return KGParams(
        sig=sig,
        points=random_product_point(sig, init_std, rng, size=n_entities),
        alpha=rng.normal(0.0, init_std * 0.1, size=(n_relations, sig.total_dim)),
        beta=rng.normal(0.0, init_std * 0.1, size=(n_relations, sig.total_dim)),
        gamma=rng.uniform(-0.1, 0.1, size=(n_relations, n_angles)),
        b0=np.full(n_relations, float(b0)),
    )


def entity_chart(comp, x):
    """Ambient entity coordinates -> ball/chart coordinates of one component."""
    if comp.kind is geo.Kind.EUCLIDEAN:
        return x
    return geo.to_stereographic(x)


def _chart_vjp(comp, x, g):
    """Ambient gradient from a chart-coordinate gradient ``g``."""
    if comp.kind is geo.Kind.EUCLIDEAN:
        return g
    den = 1.0 + x[..., :1]
    h0 = -np.sum(g * x[..., 1:], axis=-1, keepdims=True) / den**2
    return np.concatenate([h0, g / den], axis=-1)


# ---------------------------------------------------------------------------
# differentiable building blocks (value, vjp) in the k-stereographic chart


def _tan_k_prime(t, k):
    return 1.0 + k * t * t


def _exp0(v, k):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if k == 0:
        return v, lambda g: g
    safe = np.maximum(n, 1e-12)
    t = geo.tan_k(safe, k)
    f = np.where(n > 1e-6, t / safe, 1.0 + k * n * n / 3.0)
    fp_over_n = np.where(n > 1e-6, (_tan_k_prime(t, k) * safe - t) / safe**3, 2.0 * k / 3.0)
    out = f * v

    def vjp(g):
        return f * g + fp_over_n * np.sum(g * v, axis=-1, keepdims=True) * v

    return out, vjp


def _mobius(x, y, k):
    if k == 0:
        return x + y, lambda g: (g, g)
    xy = np.sum(x * y, axis=-1, keepdims=True)
    x2 = np.sum(x * x, axis=-1, keepdims=True)
    y2 = np.sum(y * y, axis=-1, keepdims=True)
    A = 1.0 - 2.0 * k * xy - k * y2
    B = 1.0 + k * x2
    den = np.maximum(1.0 - 2.0 * k * xy + k * k * x2 * y2, 1e-15)
    out = (A * x + B * y) / den

    def vjp(g):
        gx = np.sum(g * x, axis=-1, keepdims=True)
        gy = np.sum(g * y, axis=-1, keepdims=True)
        go = np.sum(g * out, axis=-1, keepdims=True)
        dx = (A * g - 2 * k * gx * y + 2 * k * gy * x) / den - go / den * (-2 * k * y + 2 * k * k * y2 * x)
        dy = (B * g - 2 * k * gx * (x + y)) / den - go / den * (-2 * k * x + 2 * k * k * x2 * y)
        return dx, dy

    return out, vjp


def _rotate(x, angles):
    m = 2 * angles.shape[-1]
    if m == 0:
        return x, lambda g: (g, np.zeros_like(angles))
    head = geo.block_rotate(x[..., :m], angles)
    out = np.concatenate([head, x[..., m:]], axis=-1)

    def vjp(g):
        gh = g[..., :m]
        gx = np.concatenate([geo.block_rotate(gh, -angles), g[..., m:]], axis=-1)
        pg = gh.reshape(gh.shape[:-1] + (-1, 2))
        po = head.reshape(head.shape[:-1] + (-1, 2))
        ga = -pg[..., 0] * po[..., 1] + pg[..., 1] * po[..., 0]
        return gx, ga

    return out, vjp


def _sq_dist(q, t, k):
    """Squared chart distance and its vjp (w.r.t. ``q`` and ``t``)."""
    if k == 0:
        diff = q - t
        return np.sum(diff * diff, axis=-1), lambda g: (2 * g[..., None] * diff, -2 * g[..., None] * diff)
    # |(-q) (+)_k t|^2 written symmetrically in (q, t) so d(q, t) == d(t, q) bitwise
    diff = q - t
    num = np.sum(diff * diff, axis=-1)
    qt = np.sum(q * t, axis=-1)
    q2 = np.sum(q * q, axis=-1)
    t2 = np.sum(t * t, axis=-1)
    den = np.maximum(1.0 + 2.0 * k * qt + k * k * q2 * t2, 1e-15)
    r2 = num / den
    r = np.sqrt(r2)
    a = geo.artan_k(r, k)
    d2 = 4.0 * a * a
    ratio = np.where(r > 1e-9, a / np.maximum(r, 1e-12), 1.0)

    def vjp(g):
        c = (4.0 * ratio / (1.0 + k * r2) * g)[..., None]  # dd2/dr2
        nd = (num / den**2)[..., None]
        dq = 2.0 * diff / den[..., None] - nd * (2.0 * k * t + 2.0 * k * k * t2[..., None] * q)
        dt = -2.0 * diff / den[..., None] - nd * (2.0 * k * q + 2.0 * k * k * q2[..., None] * t)
        return c * dq, c * dt

    return d2, vjp


# ---------------------------------------------------------------------------
# scoring


def _query(params: KGParams, h, r):
    """Per component chart query points Q(h, r) with their vjps."""
    out = []
    for sl, isl, asl, k, comp in _layout(params.sig):
        xh = entity_chart(comp, params.points[h][..., sl])
        ea, va = _exp0(params.alpha[r][..., isl], k)
        eb, vb = _exp0(params.beta[r][..., isl], k)
        m1, v1 = _mobius(xh, ea, k)
        rot, vr = _rotate(m1, params.gamma[r][..., asl])
        q, v2 = _mobius(rot, eb, k)
        out.append((q, (va, vb, v1, vr, v2)))
    return out


def score_triple(params: KGParams, h, r, t):
    """Distance ``d_r(h, t)``; lower means more plausible."""
    h, r, t = (np.asarray(v, dtype=np.int64) for v in (h, r, t))
    n_e, n_r = len(params.points), len(params.b0)
    if np.any((h < 0) | (h >= n_e) | (t < 0) | (t >= n_e)) or np.any((r < 0) | (r >= n_r)):
        raise UsageError("entity or relation id out of range")
    return np.sqrt(_sq_score(params, h, r, t)[0])


def _sq_score(params, h, r, t):
    s = params.sig.s
    total = 0.0
    parts = []
    for (sl, isl, asl, k, comp), (q, vjps) in zip(_layout(params.sig), _query(params, h, r)):
        xt = entity_chart(comp, params.points[t][..., sl])
        d2, dv = _sq_dist(q, xt, k)
        total = total + s[len(parts)] * d2
        parts.append((d2, dv, vjps))
    return total, parts


def _query_all_heads(params, r):
    """Q(h', r) for every entity ``h'`` (head-corruption ranking)."""
    h = np.arange(len(params.points))
    return [q for q, _ in _query(params, h, np.full(len(h), r))]


def distances_to_all(params, queries):
    """Distances from each per-component query row to every entity."""
    s = params.sig.s
    total = 0.0
    for ci, ((sl, isl, asl, k, comp), q) in enumerate(zip(_layout(params.sig), queries)):
        xt = entity_chart(comp, params.points[:, sl])
        d2, _ = _sq_dist(np.broadcast_to(q, xt.shape), xt, k)
        total = total + s[ci] * d2
    return np.sqrt(total)


# ---------------------------------------------------------------------------
# loss


def softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def triple_loss(params: KGParams, h, r, t, y, use_offset=True):
    """Summed loss over triples and gradients for every parameter block.

    Returns ``(loss, grads)``; ``grads["points"]`` is an ambient gradient
    table shaped like ``params.points``.
    """
    h, r, t = (np.asarray(v, dtype=np.int64) for v in (h, r, t))
    y = np.asarray(y, dtype=float)
    D2, parts = _sq_score(params, h, r, t)
    d = np.sqrt(D2)
    b0 = params.b0[r] if use_offset else np.zeros(len(r))
    z = y * (b0 - d)
    loss = float(np.sum(softplus(-z)))
    w = _sigmoid(-z)  # dl/dz = -w
    dl_dd = y * w
    dl_db0 = -y * w
    dl_dD2 = np.where(d > 1e-12, dl_dd / (2.0 * np.maximum(d, 1e-12)), 0.0)

    grads = {
        "points": np.zeros_like(params.points),
        "alpha": np.zeros_like(params.alpha),
        "beta": np.zeros_like(params.beta),
        "gamma": np.zeros_like(params.gamma),
        "b0": np.zeros_like(params.b0),
    }
    if use_offset:
        np.add.at(grads["b0"], r, dl_db0)
    s = params.sig.s
    for ci, ((sl, isl, asl, k, comp), (d2, dv, (va, vb, v1, vr, v2))) in enumerate(zip(_layout(params.sig), parts)):
        gq, gt = dv(s[ci] * dl_dD2)
        g_rot, g_eb = v2(gq)
        g_m1, g_gamma = vr(g_rot)
        g_xh, g_ea = v1(g_m1)
        np.add.at(grads["alpha"][:, isl], r, va(g_ea))
        np.add.at(grads["beta"][:, isl], r, vb(g_eb))
        if g_gamma.shape[-1]:
            np.add.at(grads["gamma"][:, asl], r, g_gamma)
        ph, pt = params.points[h][:, sl], params.points[t][:, sl]
        np.add.at(grads["points"][:, sl], h, _chart_vjp(comp, ph, g_xh))
        np.add.at(grads["points"][:, sl], t, _chart_vjp(comp, pt, gt))
    return loss, grads


def sample_negatives(store_known: set, positives, n_neg, n_entities, rng, max_tries=20):
    """Corrupt head or tail uniformly (coin flip); resample known triples."""
    pos = np.repeat(np.asarray(positives), n_neg, axis=0)
    neg = pos.copy()
    side = rng.random(len(neg)) < 0.5
    neg[side, 0] = rng.integers(0, n_entities, size=int(side.sum()))
    neg[~side, 2] = rng.integers(0, n_entities, size=int((~side).sum()))
    for _ in range(max_tries):
        bad = np.array([tuple(row) in store_known for row in neg.tolist()])
        if not bad.any():
            break
        idx = np.flatnonzero(bad)
        heads = side[idx]
        neg[idx[heads], 0] = rng.integers(0, n_entities, size=int(heads.sum()))
        neg[idx[~heads], 2] = rng.integers(0, n_entities, size=int((~heads).sum()))
    return neg


def kg_loss_batch(params: KGParams, positives, n_neg, rng, known=None, use_offset=True):
    """Negative-sampling loss of a batch of positive triples and its gradients."""
    if n_neg < 1:
        raise UsageError("need at least one negative per positive")
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    known = known if known is not None else {tuple(t) for t in positives.tolist()}
    neg = sample_negatives(known, positives, n_neg, len(params.points), rng)
    trip = np.concatenate([positives, neg])
    y = np.concatenate([np.ones(len(positives)), -np.ones(len(neg))])
    return triple_loss(params, trip[:, 0], trip[:, 1], trip[:, 2], y, use_offset=use_offset)


# ---------------------------------------------------------------------------
# training and evaluation


@dataclass
class KGConfig:
    signature: str | None = None  # None: suggested from the entity graph curvature
    dim: int = 64
    epochs: int = 100
    batch_size: int = 256
    negatives: int = 10
    lr: float = 0.2
    rel_lr: float = 0.01
    init_std: float = 0.1
    use_offset: bool = True
    gating: bool = True
    filtered: bool = True
    k: int = 3
    seed: int = 0
    curvature_budget: int = 200
    gate: GatingConfig = field(default_factory=GatingConfig)

    def __post_init__(self):
        if self.negatives < 1 or self.batch_size < 1 or self.epochs < 1:
            raise UsageError("kg negatives, batch_size and epochs must be >= 1")


@dataclass
class KGReport:
    signature: str
    weights: list
    seed: int
    trace: list
    metrics: dict
    config: dict
    store: dict
    build: str = f"prodembed {__version__}"
    seconds: float = 0.0

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def trace_csv(self):
        lines = ["epoch,loss"] + [f"{i},{v!r}" for i, v in enumerate(self.trace)]
        return "\n".join(lines) + "\n"


def choose_signature(store: TripleStore, cfg: KGConfig, rng) -> tuple[Signature, dict]:
    """Signature text (given or suggested) and gate-derived weights."""
    graph = store.entity_graph()
    info = {}
    largest = _largest_component(graph)
    dist = apsp(largest)
    if cfg.signature:
        text = cfg.signature
    else:
        summary = curvature_summary(largest, dist, cfg.curvature_budget, rng)
        text = suggest_signature(summary, cfg.dim)
        info["curvature"] = summary.fractions
    sig = parse_signature(text)
    if cfg.gating and sig.n_components > 1:
        feats = node_features(largest, cfg.curvature_budget, rng, dist=dist)
        gate = init_gating(largest.n, feats.shape[1], sig.n_components, cfg.gate, rng)
        out = gating_forward(GraphOperands.build(largest, feats), None, gate)
        sig = Signature(sig.components, tuple(out.s))
    info["signature"] = sig.text
    return sig, info


def _largest_component(graph: Graph) -> Graph:
    from scipy.sparse.csgraph import connected_components

    n_comp, labels = connected_components(graph.to_scipy(), directed=False)
    if n_comp == 1:
        return graph
    keep = np.flatnonzero(labels == np.bincount(labels).argmax())
    remap = -np.ones(graph.n, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    edges = graph.edges()
    mask = (remap[edges[:, 0]] >= 0) & (remap[edges[:, 1]] >= 0)
    log.info("entity graph has %d components; gating uses the largest (%d nodes)", n_comp, len(keep))
    return Graph.from_edges(len(keep), remap[edges[mask]], name=graph.name)


def train_kg(store: TripleStore, cfg: KGConfig, sig: Signature | None = None):
    """Returns ``(params, report)``."""
    if len(store.train) == 0:
        raise UsageError("training split is empty")
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    info = {}
    if sig is None:
        sig, info = choose_signature(store, cfg, rng)
    params = init_kg_params(sig, store.n_entities, store.n_relations, rng, cfg.init_std)
    known = {tuple(t) for t in store.train.tolist()}
    opt = RsgdConfig(lr=cfg.lr, epochs=cfg.epochs, seed=cfg.seed, burnin=0)
    state = AdamState()
    trace = []
    n = len(store.train)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            batch = store.train[order[s : s + cfg.batch_size]]
            loss, grads = kg_loss_batch(params, batch, cfg.negatives, rng, known=known, use_offset=cfg.use_offset)
            if not np.isfinite(loss):
                raise DivergedError(f"KG loss became non-finite at epoch {epoch}")
            scale = 1.0 / len(batch)
            points = rsgd_step(sig, params.points, grads.pop("points"), opt)
            rel = adam_step(params.rel_dict(), {k: v * scale for k, v in grads.items()}, state, cfg.rel_lr)
            params = KGParams(sig, points, params.alpha, params.beta, params.gamma, params.b0).with_rel(rel)
            total += loss
        trace.append(total / (n * (1 + cfg.negatives)))
    metrics = evaluate_kg(params, store, k=cfg.k, filtered=cfg.filtered)
    report = KGReport(
        signature=sig.text,
        weights=list(sig.weights),
        seed=cfg.seed,
        trace=trace,
        metrics=metrics,
        config=asdict(cfg),
        store={**store.summary(), **info},
        seconds=time.perf_counter() - t0,
    )
    return params, report


def _rank(scores, target, exclude):
    """Pessimistic rank of ``scores[target]`` among non-excluded candidates."""
    keep = np.ones(len(scores), dtype=bool)
    keep[list(exclude)] = False
    keep[target] = False
    return 1 + int(np.sum(scores[keep] <= scores[target]))


def compute_ranks(params: KGParams, store: TripleStore, triples=None, filtered=True):
    triples = store.test if triples is None else np.asarray(triples)
    known = store.all_triples()
    tails, heads = {}, {}
    if filtered:
        for h, r, t in known.tolist():
            tails.setdefault((h, r), set()).add(t)
            heads.setdefault((r, t), set()).add(h)
    head_queries = {}
    ranks = []
    for h, r, t in triples.tolist():
        q = [qc[None, :] for qc, _ in _query(params, np.array([h]), np.array([r]))]
        d = distances_to_all(params, [qc[0] for qc in q])
        ranks.append(_rank(d, t, tails.get((h, r), ())))
        if r not in head_queries:
            head_queries[r] = _query_all_heads(params, r)
        dh = _head_distances(params, head_queries[r], t)
        ranks.append(_rank(dh, h, heads.get((r, t), ())))
    return np.array(ranks)


def _head_distances(params, queries, t):
    s = params.sig.s
    total = 0.0
    for ci, ((sl, isl, asl, k, comp), q) in enumerate(zip(_layout(params.sig), queries)):
        xt = entity_chart(comp, params.points[t, sl])
        d2, _ = _sq_dist(q, np.broadcast_to(xt, q.shape), k)
        total = total + s[ci] * d2
    return np.sqrt(total)


def random_mrr(n_candidates) -> float:
    """Expected reciprocal rank of a uniformly random rank in 1..n."""
    return float(np.sum(1.0 / np.arange(1, n_candidates + 1)) / n_candidates)


def evaluate_kg(params: KGParams, store: TripleStore, k=3, filtered=True) -> dict:
    if len(store.test) == 0:
        raise UsageError("test split is empty")
    ranks = compute_ranks(params, store, filtered=filtered)
    mrr, hr = rank_metrics(ranks, k)
    n = store.n_entities
    return {
        "mrr": mrr,
        f"hr@{k}": hr,
        "mean_rank": float(ranks.mean()),
        "n_ranks": int(len(ranks)),
        "filtered": bool(filtered),
        "random_mrr": random_mrr(n),
        "random_mean_rank_inverse": 1.0 / np.ceil((n + 1) / 2),
    }


# ---------------------------------------------------------------------------
# checkpoints

KG_MAGIC = b"PKGC"
KG_VERSION = 1


def _vocab_hash(store: TripleStore) -> str:
    h = hashlib.sha256()
    h.update("\n".join(store.entities).encode())
    h.update(b"\0")
    h.update("\n".join(store.relations).encode())
    return h.hexdigest()[:16]


def save_kg_checkpoint(path, params: KGParams, store: TripleStore):
    meta = {
        "version": KG_VERSION,
        "signature": params.sig.text,
        "weights": list(params.sig.weights),
        "vocab": _vocab_hash(store),
    }
    buf = io.BytesIO()
    np.savez(
        buf,
        meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
        points=params.points,
        **params.rel_dict(),
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(KG_MAGIC + KG_VERSION.to_bytes(4, "little") + buf.getvalue())
    tmp.replace(path)


def load_kg_checkpoint(path, store: TripleStore) -> KGParams:
    raw = Path(path).read_bytes()
    if raw[:4] != KG_MAGIC or len(raw) < 8:
        raise CheckpointError(f"{path}: not a KG checkpoint file")
    version = int.from_bytes(raw[4:8], "little")
    if version != KG_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {KG_VERSION}")
    try:
        with np.load(io.BytesIO(raw[8:])) as z:
            data = {k: z[k] for k in z.files}
        meta = json.loads(bytes(data.pop("meta")).decode())
    except Exception as exc:
        raise CheckpointError(f"{path}: unreadable or truncated checkpoint ({exc})") from None
    if meta["vocab"] != _vocab_hash(store):
        raise CheckpointError(f"{path}: entity/relation vocabulary differs from the triple files (hash mismatch)")
    sig = parse_signature(meta["signature"])
    sig = Signature(sig.components, tuple(meta["weights"]))
    return KGParams(sig, data["points"], data["alpha"], data["beta"], data["gamma"], data["b0"])
