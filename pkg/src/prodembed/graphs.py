"""Undirected graphs, synthetic generators, hop distances and node features."""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .errors import DisconnectedGraphError, ParseError, UsageError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Graph:
    """Sparse undirected simple graph in CSR form (sorted neighbour lists)."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    name: str = ""
    dropped: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_edges(cls, n, edges, name=""):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise UsageError(f"edge endpoint outside [0, {n})")
        self_loops = int(np.sum(edges[:, 0] == edges[:, 1]))
        edges = edges[edges[:, 0] != edges[:, 1]]
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        keys = np.unique(lo * n + hi)
        duplicates = len(edges) - len(keys)
        lo, hi = keys // n, keys % n
        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        mat = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
        mat.sort_indices()
        return cls(
            n=int(n),
            indptr=mat.indptr.astype(np.int64),
            indices=mat.indices.astype(np.int64),
            name=name,
            dropped={"self_loops": self_loops, "duplicates": duplicates},
        )

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def has_edge(self, u, v) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def edges(self) -> np.ndarray:
        """Edge list with ``u < v``, sorted."""
        rows = np.repeat(np.arange(self.n), self.degrees())
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def to_scipy(self):
        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def adjacency(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<q", self.n))
        h.update(self.edges().astype("<i8").tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# I/O


def load_edge_list(path) -> Graph:
    """Read ``u v`` lines (tab or space separated, ``#`` comments).

    Node labels are compacted to ``0..n-1`` in order of their integer value.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise type(exc)(f"cannot read edge list {path}: {exc}") from exc
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise ParseError(f"{path}:{lineno}: expected two node ids, got {line!r}")
        try:
            pairs.append((int(tokens[0]), int(tokens[1])))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-integer token in {line!r}") from None
    raw = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    labels, compact = np.unique(raw, return_inverse=True)
    g = Graph.from_edges(len(labels), compact.reshape(-1, 2), name=path.stem)
    log.info(
        "loaded %s: %d nodes, %d edges (%d self-loops, %d duplicates dropped)",
        path, g.n, g.n_edges, g.dropped["self_loops"], g.dropped["duplicates"],
    )
    return g


def save_edge_list(graph: Graph, path):
    lines = [f"# {graph.name or 'graph'}: {graph.n} nodes, {graph.n_edges} edges"]
    lines += [f"{u}\t{v}" for u, v in graph.edges()]
    atomic_write(path, "\n".join(lines) + "\n")


def atomic_write(path, data):
    """Write text or bytes to a temp file next to ``path``, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, bytes):
        tmp.write_bytes(data)
    else:
        tmp.write_text(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# generators


def cycle(n: int) -> Graph:
    if n < 4:
        raise UsageError(f"cycle needs n >= 4, got {n}")
    i = np.arange(n)
    return Graph.from_edges(n, np.stack([i, (i + 1) % n], axis=1), name=f"cycle{n}")


def tree(b: int, n: int) -> Graph:
    """Balanced b-ary tree filled in breadth-first order, truncated at n nodes."""
    if b < 2:
        raise UsageError(f"tree needs branching factor b >= 2, got {b}")
    if n < 2:
        raise UsageError(f"tree needs n >= 2, got {n}")
    child = np.arange(1, n)
    return Graph.from_edges(n, np.stack([(child - 1) // b, child], axis=1), name=f"tree{b}_{n}")


def ring_of_trees(r: int, b: int, depth: int, n: int | None = None) -> Graph:
    """An r-cycle whose nodes each root a b-ary tree of the given depth.

    Tree nodes are added level by level across all roots, so truncating at
    ``n`` nodes keeps the trees as balanced as possible.
    """
    if r < 3:
        raise UsageError(f"ring needs r >= 3, got {r}")
    if b < 2 or depth < 0:
        raise UsageError("ring_of_trees needs b >= 2 and depth >= 0")
    full = r * (b ** (depth + 1) - 1) // (b - 1)
    limit = full if n is None else n
    if limit < r or limit > full:
        raise UsageError(f"n must lie in [{r}, {full}], got {n}")
    edges = [(i, (i + 1) % r) for i in range(r)]
    frontier = list(range(r))
    nxt = r
    while nxt < limit and frontier:
        new = []
        for parent in frontier:
            for _ in range(b):
                if nxt >= limit:
                    break
                edges.append((parent, nxt))
                new.append(nxt)
                nxt += 1
        frontier = new
    return Graph.from_edges(limit, edges, name=f"ring_of_trees{r}_{b}_{depth}_{limit}")


def star(leaves: int) -> Graph:
    if leaves < 1:
        raise UsageError("star needs at least one leaf")
    leaf = np.arange(1, leaves + 1)
    return Graph.from_edges(leaves + 1, np.stack([np.zeros_like(leaf), leaf], axis=1), name=f"star{leaves}")


def path(n: int) -> Graph:
    if n < 2:
        raise UsageError("path needs n >= 2")
    i = np.arange(n - 1)
    return Graph.from_edges(n, np.stack([i, i + 1], axis=1), name=f"path{n}")


def barbell(k: int) -> Graph:
    """Two k-cliques joined by a single edge."""
    if k < 2:
        raise UsageError("barbell needs k >= 2")
    edges = [(i, j) for i in range(k) for j in range(i + 1, k)]
    edges += [(i + k, j + k) for i, j in edges]
    edges.append((k - 1, k))
    return Graph.from_edges(2 * k, edges, name=f"barbell{k}")


def erdos_renyi(n: int, p: float, rng) -> Graph:
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    return Graph.from_edges(n, np.stack([iu[0][keep], iu[1][keep]], axis=1), name=f"gnp{n}")


GENERATORS = {
    "cycle": (cycle, ("n",)),
    "tree": (tree, ("b", "n")),
    "ring_of_trees": (ring_of_trees, ("r", "b", "depth", "n")),
    "star": (star, ("leaves",)),
    "path": (path, ("n",)),
    "barbell": (barbell, ("k",)),
}


def generate(kind: str, **params) -> Graph:
    try:
        fn, names = GENERATORS[kind]
    except KeyError:
        raise UsageError(f"unknown graph kind {kind!r}; choose from {sorted(GENERATORS)}") from None
    args = {k: v for k, v in params.items() if k in names and v is not None}
    return fn(**args)


# ---------------------------------------------------------------------------
# distances and features


def apsp(graph: Graph) -> np.ndarray:
    """All-pairs hop distances by breadth-first search from every node."""
    d = shortest_path(graph.to_scipy(), method="D", unweighted=True, directed=False)
    if not np.all(np.isfinite(d)):
        u, v = np.argwhere(~np.isfinite(d))[0]
        raise DisconnectedGraphError(int(u), int(v))
    return d.astype(np.int32)


def save_distances(dist: np.ndarray, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<q", dist.shape[0]))
        fh.write(np.ascontiguousarray(dist, dtype="<i4").tobytes())
    os.replace(tmp, path)


def load_distances(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ParseError(f"{path}: truncated distance file")
    (n,) = struct.unpack("<q", raw[:8])
    if len(raw) != 8 + 4 * n * n:
        raise ParseError(f"{path}: expected {n}x{n} hop counts")
    return np.frombuffer(raw[8:], dtype="<i4").reshape(n, n).astype(np.int32)


def apsp_cached(graph: Graph, cache_dir) -> np.ndarray:
    path = Path(cache_dir) / f"apsp-{graph.content_hash()[:16]}.bin"
    if path.exists():
        return load_distances(path)
    dist = apsp(graph)
    save_distances(dist, path)
    return dist


def normalized_adjacency(graph: Graph) -> np.ndarray:
    """D~^{-1/2} (A + I) D~^{-1/2} as a dense matrix."""
    a = graph.adjacency() + np.eye(graph.n)
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


def clustering_coefficients(graph: Graph) -> np.ndarray:
    a = graph.to_scipy()
    triangles = np.asarray((a @ a).multiply(a).sum(axis=1)).ravel() / 2.0
    deg = graph.degrees().astype(float)
    pairs = deg * (deg - 1) / 2.0
    return np.divide(triangles, pairs, out=np.zeros_like(pairs), where=pairs > 0)


def node_features(graph: Graph, curvature_sample_budget: int, rng, dist=None) -> np.ndarray:
    """Per-node features: [degree / max degree, clustering, mean sampled curvature]."""
    from .curvature import node_curvature

    deg = graph.degrees().astype(float)
    feats = np.zeros((graph.n, 3))
    feats[:, 0] = deg / max(deg.max(), 1.0)
    feats[:, 1] = clustering_coefficients(graph)
    if curvature_sample_budget > 0 and graph.n >= 4:
        if dist is None:
            dist = apsp(graph)
        for v in range(graph.n):
            if deg[v] >= 2:
                feats[v, 2] = node_curvature(graph, dist, v, curvature_sample_budget, rng)
    return feats
