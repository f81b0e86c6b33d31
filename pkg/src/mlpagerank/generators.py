"""Synthetic and graph-derived stochastic tensors.

Random graphs come from networkx; every networkx seed is drawn from the
caller's numpy ``Generator`` so one seed fixes the whole output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import scipy.sparse as sp

from .tensor import SparseTensor, uniform

MODEL_TAGS = ("smallw", "gilbert", "erdrey", "pref", "geo", "lockandkey", "rank1")


@dataclass(frozen=True)
class Graph:
    """0/1 adjacency on ``n`` nodes (0-based CSR, ``adj[i, j] = 1`` for edge i -> j)."""

    n: int
    adjacency: sp.csr_matrix
    directed: bool = False

    def __post_init__(self):
        a = sp.csr_matrix(self.adjacency, dtype=float)
        if a.shape != (self.n, self.n):
            raise ValueError(f"adjacency shape {a.shape} does not match n={self.n}")
        a.data[:] = 1.0
        a.eliminate_zeros()
        a.sort_indices()
        object.__setattr__(self, "adjacency", a)

    @classmethod
    def from_edges(cls, n, edges, directed=False):
        """``edges`` are 0-based pairs; undirected graphs store both directions."""
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if directed:
            r, c = e[:, 0], e[:, 1]
        else:
            r, c = np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]]
        a = sp.csr_matrix((np.ones(r.size), (r, c)), shape=(n, n))
        return cls(n, a, directed)

    @classmethod
    def from_networkx(cls, g) -> "Graph":
        n = g.number_of_nodes()
        a = nx.to_scipy_sparse_array(g, nodelist=range(n), format="csr", weight=None)
        return cls(n, sp.csr_matrix(a), g.is_directed())

    def symmetrized(self) -> "Graph":
        """``sign(A + A^T)`` as an undirected graph."""
        a = self.adjacency
        return Graph(self.n, a + a.T, directed=False)

    @property
    def num_edges(self) -> int:
        nz = self.adjacency.nnz
        if self.directed:
            return nz
        loops = int(self.adjacency.diagonal().sum())
        return (nz - loops) // 2 + loops


@dataclass(frozen=True)
class GraphModel:
    tag: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in MODEL_TAGS:
            raise ValueError(f"unknown graph model {self.tag!r}; choose from {MODEL_TAGS}")
        p = self.params.get("p")
        if p is not None and not 0 <= p <= 1:
            raise ValueError(f"edge probability must be in [0, 1], got {p}")


DEFAULT_MODELS = tuple(GraphModel(t) for t in ("smallw", "gilbert", "erdrey", "pref", "geo", "rank1"))


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**32))


def random_graph(model: GraphModel, n: int, rng: np.random.Generator) -> Graph:
    """Sample an undirected graph on ``n >= 2`` nodes from ``model``.

    Defaults: ``erdrey`` has ``ceil(2.5 n)`` uniform edges (or G(n, p) when
    ``p`` is given), ``gilbert`` is G(n, 1.1 ln(n)/n), ``smallw`` is a
    Watts-Strogatz ring of degree 4 rewired with probability 0.1, ``pref`` adds
    each node with 2 edges, ``geo`` uses radius ``sqrt(1.44/n)`` on the unit
    square. ``lockandkey`` is not implemented.
    """
    if n < 2:
        raise ValueError(f"random graphs need n >= 2, got {n}")
    if isinstance(model, str):
        model = GraphModel(model)
    tag, prm = model.tag, model.params
    if tag == "rank1":
        return Graph(n, sp.csr_matrix(np.ones((n, n))), directed=False)
    if tag == "lockandkey":
        raise NotImplementedError("the lockandkey model is not available")
    seed = _seed(rng)
    if tag == "erdrey":
        if "p" in prm:
            g = nx.gnp_random_graph(n, prm["p"], seed=seed)
        else:
            edges = min(prm.get("edges", math.ceil(2.5 * n)), n * (n - 1) // 2)
            g = nx.gnm_random_graph(n, edges, seed=seed)
    elif tag == "gilbert":
        g = nx.gnp_random_graph(n, prm.get("p", min(1.0, 1.1 * math.log(n) / n)), seed=seed)
    elif tag == "smallw":
        g = nx.watts_strogatz_graph(n, prm.get("k", min(4, n - 1)), prm.get("p", 0.1), seed=seed)
    elif tag == "pref":
        g = nx.barabasi_albert_graph(n, prm.get("edges", min(2, n - 1)), seed=seed)
    else:  # geo
        g = nx.random_geometric_graph(n, prm.get("radius", math.sqrt(1.44 / n)), seed=seed)
    return Graph.from_networkx(g)


def _normalize_columns(a: sp.spmatrix, n: int):
    """Column-stochastic version of ``a``; empty columns become uniform."""
    a = sp.csc_matrix(a, dtype=float)
    sums = np.asarray(a.sum(axis=0)).ravel()
    scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    a = sp.csc_matrix(a @ sp.diags(scale))
    empty = np.flatnonzero(sums == 0)
    if empty.size:
        fill = sp.csc_matrix(
            (np.full(empty.size * n, 1.0 / n), (np.tile(np.arange(n), empty.size), np.repeat(empty, n))),
            shape=(n, n),
        )
        a = a + fill
    return a.tocoo()


def random_stochastic_tensor(n: int, m: int, rng: np.random.Generator, models=DEFAULT_MODELS) -> SparseTensor:
    """One random graph per ``n x n`` block of the mode-1 unfolding, columns normalized."""
    if n < 2 or m < 2:
        raise ValueError(f"need n >= 2 and m >= 2, got n={n}, m={m}")
    models = tuple(GraphModel(t) if isinstance(t, str) else t for t in models)
    rows, cols, vals = [], [], []
    for b in range(n ** (m - 2)):
        model = models[int(rng.integers(len(models)))]
        blk = _normalize_columns(random_graph(model, n, rng).adjacency, n)
        rows.append(blk.row)
        cols.append(blk.col + b * n)
        vals.append(blk.data)
    return SparseTensor(m, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def three_cycle_tensor(graph: Graph) -> SparseTensor:
    """Binary order-3 tensor with ``C[i, j, k] = 1`` when i, j, k form a triangle.

    Directed graphs are symmetrized and self-loops ignored.
    """
    a = graph.symmetrized().adjacency if graph.directed else graph.adjacency
    a = sp.csr_matrix(a)
    a.setdiag(0)
    a.eliminate_zeros()
    up = sp.triu(a, k=1, format="csr")
    nbr = [set(up.indices[up.indptr[i]:up.indptr[i + 1]]) for i in range(graph.n)]
    tri = [(i, j, k) for i in range(graph.n) for j in nbr[i] for k in nbr[i] & nbr[j]]
    if not tri:
        return SparseTensor(3, graph.n, [], [], [])
    t = np.asarray(tri, dtype=np.int64)
    perms = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
    idx = np.concatenate([t[:, p] for p in perms])
    return SparseTensor.from_entries(3, graph.n, idx, np.ones(len(idx)))


def dangling_row(b) -> np.ndarray:
    """Column deficits ``e^T - e^T B``."""
    sums = np.asarray(b.sum(axis=0)).ravel()
    return 1.0 - sums


@dataclass(frozen=True)
class RealWorldMix:
    beta: float
    teleport: np.ndarray | None = None

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")

    def vector(self, n: int) -> np.ndarray:
        if self.teleport is None:
            return uniform(n)
        v = np.asarray(self.teleport, dtype=float)
        if v.shape != (n,) or np.any(v <= 0) or abs(v.sum() - 1) > 1e-12:
            raise ValueError("teleport vector must be strictly positive, sum to 1 and have length n")
        return v


def walk_matrix(graph: Graph) -> sp.csr_matrix:
    """``M = A^T D^+``: column j spreads node j's mass over its out-neighbours."""
    a = graph.adjacency
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return sp.csr_matrix(a.T @ sp.diags(inv))


def build_real_world_tensor(graph: Graph, mix: RealWorldMix) -> SparseTensor:
    """Order-3 stochastic tensor mixing triangle and edge walks.

    The unfolding is ``beta * S + (1 - beta) * M kron e^T`` completed with the
    teleport vector on every short fiber. Since the completion is affine in the
    mixed matrix, this equals correcting ``S`` and ``M`` separately. ``M kron e^T``
    is kept in factored form, so memory stays proportional to the graph size.
    """
    n = graph.n
    v = mix.vector(n)
    c = three_cycle_tensor(graph)
    rows, cols, vals = c.rows, c.cols, c.values
    if c.nnz:
        sums = np.bincount(cols, weights=vals, minlength=n * n)
        vals = vals / sums[cols]
    kron = None
    if mix.beta < 1:
        kron = (1 - mix.beta) * walk_matrix(graph)
    return SparseTensor(3, n, rows, cols, mix.beta * vals, fill=v, kron=kron)


__all__ = [
    "MODEL_TAGS", "Graph", "GraphModel", "DEFAULT_MODELS", "random_graph", "random_stochastic_tensor",
    "three_cycle_tensor", "dangling_row", "RealWorldMix", "walk_matrix", "build_real_world_tensor",
]
