"""Sparse cubical tensors, the tensor-times-vector-power product and the
multilinear PageRank map.

A tensor of order ``m`` and dimension ``n`` is stored through its mode-1
unfolding: every nonzero keeps its row index ``i1`` and the linear column
index of ``(i2, ..., im)``.  Column indices use a mixed-radix encoding with
``i2`` varying fastest::

    col = i2 + n*i3 + n**2*i4 + ...      (0-based)

so the ``b``-th block of ``n`` consecutive columns is the matrix slice
``P[:, :, i3, ..., im]``.  Indices are 0-based in memory and 1-based in files.

Two optional structured parts keep graph-derived tensors at ``O(nnz)``:

* ``kron``: an ``n x n`` sparse matrix ``X`` adding ``X[i1, im]`` to every
  entry ``(i1, i2, ..., im)``; for ``m = 3`` the unfolding gains ``X kron e^T``.
* ``fill``: a distribution completing every fiber whose entries sum to less
  than one, scaled by the deficit.  This is the dangling correction
  ``B + fill (e^T - e^T B)`` without the dense rank-one term.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

STOCHASTIC_TOL = 1e-12
ITERATE_TOL = 1e-9

# apply() only splits work across threads above this many nonzeros
_PARALLEL_MIN_NNZ = 1_000_000


class DimensionError(ValueError):
    pass


def _threads_from_env() -> int:
    try:
        return max(1, int(os.environ.get("MLPR_THREADS", "1")))
    except ValueError:
        return 1


class SparseTensor:
    """Order-``m`` cubical tensor of dimension ``n`` in mode-1 coordinate form.

    Parameters
    ----------
    m, n : int
        Order and dimension.
    rows : array of int
        0-based first index of every stored entry.
    cols : array of int
        Linear (mixed-radix) index of the trailing ``m - 1`` indices.
    values : array of float
        Entry values.  Duplicate ``(row, col)`` pairs are summed and exact
        zeros are dropped.
    kron : sparse matrix, optional
        Part depending only on ``(i1, im)`` (see module notes).
    fill : array of float, optional
        Distribution that completes sub-stochastic fibers (see module notes).

    Instances are treated as immutable.
    """

    def __init__(self, m, n, rows, cols, values, fill=None, kron=None):
        m, n = int(m), int(n)
        if m < 2:
            raise ValueError(f"order must be >= 2, got {m}")
        if n < 1:
            raise ValueError(f"dimension must be >= 1, got {n}")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (rows.shape == cols.shape == values.shape):
            raise ValueError("rows, cols and values must have equal length")
        ncols = n ** (m - 1)
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise IndexError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= ncols):
            raise IndexError("column index out of range")

        # canonical order: column-major over the unfolding, duplicates summed
        key = cols * n + rows
        order = np.argsort(key, kind="stable")
        key, values = key[order], values[order]
        if key.size:
            uniq, start = np.unique(key, return_index=True)
            values = np.add.reduceat(values, start) if uniq.size < key.size else values
            key = uniq
        keep = values != 0.0
        key, values = key[keep], values[keep]

        self.m = m
        self.n = n
        self.rows = key % n
        self.cols = key // n
        self.values = values
        self.fill = None if fill is None else np.asarray(fill, dtype=float).copy()
        if self.fill is not None and self.fill.shape != (n,):
            raise DimensionError(f"fill has shape {self.fill.shape}, expected ({n},)")
        self.kron = None
        if kron is not None:
            kron = sp.csr_matrix(kron, dtype=float)
            if kron.shape != (n, n):
                raise DimensionError(f"kron part has shape {kron.shape}, expected ({n}, {n})")
            kron.sum_duplicates()
            kron.eliminate_zeros()
            self.kron = kron
        self._modes = None
        for arr in (self.rows, self.cols, self.values):
            arr.setflags(write=False)

    @classmethod
    def from_entries(cls, m, n, indices, values, fill=None, kron=None):
        """Build from 0-based index tuples ``(nnz, m)`` and values."""
        indices = np.asarray(indices, dtype=np.int64).reshape(-1, m)
        if indices.size and (indices.min() < 0 or indices.max() >= n):
            raise IndexError("tensor index out of range")
        rows = indices[:, 0]
        cols = encode_columns(indices[:, 1:], n)
        return cls(m, n, rows, cols, values, fill=fill, kron=kron)

    @classmethod
    def from_dense(cls, array, fill=None):
        array = np.asarray(array, dtype=float)
        m, n = array.ndim, array.shape[0]
        if any(d != n for d in array.shape):
            raise DimensionError("dense tensor must be cubical")
        unfolding = array.reshape(n, -1, order="F")
        rows, cols = np.nonzero(unfolding)
        return cls(m, n, rows, cols, unfolding[rows, cols], fill=fill)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def shape(self):
        return (self.n,) * self.m

    @property
    def mode_indices(self) -> np.ndarray:
        """Decoded trailing indices, shape ``(nnz, m - 1)``."""
        if self._modes is None:
            self._modes = decode_columns(self.cols, self.n, self.m - 1)
            self._modes.setflags(write=False)
        return self._modes

    def indices(self) -> np.ndarray:
        """All 0-based index tuples, shape ``(nnz, m)``."""
        return np.column_stack([self.rows, self.mode_indices])

    def column_sums(self):
        """Column sums of the unfolding over stored columns, as ``(cols, sums)``.

        The ``kron`` part is included; ``fill`` is not.
        """
        cols, inv = np.unique(self.cols, return_inverse=True)
        sums = np.bincount(inv, weights=self.values, minlength=cols.size)
        if self.kron is not None:
            sums = sums + self.kron_column_sums()[cols // self.n ** (self.m - 2)]
        return cols, sums

    def kron_column_sums(self) -> np.ndarray:
        return np.asarray(self.kron.sum(axis=0)).ravel()

    def unfolding_dense(self) -> np.ndarray:
        """Dense ``n x n**(m-1)`` mode-1 unfolding, structured parts included."""
        ncols = self.n ** (self.m - 1)
        out = np.zeros((self.n, ncols))
        np.add.at(out, (self.rows, self.cols), self.values)
        if self.kron is not None:
            last = np.arange(ncols) // self.n ** (self.m - 2)
            out += self.kron.toarray()[:, last]
        if self.fill is not None:
            deficit = 1.0 - out.sum(axis=0)
            out += np.outer(self.fill, deficit)
        return out

    def to_dense(self) -> np.ndarray:
        return self.unfolding_dense().reshape(self.shape, order="F")

    def __eq__(self, other):
        if not isinstance(other, SparseTensor):
            return NotImplemented
        same_fill = (self.fill is None and other.fill is None) or (
            self.fill is not None and other.fill is not None
            and np.array_equal(self.fill, other.fill)
        )
        same_kron = (self.kron is None and other.kron is None) or (
            self.kron is not None and other.kron is not None
            and (self.kron != other.kron).nnz == 0
        )
        return (
            self.m == other.m and self.n == other.n and same_fill and same_kron
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        extra = ", kron" if self.kron is not None else ""
        extra += ", fill" if self.fill is not None else ""
        return f"SparseTensor(m={self.m}, n={self.n}, nnz={self.nnz}{extra})"


def encode_columns(modes, n):
    """Mixed-radix linear index of trailing index tuples (first mode fastest)."""
    modes = np.asarray(modes, dtype=np.int64)
    if modes.ndim == 1:
        modes = modes[:, None]
    radix = n ** np.arange(modes.shape[1], dtype=np.int64)
    return modes @ radix


def decode_columns(cols, n, k):
    cols = np.asarray(cols, dtype=np.int64)
    out = np.empty((cols.size, k), dtype=np.int64)
    rem = cols.copy()
    for j in range(k):
        out[:, j] = rem % n
        rem //= n
    return out


def _sparse_part(tensor: SparseTensor, s: np.ndarray, threads: int) -> np.ndarray:
    modes = tensor.mode_indices

    def chunk(lo, hi):
        w = tensor.values[lo:hi].copy()
        for j in range(modes.shape[1]):
            w *= s[modes[lo:hi, j]]
        return np.bincount(tensor.rows[lo:hi], weights=w, minlength=tensor.n)

    nnz = tensor.nnz
    if threads <= 1 or nnz < _PARALLEL_MIN_NNZ:
        return chunk(0, nnz)
    bounds = np.linspace(0, nnz, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(chunk, bounds[:-1], bounds[1:]))
    # fixed summation order keeps the result independent of scheduling
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


def apply(tensor: SparseTensor, s, threads: int | None = None) -> np.ndarray:
    """Compute ``A s^{m-1}``.

    Component ``i1`` is the sum over stored entries with first index ``i1`` of
    ``value * s[i2] * ... * s[im]``.  Cost is ``O(nnz * (m - 1))``.

    ``threads`` defaults to the ``MLPR_THREADS`` environment variable; the
    reduction order is fixed, so results do not depend on it.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (tensor.n,):
        raise DimensionError(f"vector has shape {s.shape}, tensor dimension is {tensor.n}")
    if threads is None:
        threads = _threads_from_env()
    out = _sparse_part(tensor, s, threads)
    if tensor.kron is not None:
        out += (tensor.kron @ s) * s.sum() ** (tensor.m - 2)
    if tensor.fill is not None:
        deficit = s.sum() ** (tensor.m - 1) - out.sum()
        out += deficit * tensor.fill
    return out


@dataclass(frozen=True)
class PageRankProblem:
    """Multilinear PageRank problem ``s = alpha * P s^{m-1} + (1 - alpha) * v``."""

    tensor: SparseTensor
    alpha: float
    teleport: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.tensor.n
        v = np.full(n, 1.0 / n) if self.teleport is None else np.asarray(self.teleport, dtype=float)
        if v.shape != (n,):
            raise DimensionError(f"teleport has shape {v.shape}, expected ({n},)")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if np.any(v <= 0) or abs(v.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValueError("teleport vector must be strictly positive and sum to one")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "teleport", v)

    @property
    def n(self) -> int:
        return self.tensor.n

    @property
    def m(self) -> int:
        return self.tensor.m

    def with_alpha(self, alpha: float) -> "PageRankProblem":
        return PageRankProblem(self.tensor, alpha, self.teleport)


def pagerank_apply(problem: PageRankProblem, s, alpha: float | None = None) -> np.ndarray:
    """``alpha * P s^{m-1} + (1 - alpha) * v``; no renormalization.

    ``alpha`` overrides the problem damping (``alpha = 1`` is accepted here).
    """
    a = problem.alpha if alpha is None else alpha
    return a * apply(problem.tensor, s) + (1.0 - a) * problem.teleport


def residual(problem: PageRankProblem, x) -> float:
    """Relative 1-norm residual ``||P_PR x^{m-1} - x||_1 / ||x||_1``.

    The PageRank tensor acts as ``alpha * P x^{m-1} + (1 - alpha) * (e^T x)^{m-1} v``,
    which reduces to :func:`pagerank_apply` for stochastic ``x``.
    """
    x = np.asarray(x, dtype=float)
    norm = np.abs(x).sum()
    if norm == 0.0:
        raise ValueError("residual undefined for the zero vector")
    mass = x.sum() ** (problem.m - 1)
    y = problem.alpha * apply(problem.tensor, x) + (1.0 - problem.alpha) * mass * problem.teleport
    return float(np.abs(y - x).sum() / norm)


def map_residual(tensor: SparseTensor, x) -> float:
    """``||A x^{m-1} - x||_1 / ||x||_1`` for the bare tensor map."""
    x = np.asarray(x, dtype=float)
    return float(np.abs(apply(tensor, x) - x).sum() / np.abs(x).sum())


@dataclass
class Violation:
    kind: str  # "fiber_sum" | "negative" | "vector_sum" | "dimension"
    index: tuple
    amount: float

    def __str__(self):
        return f"{self.kind} at {self.index}: {self.amount:.3e}"


@dataclass
class Diagnostics:
    violations: list
    worst: Violation | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "ok"
        return f"{len(self.violations)} violation(s); worst {self.worst}"


def _finish(violations):
    worst = max(violations, key=lambda v: abs(v.amount)) if violations else None
    return Diagnostics(violations, worst)


def validate(obj, tol: float = STOCHASTIC_TOL) -> Diagnostics:
    """Report stochasticity violations of a tensor or a distribution vector.

    For tensors, every mode-1 fiber must sum to one and all entries must be
    nonnegative; reported fiber indices are 1-based ``(i2, ..., im)`` tuples
    and ``amount`` is the deficit ``1 - sum``.  Never raises.
    """
    if isinstance(obj, SparseTensor):
        return _validate_tensor(obj, tol)
    return _validate_vector(np.asarray(obj, dtype=float), tol)


def _validate_vector(x, tol):
    out = []
    neg = np.flatnonzero(x < 0)
    for i in neg:
        out.append(Violation("negative", (int(i) + 1,), float(x[i])))
    deficit = 1.0 - x.sum()
    if abs(deficit) > tol:
        out.append(Violation("vector_sum", (), float(deficit)))
    return _finish(out)


def _validate_tensor(t, tol):
    out = []
    for i in np.flatnonzero(t.values < 0):
        idx = tuple(int(v) + 1 for v in t.indices()[i])
        out.append(Violation("negative", idx, float(t.values[i])))
    if t.kron is not None:
        kc = t.kron.tocoo()
        for i in np.flatnonzero(kc.data < 0):
            out.append(Violation("negative", ("kron", int(kc.row[i]) + 1, int(kc.col[i]) + 1), float(kc.data[i])))
    if t.fill is not None:
        fv = _validate_vector(t.fill, tol)
        out.extend(Violation("fill_" + v.kind, v.index, v.amount) for v in fv.violations)

    def broken(deficit):
        # filled fibers may be short but never overfull
        return deficit < -tol if t.fill is not None else np.abs(deficit) > tol

    cols, sums = t.column_sums()
    deficit = 1.0 - sums
    for j in np.flatnonzero(broken(deficit)):
        out.append(Violation("fiber_sum", _fiber_label(cols[j], t), float(deficit[j])))

    # fibers without stored entries hold only the kron part (or nothing)
    block = t.n ** (t.m - 2)
    stored = np.bincount(cols // block, minlength=t.n)
    base = t.kron_column_sums() if t.kron is not None else np.zeros(t.n)
    for j in np.flatnonzero((stored < block) & broken(1.0 - base)):
        mine = cols[(cols >= j * block) & (cols < (j + 1) * block)] - j * block
        first = int(np.setdiff1d(np.arange(min(block, mine.size + 1)), mine)[0])
        out.append(Violation("fiber_sum", _fiber_label(j * block + first, t), float(1.0 - base[j])))
    return _finish(out)


def _fiber_label(col, t):
    return tuple(int(v) + 1 for v in decode_columns(np.array([col]), t.n, t.m - 1)[0])


def check_stochastic(tensor: SparseTensor, tol: float = STOCHASTIC_TOL) -> None:
    diag = validate(tensor, tol)
    if not diag.ok:
        raise ValueError(f"tensor is not stochastic: {diag}")


def is_stochastic(x, tol: float = ITERATE_TOL) -> bool:
    x = np.asarray(x)
    return bool(x.min() >= -tol and abs(x.sum() - 1.0) <= tol)


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)
