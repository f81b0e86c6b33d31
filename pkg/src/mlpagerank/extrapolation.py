"""Shanks-type extrapolation of vector sequences.

The workhorse is STEA2, the simplified topological epsilon-algorithm for the
second topological Shanks transformation::

    e~_k(s_l) = a_0 s_{l+k} + ... + a_k s_{l+2k}

where the ``a_i`` sum to one and annihilate the moments ``<y, Delta s_{l+i}>``.
STEA2 never forms that linear system.  A scalar Wynn epsilon table is run on
``<y, s_l>`` and the vector table is advanced with::

    E[2j+2, l] = E[2j, l+1] + (eps[2j+2, l] - eps[2j, l+1])
                              / (eps[2j, l+2] - eps[2j, l+1])
                              * (E[2j, l+2] - E[2j, l+1])

The tables are filled one ascending diagonal at a time as the iterates are
produced, so at most ``k + 2`` vectors are alive at once.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .solvers import (
    BUDGET_EXHAUSTED, CONVERGED, InnerSolveError, _Recorder, as_fixed_point_map,
)
from .tensor import ITERATE_TOL

log = logging.getLogger(__name__)

Y_STRATEGIES = ("fixed_random", "last_extrapolated", "stochasticity_enforcing")


class DegenerateTableError(ArithmeticError):
    """A Wynn denominator vanished; the extrapolation is undefined."""


class ScalarEpsilonTable:
    """Wynn's scalar epsilon-algorithm, grown one ascending diagonal per push.

    After pushing ``s_0 .. s_L`` the table holds ``eps[c, l]`` for ``c + l <= L``
    (``c >= 0``), with ``eps[-1, l] = 0`` and ``eps[0, l] = s_l``.

    A denominator is treated as zero when its magnitude falls below
    ``threshold`` times a reference scale: the largest ``|s_l|`` seen for
    differences of even columns, the larger operand for differences of odd
    columns.  Such entries are stored as NaN and listed in ``degenerate``.
    """

    def __init__(self, threshold: float = 1e-14):
        self.threshold = threshold
        self.diagonals: list[list[float]] = []
        self.degenerate: list[tuple[int, int]] = []
        self.scale = 0.0

    def __len__(self):
        return len(self.diagonals)

    def push(self, value: float) -> list[float]:
        value = float(value)
        L = len(self.diagonals)
        if math.isfinite(value):
            self.scale = max(self.scale, abs(value))
        new = [value]
        old = self.diagonals[-1] if L else []
        for c in range(1, L + 1):
            prev2 = 0.0 if c == 1 else old[c - 2]
            a, b = new[c - 1], old[c - 1]
            den = a - b
            ref = self.scale if (c - 1) % 2 == 0 else max(abs(a), abs(b))
            if not math.isfinite(den) or abs(den) <= self.threshold * ref:
                new.append(math.nan)
                self.degenerate.append((c, L - c))
            else:
                new.append(prev2 + 1.0 / den)
        self.diagonals.append(new)
        return new

    def diagonal(self, L: int) -> list[float]:
        return self.diagonals[L]

    def entry(self, col: int, ell: int) -> float:
        """``eps[col, ell]``."""
        if col == -1:
            return 0.0
        return self.diagonals[col + ell][col]

    @property
    def is_degenerate(self) -> bool:
        return bool(self.degenerate)


def wynn_scalar(table: ScalarEpsilonTable, new_scalar: float) -> ScalarEpsilonTable:
    table.push(new_scalar)
    return table


def wynn_epsilon(values, threshold: float = 1e-14) -> ScalarEpsilonTable:
    table = ScalarEpsilonTable(threshold)
    for v in values:
        table.push(v)
    return table


class Stea2:
    """Ascending-diagonal STEA2 state for one extrapolation ``e~_k(s_0)``.

    Push ``s_0, s_1, ...`` together with ``<y, s_l>``; after ``2k + 1`` pushes
    :attr:`result` is ``E[2k, 0]``.  ``max_resident`` records the largest
    number of vectors held at any moment (the pushed iterate included).
    """

    def __init__(self, k: int, threshold: float = 1e-14):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.table = ScalarEpsilonTable(threshold)
        self.threshold = threshold
        self.diag: list[np.ndarray] = []
        self.count = 0
        self.max_resident = 0

    def _track(self, *extra):
        held = len(self.diag) + sum(x is not None for x in extra)
        self.max_resident = max(self.max_resident, held)

    def push(self, s, scalar: float) -> None:
        L = self.count
        self.table.push(scalar)
        new_sc = self.table.diagonal(L)
        old_sc = self.table.diagonal(L - 1) if L else None

        s = np.array(s, dtype=float)
        tmp = self.diag[0] if self.diag else None
        if self.diag:
            self.diag[0] = s
        else:
            self.diag.append(s)
        self._track(tmp)

        for j in range(1, min(L // 2, self.k) + 1):
            save = self.diag[j] if j < len(self.diag) else None
            e_new = new_sc[2 * j]
            e_mid, e_bot = old_sc[2 * j - 2], new_sc[2 * j - 2]
            den = e_bot - e_mid
            if not math.isfinite(den) or abs(den) <= self.threshold * self.table.scale:
                coef = math.nan
            else:
                coef = (e_new - e_mid) / den
            vec = tmp + coef * (self.diag[j - 1] - tmp)
            if j < len(self.diag):
                self.diag[j] = vec
            else:
                self.diag.append(vec)
            self._track(tmp, save)
            tmp = save
        self.count += 1

    @property
    def complete(self) -> bool:
        return self.count >= 2 * self.k + 1

    @property
    def result(self) -> np.ndarray:
        if not self.complete:
            raise RuntimeError(f"need {2 * self.k + 1} iterates, got {self.count}")
        return self.diag[self.k]

    def best_available(self) -> tuple[np.ndarray, int]:
        """Highest-order finite entry of the current diagonal and its order ``j``."""
        for j in range(len(self.diag) - 1, -1, -1):
            if np.all(np.isfinite(self.diag[j])):
                return self.diag[j], j
        return self.diag[0], 0


def stea2_extrapolate(vectors, scalars, k: int, threshold: float = 1e-14) -> np.ndarray:
    """``e~_k(s_0)`` from ``s_0 .. s_{2k}`` and the scalars ``<y, s_l>``.

    Raises :class:`DegenerateTableError` if a denominator vanished.
    """
    if len(vectors) < 2 * k + 1 or len(scalars) < 2 * k + 1:
        raise ValueError(f"need {2 * k + 1} vectors and scalars")
    st = Stea2(k, threshold)
    for s, c in zip(vectors[: 2 * k + 1], scalars[: 2 * k + 1]):
        st.push(s, c)
    out = st.result
    if not np.all(np.isfinite(out)):
        raise DegenerateTableError(f"epsilon table degenerate at {st.table.degenerate[:3]}")
    return out


@dataclass
class ShanksCoefficients:
    a: np.ndarray
    condition: float

    def __post_init__(self):
        if abs(self.a.sum() - 1.0) > 1e-12 * max(1.0, np.abs(self.a).sum()):
            raise ArithmeticError("Shanks coefficients lost their normalization")


def shanks_system(b, k: int) -> np.ndarray:
    """``(k+1) x (k+1)`` matrix: a row of ones over the Hankel rows ``b_i .. b_{i+k}``."""
    b = np.asarray(b, dtype=float)
    S = np.ones((k + 1, k + 1))
    for i in range(k):
        S[i + 1] = b[i:i + k + 1]
    return S


def shanks_coefficients(b, k: int, max_condition: float = 1e15) -> ShanksCoefficients:
    if k == 0:
        return ShanksCoefficients(np.ones(1), 1.0)
    S = shanks_system(b, k)
    cond = float(np.linalg.cond(S))
    if not np.isfinite(cond) or cond > max_condition:
        raise np.linalg.LinAlgError(f"Shanks system is singular or ill-conditioned (cond={cond:.2e})")
    rhs = np.zeros(k + 1)
    rhs[0] = 1.0
    return ShanksCoefficients(np.linalg.solve(S, rhs), cond)


def shanks_direct(vectors, y, k: int, which: str = "second"):
    """Topological Shanks transformation by solving the normalized system.

    ``vectors`` holds ``s_l .. s_{l+2k}``.  Returns the coefficients and either
    ``sum a_i s_{l+i}`` (``which="first"``) or ``sum a_i s_{l+k+i}``
    (``which="second"``).
    """
    if which not in ("first", "second"):
        raise ValueError("which must be 'first' or 'second'")
    V = np.asarray(vectors, dtype=float)
    if V.shape[0] < 2 * k + 1:
        raise ValueError(f"need {2 * k + 1} vectors")
    V = V[: 2 * k + 1]
    b = np.diff(V, axis=0) @ np.asarray(y, dtype=float)
    coef = shanks_coefficients(b, k)
    base = 0 if which == "first" else k
    return coef, coef.a @ V[base:base + k + 1]


# --- functionals enforcing stochastic extrapolations -------------------------------


def stochasticity_b(k: int, c=None) -> np.ndarray:
    """Target moments ``b_0 .. b_{2k-1}`` that force nonnegative coefficients.

    ``b_{k-1} = 1``, ``b_{k-i} = b_{k-2+i} = -c_i`` for ``i = 2..k`` and
    ``b_{2k-1} = 0``.  The ``c_i`` must be positive with sum below one;
    the default is ``c_i = 1/(2k)``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    c = np.full(k - 1, 1.0 / (2 * k)) if c is None else np.asarray(c, dtype=float)
    if c.shape != (k - 1,) or np.any(c <= 0) or c.sum() >= 1:
        raise ValueError("need k-1 positive weights summing below one")
    b = np.zeros(2 * k)
    b[k - 1] = 1.0
    for i in range(2, k + 1):
        b[k - i] = b[k - 2 + i] = -c[i - 2]
    return b


def toeplitz_matrix(b, k: int) -> np.ndarray:
    """``T[r, c] = b_{k-1+r-c}`` with ``b_{-1} = 0``; satisfies ``S J = T + e_1 w^T``."""
    b = np.asarray(b, dtype=float)
    T = np.zeros((k + 1, k + 1))
    for r in range(k + 1):
        for col in range(k + 1):
            idx = k - 1 + r - col
            T[r, col] = b[idx] if idx >= 0 else 0.0
    return T


def correction_vector(b, k: int) -> np.ndarray:
    """``w = [1 - b_{k-1}, ..., 1 - b_0, 1]``."""
    b = np.asarray(b, dtype=float)
    return np.concatenate([1.0 - b[k - 1::-1], [1.0]])


def antidiagonal(k: int) -> np.ndarray:
    return np.fliplr(np.eye(k + 1))


@dataclass
class YConstructionProblem:
    """Differences ``Delta s_l .. Delta s_{l+2k-1}`` (columns) and target moments."""

    deltas: np.ndarray
    b: np.ndarray

    @classmethod
    def from_iterates(cls, vectors, b):
        return cls(np.diff(np.asarray(vectors, dtype=float), axis=0).T, np.asarray(b, dtype=float))

    @property
    def k(self) -> int:
        return self.deltas.shape[1] // 2

    @property
    def system_matrix(self) -> np.ndarray:
        return shanks_system(self.b, self.k)

    @property
    def toeplitz(self) -> np.ndarray:
        return toeplitz_matrix(self.b, self.k)

    @property
    def correction(self) -> np.ndarray:
        return correction_vector(self.b, self.k)


def construct_y(problem: YConstructionProblem, rank_tol: float = 1e-12) -> np.ndarray:
    """Vector ``y`` with ``<y, Delta s_{l+i}> = b_i`` for every ``i``.

    Uses ``Delta = QR``: solving ``R^T g = b`` and setting ``y = Q g`` gives
    ``y^T Delta = g^T R = b^T``.
    """
    D = np.asarray(problem.deltas, dtype=float)
    n, p = D.shape
    if p > n:
        raise np.linalg.LinAlgError(f"{p} differences cannot be independent in dimension {n}")
    Q, R = np.linalg.qr(D)
    diag = np.abs(np.diag(R))
    if diag.min() <= rank_tol * max(diag.max(), np.finfo(float).tiny):
        raise np.linalg.LinAlgError("difference vectors are linearly dependent")
    g = np.linalg.solve(R.T, problem.b)
    return Q @ g


# --- restarted driver ---------------------------------------------------------------


@dataclass
class RestartConfig:
    """Restarted extrapolation settings.

    ``k`` is the half width: each cycle uses ``2k + 1`` iterates.  Runs stop
    early once a measured residual is ``<= tol``; ``max_evals`` caps the map
    evaluations reported by the fixed-point map.
    """

    k: int = 5
    cycles: int = 4
    y_strategy: str = "last_extrapolated"
    seed: int = 0
    degeneracy_threshold: float = 1e-14
    tol: float = 1e-8
    max_evals: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("2k must be >= 2")
        if self.cycles < 1:
            raise ValueError("cycles must be >= 1")
        if self.y_strategy not in Y_STRATEGIES:
            raise ValueError(f"y_strategy must be one of {Y_STRATEGIES}")

    @property
    def width(self) -> int:
        return 2 * self.k


def _repair(x, trace, cycle):
    x = np.asarray(x, dtype=float)
    if x.min() >= -ITERATE_TOL and abs(x.sum() - 1.0) <= ITERATE_TOL:
        return x
    msg = f"cycle {cycle}: extrapolated vector not stochastic (min={x.min():.3e}, sum={x.sum():.12f}); clipped"
    log.warning(msg)
    trace.events.append(msg)
    x = np.clip(x, 0.0, None)
    total = x.sum()
    if not np.isfinite(total) or total <= 0:
        raise DegenerateTableError("extrapolated vector has no positive mass")
    return x / total


def restarted_solve(F, x0, config: RestartConfig | None = None, problem=None, method: str = "stea2"):
    """Restarted STEA2 acceleration of the fixed-point iteration ``s <- F(s)``.

    Each cycle starts from the current point ``x``, produces ``s_1 .. s_{2k}``
    while feeding them into the epsilon tables, and restarts from
    ``E[2k, 0]``.  ``F`` is either a map object from :mod:`mlpagerank.solvers`
    (``SfpmMap``, ``InnerOuterMap``) or a bare callable, in which case
    ``problem`` is used to measure residuals.

    If the table degenerates the cycle ends at ``s_{2k}``.  After the last
    cycle one more map evaluation measures the residual of the final point.
    """
    config = config or RestartConfig()
    fmap = as_fixed_point_map(F, problem)
    rng = np.random.default_rng(config.seed)
    x = np.asarray(x0, dtype=float)
    n = x.size
    y = rng.dirichlet(np.ones(n))
    rec = _Recorder(method)
    trace = rec.trace
    trace.stats.update(max_resident_vectors=0, degenerate_cycles=0, k=config.k)
    k = config.k
    budget = config.max_evals

    def out_of_budget():
        return budget is not None and fmap.evals >= budget

    for cycle in range(config.cycles):
        stea = Stea2(k, config.degeneracy_threshold)
        keep = [] if config.y_strategy == "stochasticity_enforcing" else None
        s = x
        if keep is None:
            stea.push(s, float(y @ s))
        else:
            keep.append(s)
        for ell in range(1, 2 * k + 1):
            try:
                nxt = fmap(s)
            except InnerSolveError:
                return rec.finish(s, BUDGET_EXHAUSTED)
            rec.add(fmap.evals, fmap.last_residual, extrapolated=(ell == 1 and cycle > 0))
            if fmap.last_residual <= config.tol:
                return rec.finish(s, CONVERGED)
            if out_of_budget():
                return rec.finish(s, BUDGET_EXHAUSTED)
            s = nxt
            if keep is None:
                stea.push(s, float(y @ s))
            else:
                keep.append(s)

        if keep is None:
            trace.stats["max_resident_vectors"] = max(trace.stats["max_resident_vectors"], stea.max_resident)
            x_new = stea.result
            if not np.all(np.isfinite(x_new)):
                trace.stats["degenerate_cycles"] += 1
                msg = f"cycle {cycle}: epsilon table degenerate, restarting from last iterate"
                log.warning(msg)
                trace.events.append(msg)
                x_new = s
        else:
            x_new = _enforced_extrapolation(keep, k, trace, cycle)

        x = _repair(x_new, trace, cycle)
        if config.y_strategy == "last_extrapolated":
            y = x.copy()

    try:
        fmap(x)
    except InnerSolveError:
        return rec.finish(x, BUDGET_EXHAUSTED)
    rec.add(fmap.evals, fmap.last_residual, extrapolated=True)
    return rec.finish(x, CONVERGED if fmap.last_residual <= config.tol else BUDGET_EXHAUSTED)


def _enforced_extrapolation(vectors, k, trace, cycle):
    b = stochasticity_b(k)
    try:
        y = construct_y(YConstructionProblem.from_iterates(vectors, b))
        _, out = shanks_direct(vectors, y, k, which="second")
        return out
    except np.linalg.LinAlgError as exc:
        trace.stats["degenerate_cycles"] += 1
        msg = f"cycle {cycle}: stochastic functional unavailable ({exc}); restarting from last iterate"
        log.warning(msg)
        trace.events.append(msg)
        return vectors[-1]
