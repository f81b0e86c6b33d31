"""Fixed-point iterations for multilinear PageRank.

Two basic schemes are provided, each as a step function and as a
self-contained solve loop:

* the shifted fixed-point method (SFPM)::

      s+ = alpha/(1+g) P s^{m-1} + (1-alpha)/(1+g) v + g/(1+g) s

* the inner-outer method (IOM), whose outer step solves the contractive
  problem ``s = a' P_PR s^{m-1} + (1 - a') s_l`` with ``a' = alpha/(m-1)``.

Both are also exposed as fixed-point maps (:class:`SfpmMap`,
:class:`InnerOuterMap`) that the extrapolation driver can restart.  A map
reports the residual of its *input* as a by-product of evaluating it, so the
stopping test never costs an extra tensor application.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .tensor import PageRankProblem, apply, pagerank_apply

CONVERGED = "converged"
BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass
class SolverConfig:
    """Parameters shared by the SFPM and IOM loops.

    ``max_evals`` caps tensor applications (inner ones included) and is what
    equal-budget comparisons use; ``max_iters`` caps (outer) iterations.
    ``inner_tol`` and ``inner_max_iters`` default per problem, see
    :func:`inner_defaults`.
    """

    gamma: float = 0.0
    tol: float = 1e-8
    max_iters: int = 100_000
    max_evals: int | None = None
    inner_tol: float | None = None
    inner_max_iters: int | None = None

    def __post_init__(self):
        if not self.tol >= 1e-15:
            raise ValueError(f"tol must be >= 1e-15, got {self.tol}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")


class TraceRecord(NamedTuple):
    step: int
    cum_map_evals: int
    residual: float
    wall_seconds: float
    is_extrapolated: bool


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)
    final: np.ndarray | None = None
    reason: str = BUDGET_EXHAUSTED
    method: str = ""
    events: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.reason == CONVERGED

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    @property
    def final_residual(self) -> float:
        return self.records[-1].residual if self.records else math.inf

    @property
    def map_evals(self) -> int:
        return self.records[-1].cum_map_evals if self.records else 0

    @property
    def iterations(self) -> int:
        return self.records[-1].step if self.records else 0

    @property
    def wall_seconds(self) -> float:
        return self.records[-1].wall_seconds if self.records else 0.0

    def evals_to_reach(self, threshold: float) -> int | None:
        """Cumulative map evaluations at the first record at or below ``threshold``."""
        for r in self.records:
            if r.residual <= threshold:
                return r.cum_map_evals
        return None

    def to_csv(self, path_or_file) -> None:
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(TraceRecord._fields)
            for r in self.records:
                w.writerow([r.step, r.cum_map_evals, repr(r.residual), f"{r.wall_seconds:.6f}", int(r.is_extrapolated)])
        finally:
            if own:
                fh.close()


class _Recorder:
    def __init__(self, method):
        self.trace = IterationTrace(method=method)
        self.t0 = time.perf_counter()

    def add(self, evals, res, extrapolated=False):
        step = len(self.trace.records)
        self.trace.records.append(
            TraceRecord(step, int(evals), float(res), time.perf_counter() - self.t0, bool(extrapolated))
        )

    def finish(self, x, reason):
        self.trace.final = np.asarray(x, dtype=float)
        self.trace.reason = reason
        return self.trace


# --- single steps ---------------------------------------------------------------


def sfpm_step(problem: PageRankProblem, s, gamma: float = 0.0) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    a, g = problem.alpha, gamma
    return (a * apply(problem.tensor, s) + (1 - a) * problem.teleport + g * s) / (1 + g)


def hopm_step(tensor, gamma: float, s) -> np.ndarray:
    """``A s^{m-1} + gamma * s``.  Does not preserve stochasticity; diagnostics only."""
    s = np.asarray(s, dtype=float)
    return apply(tensor, s) + gamma * s


class InnerSolveError(RuntimeError):
    """Inner IOM solve ran out of iterations; ``best`` holds the last iterate."""

    def __init__(self, best, residual, iters):
        super().__init__(f"inner solve stopped after {iters} iterations at residual {residual:.3e}")
        self.best = best
        self.residual = residual
        self.iters = iters


def inner_defaults(problem: PageRankProblem, tol: float, inner_tol=None, inner_max_iters=None):
    """Resolve inner IOM settings.

    The inner map contracts with rate at most ``alpha**2`` in the 1-norm, so
    the default iteration cap is ``10 n`` plus the number of steps that rate
    needs to go from 2 down to ``inner_tol``.
    """
    if inner_tol is None:
        inner_tol = max(tol / 10, 1e-13)
    if inner_max_iters is None:
        rate = problem.alpha ** 2
        need = 0 if rate == 0 else math.ceil(math.log(inner_tol / 2) / math.log(rate))
        inner_max_iters = 10 * problem.n + need
    return inner_tol, inner_max_iters


def _inner_solve(problem, s_l, inner_tol, inner_max_iters):
    """Returns ``(s_next, evals, outer_residual_of_s_l)``."""
    s_l = np.asarray(s_l, dtype=float)
    at = problem.alpha / (problem.m - 1)
    x = s_l
    outer_res = None
    for it in range(inner_max_iters + 1):
        y = pagerank_apply(problem, x)
        if outer_res is None:
            outer_res = float(np.abs(y - x).sum())
        nxt = at * y + (1 - at) * s_l
        r = float(np.abs(nxt - x).sum())
        if r <= inner_tol:
            return nxt, it + 1, outer_res
        x = nxt
    raise InnerSolveError(x, r, inner_max_iters)


def inner_outer_step(problem: PageRankProblem, s, inner_tol: float = 1e-13, inner_max_iters: int | None = None):
    """One outer IOM step: solve ``s = a' P_PR s^{m-1} + (1 - a') s_l`` by SFPM with gamma 0."""
    if inner_max_iters is None:
        _, inner_max_iters = inner_defaults(problem, inner_tol, inner_tol)
    return _inner_solve(problem, s, inner_tol, inner_max_iters)[0]


# --- fixed-point maps -------------------------------------------------------------


class SfpmMap:
    """SFPM step as a fixed-point map with evaluation accounting."""

    def __init__(self, problem: PageRankProblem, gamma: float = 0.0):
        self.problem = problem
        self.gamma = gamma
        self.evals = 0
        self.last_residual = math.nan

    def __call__(self, s):
        p = self.problem
        # When alpha (m-1) > 1 the map amplifies round-off in the total mass
        # geometrically, so project the input back onto the simplex first.
        s = s / s.sum()
        y = pagerank_apply(p, s)
        self.evals += 1
        self.last_residual = float(np.abs(y - s).sum())
        return (y + self.gamma * s) / (1 + self.gamma)


class InnerOuterMap:
    """Outer IOM step as a fixed-point map; ``evals`` counts inner applications."""

    def __init__(self, problem: PageRankProblem, inner_tol: float, inner_max_iters: int):
        self.problem = problem
        self.inner_tol = inner_tol
        self.inner_max_iters = inner_max_iters
        self.evals = 0
        self.last_residual = math.nan

    def __call__(self, s):
        s = s / s.sum()
        try:
            nxt, ev, res = _inner_solve(self.problem, s, self.inner_tol, self.inner_max_iters)
        except InnerSolveError:
            self.evals += self.inner_max_iters + 1
            raise
        self.evals += ev
        self.last_residual = res
        return nxt


class ResidualMap:
    """Wrap a bare callable ``F`` so it reports evaluations and input residuals.

    Each call costs one application of ``F`` plus one of the PageRank map.
    """

    def __init__(self, fn, problem: PageRankProblem):
        self.fn = fn
        self.problem = problem
        self.evals = 0
        self.last_residual = math.nan

    def __call__(self, s):
        y = pagerank_apply(self.problem, s)
        self.last_residual = float(np.abs(y - s).sum())
        self.evals += 2
        return np.asarray(self.fn(s), dtype=float)


def as_fixed_point_map(fn, problem):
    if hasattr(fn, "last_residual") and hasattr(fn, "evals"):
        return fn
    return ResidualMap(fn, problem)


def iterate(fmap, s0, tol: float, max_iters: int, max_evals: int | None = None, method: str = "") -> IterationTrace:
    """Run ``s <- fmap(s)`` until the residual of the current iterate is ``<= tol``.

    Record ``l`` holds the residual of ``s_l``; it becomes known when
    ``fmap(s_l)`` is evaluated, so the final vector is always one whose
    residual has been measured.
    """
    rec = _Recorder(method)
    s = np.asarray(s0, dtype=float)
    step = 0
    while True:
        try:
            nxt = fmap(s)
        except InnerSolveError:
            return rec.finish(s, BUDGET_EXHAUSTED)
        r = fmap.last_residual
        rec.add(fmap.evals, r)
        if r <= tol:
            return rec.finish(s, CONVERGED)
        if step >= max_iters or (max_evals is not None and fmap.evals >= max_evals):
            return rec.finish(s, BUDGET_EXHAUSTED)
        s = nxt
        step += 1


def sfpm_solve(problem: PageRankProblem, config: SolverConfig | None = None, s0=None) -> IterationTrace:
    config = config or SolverConfig()
    s0 = problem.teleport if s0 is None else s0
    fmap = SfpmMap(problem, config.gamma)
    return iterate(fmap, s0, config.tol, config.max_iters, config.max_evals, method="sfpm")


def make_inner_outer_map(problem: PageRankProblem, config: SolverConfig) -> InnerOuterMap:
    itol, imax = inner_defaults(problem, config.tol, config.inner_tol, config.inner_max_iters)
    return InnerOuterMap(problem, itol, imax)


def inner_outer_solve(problem: PageRankProblem, config: SolverConfig | None = None, s0=None) -> IterationTrace:
    config = config or SolverConfig()
    s0 = problem.teleport if s0 is None else s0
    fmap = make_inner_outer_map(problem, config)
    return iterate(fmap, s0, config.tol, config.max_iters, config.max_evals, method="io")


# --- theoretical bounds -------------------------------------------------------------


def sfpm_error_bound(alpha: float, gamma: float, m: int, ell: int) -> float:
    """``2 ((alpha (m-1) + gamma) / (1 + gamma))**ell``, valid for ``alpha (m-1) < 1``."""
    if not alpha * (m - 1) < 1 or alpha < 0 or gamma < 0:
        raise ValueError("SFPM bound requires 0 <= alpha < 1/(m-1) and gamma >= 0")
    return 2.0 * ((alpha * (m - 1) + gamma) / (1 + gamma)) ** ell


def io_error_bound(alpha: float, m: int, ell: int) -> float:
    if not 0 <= alpha < 1 / (m - 1):
        raise ValueError("inner-outer bound requires 0 <= alpha < 1/(m-1)")
    return 2.0 * ((1 - alpha / (m - 1)) / (1 - alpha ** 2)) ** ell


def alpha_sensitivity_bound(alpha: float, beta: float, m: int) -> float:
    """Upper bound on ``||s_alpha - s_beta||_1`` for ``0 < alpha < 1/(m-1)``."""
    if not 0 < alpha < 1 / (m - 1) or not 0 < beta < 1:
        raise ValueError("sensitivity bound requires 0 < alpha < 1/(m-1) and 0 < beta < 1")
    return 2.0 * abs(beta - alpha) / (1 - alpha * (m - 1))


def recommended_gamma(m: int) -> float:
    return (m - 1) / 2
