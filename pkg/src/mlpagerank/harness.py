"""Experiment plumbing shared by the command line and the acceptance suite."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .extrapolation import Y_STRATEGIES, RestartConfig, restarted_solve
from .generators import (
    DEFAULT_MODELS,
    Graph,
    GraphModel,
    RealWorldMix,
    build_real_world_tensor,
    random_graph,
    random_stochastic_tensor,
)
from .io import EMBEDDED, read_matrix_market, read_tensor
from .solvers import SfpmMap, SolverConfig, iterate, make_inner_outer_map
from .tensor import PageRankProblem

log = logging.getLogger(__name__)

METHODS = ("sfpm", "io", "sfpm-stea", "io-stea")
SOLVED_THRESHOLD = 1e-8

# 2k per beta for graph-derived tensors, as used for the real-world comparison
GRAPH_MIX_K2 = {0.6: 8, 0.3: 18, 0.1: 30}


@dataclass(frozen=True)
class ProblemSource:
    """Where a tensor comes from.

    ``kind`` is ``file`` (mlpr-tensor path), ``embedded`` (name), ``random``
    (``n``, ``m``, ``seed``, optional ``models``), ``graph`` (MatrixMarket
    path plus ``beta``) or ``random_graph`` (``n``, ``p``, ``seed``, ``beta``).
    """

    kind: str
    path: str | None = None
    name: str | None = None
    n: int | None = None
    m: int | None = None
    seed: int = 0
    beta: float | None = None
    p: float | None = None
    models: tuple = ()

    @property
    def label(self) -> str:
        if self.kind == "file":
            return self.path
        if self.kind == "embedded":
            return self.name
        if self.kind == "random":
            return f"random-n{self.n}-m{self.m}-s{self.seed}"
        if self.kind == "graph":
            return f"{self.path}@beta={self.beta}"
        return f"gnp-n{self.n}-p{self.p}-s{self.seed}@beta={self.beta}"

    def load_tensor(self):
        if self.kind == "file":
            return read_tensor(self.path)
        if self.kind == "embedded":
            if self.name not in EMBEDDED:
                raise ValueError(f"unknown embedded problem {self.name!r}; known: {sorted(EMBEDDED)}")
            return EMBEDDED[self.name]()
        if self.kind == "random":
            models = tuple(GraphModel(t) for t in self.models) or DEFAULT_MODELS
            return random_stochastic_tensor(self.n, self.m, np.random.default_rng(self.seed), models)
        if self.kind == "graph":
            adj = read_matrix_market(self.path)
            directed = (adj != adj.T).nnz > 0
            return build_real_world_tensor(Graph(adj.shape[0], adj, directed), RealWorldMix(self.beta))
        if self.kind == "random_graph":
            g = random_graph(GraphModel("erdrey", {"p": self.p}), self.n, np.random.default_rng(self.seed))
            return build_real_world_tensor(g, RealWorldMix(self.beta))
        raise ValueError(f"unknown problem source {self.kind!r}")


@dataclass(frozen=True)
class RunSpec:
    method: str
    source: ProblemSource
    alpha: float = 0.85
    gamma: float = 0.0
    tol: float = 1e-8
    max_evals: int | None = None
    max_iters: int = 100_000
    k2: int = 10
    cycles: int = 4
    y_strategy: str = "last_extrapolated"
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.extrapolated:
            if self.k2 < 2 or self.k2 % 2:
                raise ValueError(f"--k2 must be an even integer >= 2, got {self.k2}")
            if self.cycles < 1:
                raise ValueError("--cycles must be >= 1")
            if self.y_strategy not in Y_STRATEGIES:
                raise ValueError(f"y strategy must be one of {Y_STRATEGIES}")

    @property
    def extrapolated(self) -> bool:
        return self.method.endswith("-stea")

    @property
    def base(self) -> str:
        return self.method.removesuffix("-stea")


def run(spec: RunSpec, problem: PageRankProblem | None = None, s0=None):
    """Execute one run and return its :class:`IterationTrace`."""
    if problem is None:
        problem = PageRankProblem(spec.source.load_tensor(), spec.alpha)
    s0 = problem.teleport if s0 is None else np.asarray(s0, dtype=float)
    cfg = SolverConfig(gamma=spec.gamma, tol=spec.tol, max_iters=spec.max_iters, max_evals=spec.max_evals)
    fmap = SfpmMap(problem, spec.gamma) if spec.base == "sfpm" else make_inner_outer_map(problem, cfg)
    if spec.extrapolated:
        rc = RestartConfig(
            k=spec.k2 // 2, cycles=spec.cycles, y_strategy=spec.y_strategy, seed=spec.seed,
            tol=spec.tol, max_evals=spec.max_evals,
        )
        trace = restarted_solve(fmap, s0, rc, problem, method=spec.method)
    else:
        trace = iterate(fmap, s0, spec.tol, spec.max_iters, spec.max_evals, method=spec.method)
    if spec.out:
        trace.to_csv(spec.out)
    return trace


@dataclass(frozen=True)
class SummaryRow:
    label: str
    method: str
    iterations: int
    map_evals: int
    wall_seconds: float
    final_residual: float
    error: str = ""

    @property
    def solved(self) -> bool:
        return is_solved(self.final_residual)

    @classmethod
    def from_trace(cls, label, trace):
        return cls(label, trace.method, trace.iterations, trace.map_evals, trace.wall_seconds, trace.final_residual)


def is_solved(residual: float, threshold: float = SOLVED_THRESHOLD) -> bool:
    return bool(residual <= threshold)


SUMMARY_FIELDS = ("label", "method", "iterations", "map_evals", "wall_seconds", "final_residual", "solved", "error")


@dataclass
class ComparisonSummary:
    rows: list = field(default_factory=list)

    def methods(self) -> list[str]:
        return sorted({r.method for r in self.rows})

    def for_method(self, method: str) -> list[SummaryRow]:
        return [r for r in self.rows if r.method == method]

    def solved_count(self, method: str) -> int:
        return sum(r.solved for r in self.for_method(method))

    def median_residual(self, method: str) -> float:
        vals = [r.final_residual for r in self.for_method(method) if not r.error]
        return float(np.median(vals)) if vals else math.nan

    def median_evals(self, method: str) -> float:
        vals = [r.map_evals for r in self.for_method(method) if not r.error]
        return float(np.median(vals)) if vals else math.nan

    def to_csv(self, path_or_file) -> None:
        own = isinstance(path_or_file, str) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(SUMMARY_FIELDS)
            for r in sorted(self.rows, key=lambda r: (r.label, r.method)):
                w.writerow([r.label, r.method, r.iterations, r.map_evals, f"{r.wall_seconds:.6f}",
                            repr(r.final_residual), int(r.solved), r.error])
        finally:
            if own:
                fh.close()

    def table(self) -> str:
        lines = [f"{'method':<10} {'runs':>5} {'solved':>7} {'median evals':>13} {'median residual':>16}"]
        for m in self.methods():
            lines.append(
                f"{m:<10} {len(self.for_method(m)):>5} {self.solved_count(m):>7} "
                f"{self.median_evals(m):>13.1f} {self.median_residual(m):>16.3e}"
            )
        return "\n".join(lines)


def _run_group(specs: list[RunSpec], equal_budget: bool) -> list[SummaryRow]:
    """All methods on one problem; extrapolated arms first when budgets are matched."""
    rows = []
    try:
        problem = PageRankProblem(specs[0].source.load_tensor(), specs[0].alpha)
    except Exception as exc:  # recorded, suite continues
        return [SummaryRow(s.source.label, s.method, 0, 0, 0.0, math.inf, f"{type(exc).__name__}: {exc}") for s in specs]
    budget = None
    for spec in sorted(specs, key=lambda s: not s.extrapolated):
        if equal_budget and not spec.extrapolated and budget is not None:
            spec = replace(spec, max_evals=budget, max_iters=10**9)
        try:
            trace = run(spec, problem)
        except Exception as exc:
            rows.append(SummaryRow(spec.source.label, spec.method, 0, 0, 0.0, math.inf, f"{type(exc).__name__}: {exc}"))
            continue
        if spec.extrapolated:
            budget = trace.map_evals if budget is None else max(budget, trace.map_evals)
        rows.append(SummaryRow.from_trace(spec.source.label, trace))
    return rows


def bench(specs: list[RunSpec], equal_budget: bool = False, jobs: int = 1) -> ComparisonSummary:
    """Run a suite; runs sharing a problem source form one comparison group.

    With ``equal_budget`` each plain arm gets the map-evaluation count that
    the extrapolated arm of the same group consumed.
    """
    if not specs:
        raise ValueError("benchmark suite is empty")
    groups: dict = {}
    for s in specs:
        groups.setdefault((s.source, s.alpha), []).append(s)
    work = list(groups.values())
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_group, work, [equal_budget] * len(work)))
    else:
        results = [_run_group(g, equal_budget) for g in work]
    return ComparisonSummary([r for rows in results for r in rows])


__all__ = [
    "METHODS", "SOLVED_THRESHOLD", "GRAPH_MIX_K2", "ProblemSource", "RunSpec", "run", "SummaryRow",
    "ComparisonSummary", "is_solved", "bench",
]
