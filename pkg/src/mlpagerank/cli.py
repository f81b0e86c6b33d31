"""``mlpr`` command line: solve, generate and bench."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .extrapolation import Y_STRATEGIES
from .generators import MODEL_TAGS
from .harness import METHODS, GRAPH_MIX_K2, ProblemSource, RunSpec, bench, run
from .io import TensorFormatError, write_tensor
from .tensor import PageRankProblem, validate

GAMMA_HELP = (
    "shift gamma >= 0 for the fixed-point step (default 0). When alpha >= 1/(m-1) "
    "convergence is not guaranteed; gamma = (m-1)/2 is the recommended shift."
)


def _add_problem_args(p):
    g = p.add_argument_group("problem source (pick one)")
    g.add_argument("--tensor", help="mlpr-tensor v1 file")
    g.add_argument("--problem", help="embedded problem name (saburov)")
    g.add_argument("--random", metavar="N,M", help="random tensor of dimension N and order M (seeded by --seed)")
    g.add_argument("--graph", help="MatrixMarket adjacency file, turned into an order-3 tensor with --beta")
    g.add_argument("--gnp", metavar="N,P", help="seeded G(N, P) graph, turned into an order-3 tensor with --beta")
    g.add_argument("--beta", type=float, help="triangle/edge mix for graph-derived tensors")
    g.add_argument("--models", help=f"comma list of graph models for --random, from {','.join(MODEL_TAGS)}")


def _add_method_args(p, multi=False):
    if multi:
        p.add_argument("--methods", default="sfpm,sfpm-stea", help=f"comma list from {','.join(METHODS)}")
    else:
        p.add_argument("--method", default="sfpm", choices=METHODS)
    p.add_argument("--alpha", type=float, default=0.85, help="damping in [0, 1)")
    p.add_argument("--gamma", type=float, default=0.0, help=GAMMA_HELP)
    p.add_argument("--tol", type=float, default=1e-8, help="residual threshold")
    p.add_argument("--max-evals", type=int, default=None, help="cap on tensor applications")
    p.add_argument("--max-iters", type=int, default=100_000, help="cap on (outer) iterations")
    p.add_argument("--k2", type=int, default=10, help="extrapolation width 2k (even)")
    p.add_argument("--cycles", type=int, default=4, help="restart cycles")
    p.add_argument("--y-strategy", default="last_extrapolated", choices=Y_STRATEGIES)
    p.add_argument("--seed", type=int, default=0, help="seed for generated problems and the initial y")


def _pair(text, kinds):
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected two comma separated values, got {text!r}")
    return tuple(k(x) for k, x in zip(kinds, parts))


def _sources(args, seeds=None) -> list[ProblemSource]:
    given = [a for a in ("tensor", "problem", "random", "graph", "gnp") if getattr(args, a)]
    if len(given) != 1:
        raise ValueError("give exactly one of --tensor, --problem, --random, --graph, --gnp")
    seeds = seeds or [args.seed]
    models = tuple(args.models.split(",")) if getattr(args, "models", None) else ()
    if args.tensor:
        return [ProblemSource("file", path=args.tensor)]
    if args.problem:
        return [ProblemSource("embedded", name=args.problem)]
    if args.random:
        n, m = _pair(args.random, (int, int))
        return [ProblemSource("random", n=n, m=m, seed=s, models=models) for s in seeds]
    betas = _betas(args)
    if args.graph:
        return [ProblemSource("graph", path=args.graph, beta=b) for b in betas]
    n, p = _pair(args.gnp, (int, float))
    return [ProblemSource("random_graph", n=n, p=p, seed=s, beta=b) for s in seeds for b in betas]


def _betas(args):
    raw = getattr(args, "betas", None)
    if raw:
        return [float(b) for b in raw.split(",")]
    if args.beta is None:
        raise ValueError("graph-derived problems need --beta")
    return [args.beta]


def _spec(args, method, source, out=None, k2=None) -> RunSpec:
    return RunSpec(
        method=method, source=source, alpha=args.alpha, gamma=args.gamma, tol=args.tol,
        max_evals=args.max_evals, max_iters=args.max_iters, k2=k2 or args.k2, cycles=args.cycles,
        y_strategy=args.y_strategy, seed=args.seed, out=out,
    )


def cmd_solve(args) -> int:
    (source,) = _sources(args)
    tensor = source.load_tensor()
    diag = validate(tensor)
    if not diag.ok:
        print(f"error: tensor is not stochastic: {diag}", file=sys.stderr)
        return 2
    problem = PageRankProblem(tensor, args.alpha)
    spec = _spec(args, args.method, source, out=args.out)
    trace = run(spec, problem)
    if args.solution:
        np.savetxt(args.solution, trace.final, fmt="%.17g")
    solved = trace.converged
    print(
        f"method={trace.method} solved={'yes' if solved else 'no'} reason={trace.reason} "
        f"iterations={trace.iterations} map_evals={trace.map_evals} "
        f"final_residual={trace.final_residual:.6e} wall_seconds={trace.wall_seconds:.4f}"
    )
    for ev in trace.events:
        print(f"note: {ev}", file=sys.stderr)
    return 0 if solved else 1


def cmd_generate(args) -> int:
    (source,) = _sources(args)
    tensor = source.load_tensor()
    if args.out is None:
        raise ValueError("generate needs --out")
    write_tensor(tensor, args.out)
    print(f"wrote {args.out}: m={tensor.m} n={tensor.n}")
    return 0


def cmd_bench(args) -> int:
    lo, hi = _pair(args.seeds, (int, int)) if args.seeds else (args.seed, args.seed + 1)
    sources = _sources(args, seeds=list(range(lo, hi)))
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    specs = []
    for src in sources:
        k2 = GRAPH_MIX_K2.get(src.beta) if args.preset == "graph-mix" else None
        if args.preset == "graph-mix" and k2 is None:
            raise ValueError(f"graph-mix preset has no 2k for beta={src.beta}; use one of {sorted(GRAPH_MIX_K2)}")
        specs.extend(_spec(args, m, src, k2=k2) for m in methods)
    if args.filter:
        specs = [s for s in specs if args.filter in f"{s.source.label} {s.method}"]
        if not specs:
            raise ValueError(f"filter {args.filter!r} matches no runs")
    summary = bench(specs, equal_budget=args.equal_budget, jobs=args.jobs)
    print(summary.table())
    failed = [r for r in summary.rows if r.error]
    for r in failed:
        print(f"run failed: {r.label} {r.method}: {r.error}", file=sys.stderr)
    if args.out:
        summary.to_csv(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlpr", description="Multilinear PageRank solvers with extrapolation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings from the solvers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem and write its residual trace")
    _add_problem_args(p)
    _add_method_args(p)
    p.add_argument("--out", help="trace CSV path")
    p.add_argument("--solution", help="write the final vector, one entry per line")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("generate", help="write a tensor file")
    _add_problem_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output mlpr-tensor v1 path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bench", help="compare methods over a suite of problems")
    _add_problem_args(p)
    _add_method_args(p, multi=True)
    p.add_argument("--seeds", metavar="LO,HI", help="seed range [LO, HI) for generated problems")
    p.add_argument("--betas", help="comma list of betas for graph-derived problems")
    p.add_argument("--preset", choices=("graph-mix",), help="graph-mix: 2k = 8, 18, 30 for beta = 0.6, 0.3, 0.1")
    p.add_argument("--equal-budget", action="store_true",
                   help="give plain methods the evaluation count the extrapolated arm used")
    p.add_argument("--filter", help="keep runs whose '<label> <method>' contains this text")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", help="summary CSV path")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except TensorFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
