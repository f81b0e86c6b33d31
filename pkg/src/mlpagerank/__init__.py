"""Multilinear PageRank solvers with restarted epsilon-algorithm extrapolation."""
from .extrapolation import (
    DegenerateTableError,
    RestartConfig,
    ScalarEpsilonTable,
    ShanksCoefficients,
    Stea2,
    YConstructionProblem,
    construct_y,
    restarted_solve,
    shanks_direct,
    stea2_extrapolate,
    stochasticity_b,
    wynn_scalar,
)
from .generators import (
    Graph,
    GraphModel,
    RealWorldMix,
    build_real_world_tensor,
    dangling_row,
    random_graph,
    random_stochastic_tensor,
    three_cycle_tensor,
)
from .io import parse_tensor, read_matrix_market, read_tensor, saburov_tensor, write_tensor
from .solvers import (
    IterationTrace,
    SfpmMap,
    SolverConfig,
    alpha_sensitivity_bound,
    hopm_step,
    inner_outer_solve,
    inner_outer_step,
    io_error_bound,
    make_inner_outer_map,
    sfpm_error_bound,
    sfpm_solve,
    sfpm_step,
)
from .tensor import PageRankProblem, SparseTensor, apply, pagerank_apply, residual, validate

StochasticTensor = SparseTensor

__all__ = [name for name in dir() if not name.startswith("_")]
