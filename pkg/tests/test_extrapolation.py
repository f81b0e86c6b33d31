import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlpagerank.extrapolation import (
    DegenerateTableError,
    RestartConfig,
    ScalarEpsilonTable,
    Stea2,
    YConstructionProblem,
    antidiagonal,
    construct_y,
    correction_vector,
    restarted_solve,
    shanks_coefficients,
    shanks_direct,
    shanks_system,
    stea2_extrapolate,
    stochasticity_b,
    toeplitz_matrix,
    wynn_epsilon,
    wynn_scalar,
)
from mlpagerank.generators import random_stochastic_tensor
from mlpagerank.io import saburov_tensor
from mlpagerank.solvers import SfpmMap, SolverConfig, make_inner_outer_map, sfpm_solve
from mlpagerank.tensor import PageRankProblem, residual


def kernel_sequence(rng, n, k, radius=0.5, size=0.1):
    """``s + Q M^l z`` where ``M`` has the k eigenvalues ``radius * (k-th roots of -1)``."""
    theta = np.pi * (2 * np.arange(k) + 1) / k
    M = np.zeros((k, k))
    i = 0
    for t in theta[: k // 2]:
        c, s = radius * np.cos(t), radius * np.sin(t)
        M[i:i + 2, i:i + 2] = [[c, -s], [s, c]]
        i += 2
    if k % 2:
        M[i, i] = -radius
    limit = rng.dirichlet(np.ones(n))
    Q = rng.standard_normal((n, k))
    Q *= size / np.abs(Q).sum()
    w = rng.standard_normal(k)
    seq = []
    for _ in range(2 * k + 1):
        seq.append(limit + Q @ w)
        w = M @ w
    return limit, seq


# --- scalar table -------------------------------------------------------------------------


def test_wynn_geometric_is_exact():
    t = wynn_epsilon([1 + 2.0**-l for l in range(3)])
    assert t.entry(2, 0) == 1.0


def test_wynn_two_term_kernel():
    t = wynn_epsilon([3 + 2 * 0.5**l + 0.2**l for l in range(5)])
    assert t.entry(4, 0) == pytest.approx(3, abs=1e-10)


def test_wynn_constant_sequence_degenerates():
    t = wynn_epsilon([2.0, 2.0, 2.0])
    assert t.is_degenerate
    assert (1, 0) in t.degenerate


def test_wynn_scalar_extends_diagonal():
    t = ScalarEpsilonTable()
    for v in (1.0, 0.5, 0.25):
        wynn_scalar(t, v)
    assert len(t) == 3
    assert t.entry(0, 2) == 0.25
    assert t.entry(-1, 1) == 0.0
    assert t.entry(1, 0) == pytest.approx(1 / (0.5 - 1.0))


# --- STEA2 ------------------------------------------------------------------------------------


@pytest.mark.parametrize("k", [1, 2, 4])
def test_stea2_kernel_exactness_n20(k):
    rng = np.random.default_rng(k)
    limit, seq = kernel_sequence(rng, 20, k)
    y = rng.standard_normal(20)
    out = stea2_extrapolate(seq, [y @ s for s in seq], k)
    assert np.abs(out - limit).sum() <= 1e-10 * np.abs(limit).sum()


def test_stea2_geometric_k1():
    limit = np.array([0.2, 0.3, 0.5])
    d = np.array([1.0, -2.0, 1.0])
    seq = [limit + 0.6**l * d for l in range(3)]
    y = np.array([0.3, 0.1, 0.6])
    np.testing.assert_allclose(stea2_extrapolate(seq, [y @ s for s in seq], 1), limit, atol=1e-14)


def test_stea2_matches_direct_on_smooth_sequence():
    rng = np.random.default_rng(7)
    p = PageRankProblem(saburov_tensor(), 0.45)
    s = rng.dirichlet(np.ones(3))
    seq = [s]
    for _ in range(4):
        seq.append(SfpmMap(p)(seq[-1]))
    y = rng.standard_normal(3)
    out = stea2_extrapolate(seq, [y @ v for v in seq], 2)
    _, ref = shanks_direct(seq, y, 2)
    assert np.abs(out - ref).sum() <= 1e-8 * np.abs(ref).sum()


def test_stea2_degeneracy_raises():
    seq = [np.array([0.5, 0.5])] * 3
    with pytest.raises(DegenerateTableError):
        stea2_extrapolate(seq, [1.0, 1.0, 1.0], 1)


def test_stea2_memory_bound():
    rng = np.random.default_rng(1)
    for k in (1, 3, 6):
        st_ = Stea2(k)
        for _ in range(2 * k + 1):
            s = rng.random(5)
            st_.push(s, float(s.sum()))
        assert st_.max_resident <= k + 2


def test_stea2_best_available_skips_nan():
    st_ = Stea2(2)
    for _ in range(5):
        st_.push(np.ones(3), 1.0)
    vec, order = st_.best_available()
    assert order == 0 and np.all(np.isfinite(vec))


# --- direct system -----------------------------------------------------------------------------


def test_shanks_direct_k0():
    seq = [np.array([0.1, 0.9])]
    coef, out = shanks_direct(seq, np.ones(2), 0)
    np.testing.assert_array_equal(coef.a, [1.0])
    np.testing.assert_array_equal(out, seq[0])


def test_shanks_direct_first_and_second_on_kernel():
    rng = np.random.default_rng(3)
    limit, seq = kernel_sequence(rng, 15, 3)
    y = rng.standard_normal(15)
    for which in ("first", "second"):
        _, out = shanks_direct(seq, y, 3, which=which)
        assert np.abs(out - limit).sum() <= 1e-10


def test_shanks_system_layout():
    S = shanks_system([1.0, 2.0, 3.0, 4.0], 2)
    np.testing.assert_array_equal(S, [[1, 1, 1], [1, 2, 3], [2, 3, 4]])


def test_shanks_singular_system():
    with pytest.raises(np.linalg.LinAlgError):
        shanks_coefficients(np.zeros(4), 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_coefficients_normalized(k, seed):
    rng = np.random.default_rng(seed)
    coef = shanks_coefficients(rng.standard_normal(2 * k), k)
    assert abs(coef.a.sum() - 1) <= 1e-12 * max(1, np.abs(coef.a).sum())


# --- stochasticity-enforcing functional ----------------------------------------------------


def test_stochasticity_b_k2():
    np.testing.assert_array_equal(stochasticity_b(2), [-0.25, 1.0, -0.25, 0.0])


def test_toeplitz_k2_spd_and_close_to_identity():
    T = toeplitz_matrix(stochasticity_b(2), 2)
    np.testing.assert_array_equal(T, [[1, -0.25, 0], [-0.25, 1, -0.25], [0, -0.25, 1]])
    eig = np.linalg.eigvalsh(T)
    # tridiagonal Toeplitz: 1 - 0.5 cos(j pi / 4)
    np.testing.assert_allclose(eig, [1 - np.sqrt(2) / 4, 1.0, 1 + np.sqrt(2) / 4], atol=1e-15)
    assert np.linalg.norm(np.eye(3) - T, 2) < 1


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_system_factorization(k):
    b = stochasticity_b(k)
    S = shanks_system(b, k)
    J = antidiagonal(k)
    e1 = np.eye(k + 1)[:, 0]
    np.testing.assert_allclose(S @ J, toeplitz_matrix(b, k) + np.outer(e1, correction_vector(b, k)), atol=1e-15)


def test_construct_y_identity_differences():
    b = np.array([0.3, -1.0, 2.0, 0.5])
    y = construct_y(YConstructionProblem(np.eye(4), b))
    np.testing.assert_allclose(y, b, atol=1e-15)


def test_construct_y_reproduces_moments():
    rng = np.random.default_rng(4)
    D = rng.standard_normal((12, 6))
    b = rng.standard_normal(6)
    y = construct_y(YConstructionProblem(D, b))
    np.testing.assert_allclose(y @ D, b, atol=1e-10)


def test_construct_y_zero_moments_flagged():
    rng = np.random.default_rng(5)
    seq = [rng.dirichlet(np.ones(8)) for _ in range(5)]
    y = construct_y(YConstructionProblem.from_iterates(seq, np.zeros(4)))
    np.testing.assert_allclose(y, 0, atol=1e-15)
    with pytest.raises(np.linalg.LinAlgError):
        shanks_direct(seq, y, 2)


def test_construct_y_rank_deficient():
    D = np.ones((6, 2))
    with pytest.raises(np.linalg.LinAlgError):
        construct_y(YConstructionProblem(D, np.ones(2)))
    with pytest.raises(np.linalg.LinAlgError):
        construct_y(YConstructionProblem(np.ones((3, 4)), np.ones(4)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_enforced_coefficients_nonnegative(k, seed):
    rng = np.random.default_rng(seed)
    seq = [rng.dirichlet(np.ones(20)) for _ in range(2 * k + 1)]
    y = construct_y(YConstructionProblem.from_iterates(seq, stochasticity_b(k)))
    coef, out = shanks_direct(seq, y, k)
    assert coef.a.min() >= -1e-12
    assert out.min() >= -1e-10 and abs(out.sum() - 1) <= 1e-10


# --- restarted driver ----------------------------------------------------------------------


class LinearMap:
    """``F(s) = limit + A (s - limit)`` with two active modes; counts evaluations."""

    def __init__(self, limit, A):
        self.limit, self.A = limit, A
        self.evals = 0
        self.last_residual = float("nan")

    def __call__(self, s):
        out = self.limit + self.A @ (s - self.limit)
        self.evals += 1
        self.last_residual = float(np.abs(out - s).sum())
        return out


def test_restart_kernel_exact_one_cycle():
    limit = np.array([0.2, 0.3, 0.1, 0.4])
    dirs = np.array([[1.0, 0.0], [-1.0, 1.0], [0.0, -1.0], [0.0, 0.0]])
    A = dirs @ np.diag([0.5, -0.3]) @ np.linalg.pinv(dirs)
    x0 = limit + dirs @ np.array([0.05, 0.02])
    tr = restarted_solve(LinearMap(limit, A), x0, RestartConfig(k=2, cycles=1, tol=1e-15))
    np.testing.assert_allclose(tr.final, limit, atol=1e-13)
    assert tr.map_evals == 5


def test_restart_identity_falls_back(caplog):
    p = PageRankProblem(saburov_tensor(), 0.5)
    x0 = np.array([0.2, 0.3, 0.5])
    with caplog.at_level(logging.WARNING):
        tr = restarted_solve(lambda s: s.copy(), x0, RestartConfig(k=1, cycles=2), p)
    np.testing.assert_array_equal(tr.final, x0)
    assert tr.stats["degenerate_cycles"] == 2
    assert any("degenerate" in e for e in tr.events)


def test_restart_saburov_beats_plain():
    p = PageRankProblem(saburov_tensor(), 0.99)
    tr = restarted_solve(SfpmMap(p, 1.0), p.teleport, RestartConfig(k=8, cycles=5), p)
    assert tr.final_residual <= 1e-8
    assert residual(p, tr.final) <= 1e-8
    plain = sfpm_solve(p, SolverConfig(gamma=1.0, max_evals=tr.map_evals))
    assert plain.final_residual >= 1e-4
    assert tr.stats["max_resident_vectors"] <= 8 + 2


def test_restart_trace_flags_and_monotone_evals():
    p = PageRankProblem(saburov_tensor(), 0.99)
    tr = restarted_solve(SfpmMap(p, 1.0), p.teleport, RestartConfig(k=3, cycles=3, tol=1e-15), p)
    evals = [r.cum_map_evals for r in tr.records]
    assert all(b > a for a, b in zip(evals, evals[1:]))
    flagged = [r.step for r in tr.records if r.is_extrapolated]
    assert flagged == [6, 12, 18]
    assert len(tr.records) == 3 * 6 + 1


@pytest.mark.parametrize("strategy", ["fixed_random", "last_extrapolated", "stochasticity_enforcing"])
def test_restart_strategies_converge_with_io(strategy):
    p = PageRankProblem(random_stochastic_tensor(10, 3, np.random.default_rng(1)), 0.9)
    fmap = make_inner_outer_map(p, SolverConfig(tol=1e-10))
    tr = restarted_solve(fmap, p.teleport, RestartConfig(k=2, cycles=30, y_strategy=strategy, tol=1e-10), p)
    assert tr.converged
    assert residual(p, tr.final) <= 1e-10


def test_restart_budget_cap():
    p = PageRankProblem(saburov_tensor(), 0.99)
    tr = restarted_solve(SfpmMap(p, 0.1), p.teleport, RestartConfig(k=5, cycles=50, max_evals=23), p)
    assert tr.map_evals == 23 and not tr.converged


def test_restart_config_validation():
    with pytest.raises(ValueError):
        RestartConfig(k=0)
    with pytest.raises(ValueError):
        RestartConfig(cycles=0)
    with pytest.raises(ValueError):
        RestartConfig(y_strategy="other")


def test_restart_accelerates_generated_tensors_with_narrow_window():
    faster, ext_res, plain_res = 0, [], []
    for seed in range(20):
        p = PageRankProblem(random_stochastic_tensor(10, 3, np.random.default_rng(seed)), 0.99)
        tr = restarted_solve(SfpmMap(p, 1.0), p.teleport, RestartConfig(k=4, cycles=3, tol=0.0), p)
        plain = sfpm_solve(p, SolverConfig(gamma=1.0, tol=1e-15, max_evals=tr.map_evals))
        e_ext, e_plain = tr.evals_to_reach(1e-8), plain.evals_to_reach(1e-8)
        faster += e_ext is not None and (e_plain is None or e_ext < e_plain)
        ext_res.append(tr.final_residual)
        plain_res.append(plain.final_residual)
    assert faster >= 18
    assert np.median(plain_res) >= 100 * np.median(ext_res)
