import itertools

import numpy as np
import pytest

from mlpagerank.tensor import SparseTensor

ACCEPTANCE_RESULTS: dict = {}


def dense_apply(array, s):
    """Exhaustive sum over every index tuple; independent of the sparse kernel."""
    n, m = array.shape[0], array.ndim
    out = np.zeros(n)
    for idx in itertools.product(range(n), repeat=m):
        term = array[idx]
        for j in idx[1:]:
            term *= s[j]
        out[idx[0]] += term
    return out


def random_dense_stochastic(rng, n, m, density=0.6):
    a = rng.random((n,) * m) * (rng.random((n,) * m) < density)
    a[0][a.sum(axis=0) == 0] = 1.0
    return a / a.sum(axis=0, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_tensor(rng, n, m):
    return SparseTensor.from_dense(random_dense_stochastic(rng, n, m))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
