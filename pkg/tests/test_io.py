from fractions import Fraction

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dense_stochastic
from mlpagerank.io import (
    TensorFormatError,
    format_tensor,
    materialize,
    parse_tensor,
    read_matrix_market,
    read_tensor,
    saburov_tensor,
    saburov_text,
    write_tensor,
)
from mlpagerank.tensor import SparseTensor, validate


def test_saburov_rationals_exact():
    t = saburov_tensor()
    assert t.to_dense()[0, 0, 0] == float(Fraction(232873, 319300))
    assert validate(t).ok
    # every fiber sums to one exactly in rational arithmetic
    lines = saburov_text().splitlines()[1:]
    sums = {}
    for ln in lines:
        i, j, k, v = ln.split()
        sums[(j, k)] = sums.get((j, k), Fraction(0)) + Fraction(v)
    assert set(sums.values()) == {Fraction(1)}


def test_parse_comments_decimals_and_duplicates():
    text = "# header comment\n2 2 4\n1 1 0.25\n\n1 1 1/4\n2 1 1/2\n% another\n2 2 1\n"
    t = parse_tensor(text)
    assert t.nnz == 3
    np.testing.assert_array_equal(t.to_dense(), [[0.5, 0.0], [0.5, 1.0]])


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("3 2\n", 1),
        ("2 2 1\n1 3 0.5\n", 2),
        ("2 2 2\n1 1 0.5\n", 3),
        ("2 2 1\n1 1 1 0.5\n", 2),
        ("2 2 1\n1 1 abc\n", 2),
        ("2 2 1\n1 1 1/0\n", 2),
    ],
)
def test_parse_errors_name_line(text, line):
    with pytest.raises(TensorFormatError) as err:
        parse_tensor(text, source="f.txt")
    assert err.value.lineno == line
    assert f"f.txt:{line}:" in str(err.value)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_format_parse_round_trip(n, m, seed):
    t = SparseTensor.from_dense(random_dense_stochastic(np.random.default_rng(seed), n, m))
    assert parse_tensor(format_tensor(t)) == t


def test_write_read_round_trip(tmp_path):
    t = saburov_tensor()
    write_tensor(t, tmp_path / "s.txt")
    assert read_tensor(tmp_path / "s.txt") == t


def test_materialize_structured_parts():
    kron = sp.csr_matrix(np.array([[0.0, 0.5], [0.25, 0.0]]))
    t = SparseTensor.from_entries(3, 2, [[0, 0, 0]], [0.5], fill=np.array([0.5, 0.5]), kron=kron)
    plain = materialize(t)
    assert plain.fill is None and plain.kron is None
    np.testing.assert_allclose(plain.unfolding_dense(), t.unfolding_dense(), atol=1e-15)
    assert validate(plain).ok


def test_read_matrix_market(tmp_path):
    a = sp.coo_matrix(([2.0, 1.0, 5.0], ([0, 1, 2], [1, 2, 0])), shape=(3, 3))
    scipy.io.mmwrite(str(tmp_path / "g.mtx"), a)
    m = read_matrix_market(tmp_path / "g.mtx")
    np.testing.assert_array_equal(m.toarray(), (a.toarray() != 0).astype(float))


def test_read_matrix_market_rejects_rectangular(tmp_path):
    scipy.io.mmwrite(str(tmp_path / "r.mtx"), sp.coo_matrix(np.ones((2, 3))))
    with pytest.raises(ValueError):
        read_matrix_market(tmp_path / "r.mtx")
