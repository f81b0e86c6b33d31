"""Readers and writers for the ``mlpr-tensor v1`` text format and for
MatrixMarket graph files.

``mlpr-tensor v1``::

    m n nnz
    i1 i2 ... im value        (nnz lines, 1-based indices)

Values are decimals or exact rationals ``p/q``.  Rationals are summed exactly
(duplicates included) before conversion to float.  Blank lines and lines
starting with ``#`` or ``%`` are ignored.
"""
from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .tensor import SparseTensor


class TensorFormatError(ValueError):
    """Malformed tensor file; the message names the offending line."""

    def __init__(self, lineno, msg, source="<string>"):
        super().__init__(f"{source}:{lineno}: {msg}")
        self.lineno = lineno


def _parse_value(tok: str) -> Fraction:
    # Fraction accepts "p/q", integers and decimal/scientific notation exactly
    return Fraction(tok)


def parse_tensor(text: str, source: str = "<string>") -> SparseTensor:
    lines = [
        (i, ln.strip()) for i, ln in enumerate(text.splitlines(), start=1)
        if ln.strip() and not ln.lstrip().startswith(("#", "%"))
    ]
    if not lines:
        raise TensorFormatError(1, "missing header 'm n nnz'", source)
    hdr_no, hdr = lines[0]
    try:
        m, n, nnz = (int(t) for t in hdr.split())
    except ValueError:
        raise TensorFormatError(hdr_no, f"bad header {hdr!r}, expected 'm n nnz'", source) from None
    if m < 2 or n < 1 or nnz < 0:
        raise TensorFormatError(hdr_no, f"invalid header values m={m} n={n} nnz={nnz}", source)
    body = lines[1:]
    if len(body) != nnz:
        lineno = body[-1][0] if len(body) > nnz else (body[-1][0] + 1 if body else hdr_no + 1)
        raise TensorFormatError(lineno, f"expected {nnz} entries, found {len(body)}", source)

    acc: dict[tuple, Fraction] = {}
    for lineno, ln in body:
        toks = ln.split()
        if len(toks) != m + 1:
            raise TensorFormatError(lineno, f"expected {m} indices and a value, got {len(toks)} fields", source)
        try:
            idx = tuple(int(t) for t in toks[:m])
        except ValueError:
            raise TensorFormatError(lineno, "indices must be integers", source) from None
        if any(i < 1 or i > n for i in idx):
            raise TensorFormatError(lineno, f"index out of range 1..{n}: {idx}", source)
        try:
            val = _parse_value(toks[m])
        except (ValueError, ZeroDivisionError):
            raise TensorFormatError(lineno, f"bad value {toks[m]!r}", source) from None
        acc[idx] = acc.get(idx, Fraction(0)) + val

    if not acc:
        return SparseTensor(m, n, [], [], [])
    indices = np.array(list(acc.keys()), dtype=np.int64) - 1
    values = np.array([float(v) for v in acc.values()])
    return SparseTensor.from_entries(m, n, indices, values)


def read_tensor(path) -> SparseTensor:
    path = Path(path)
    return parse_tensor(path.read_text(), source=str(path))


def format_tensor(tensor: SparseTensor) -> str:
    """Serialize stored entries; structured parts are materialized first."""
    tensor = materialize(tensor)
    idx = tensor.indices() + 1
    out = [f"{tensor.m} {tensor.n} {tensor.nnz}"]
    for row, val in zip(idx, tensor.values):
        out.append(" ".join(str(int(i)) for i in row) + " " + repr(float(val)))
    return "\n".join(out) + "\n"


def write_tensor(tensor: SparseTensor, path) -> None:
    Path(path).write_text(format_tensor(tensor))


def materialize(tensor: SparseTensor) -> SparseTensor:
    """Equivalent tensor with ``kron`` and ``fill`` stored as plain entries.

    Touches every fiber, so only use it for small ``n ** (m - 1)``.
    """
    if tensor.fill is None and tensor.kron is None:
        return tensor
    n, m = tensor.n, tensor.m
    ncols = n ** (m - 1)
    rows, cols, vals = [tensor.rows], [tensor.cols], [tensor.values]
    if tensor.kron is not None:
        kc = tensor.kron.tocoo()
        block = n ** (m - 2)
        offs = np.arange(block)
        rows.append(np.repeat(kc.row, block))
        cols.append((kc.col[:, None] * block + offs[None, :]).ravel())
        vals.append(np.repeat(kc.data, block))
    rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
    if tensor.fill is not None:
        deficit = 1.0 - np.bincount(cols, weights=vals, minlength=ncols)
        short = np.flatnonzero(deficit > 0)
        rows = np.concatenate([rows, np.tile(np.arange(n), short.size)])
        cols = np.concatenate([cols, np.repeat(short, n)])
        vals = np.concatenate([vals, (deficit[short][:, None] * tensor.fill[None, :]).ravel()])
    return SparseTensor(m, n, rows, cols, vals)


def read_matrix_market(path):
    """Pattern of a MatrixMarket coordinate file as a 0/1 CSR matrix."""
    mat = scipy.io.mmread(str(path))
    mat = sp.csr_matrix(mat)
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(f"adjacency matrix must be square, got {mat.shape}")
    mat.data = np.ones_like(mat.data, dtype=float)
    mat.eliminate_zeros()
    return mat


# Example tensor with three distinct positive fixed points of s -> P s^2.
# Entries (i1, i2, i3) -> exact rational, slices P[:, :, i3].
_SABUROV_SLICES = (
    (("232873/319300", "7/10", "3/10"),
     ("27/100", "470171/1628600", "378421/814300"),
     ("54/79825", "18409/1628600", "191589/814300")),
    (("7/10", "4717/10300", "1/100"),
     ("470171/1628600", "1/2", "158157/1628600"),
     ("18409/1628600", "433/10300", "1454157/1628600")),
    (("3/10", "1/100", "207/63860"),
     ("378421/814300", "158157/1628600", "3/20"),
     ("191589/814300", "1454157/1628600", "27037/31930")),
)

SABUROV_FIXED_POINTS = (
    (0.1, 0.2, 0.7),
    (0.4, 0.3, 0.3),
    (0.59, 0.31, 0.1),
)


def saburov_text() -> str:
    lines = ["3 3 27"]
    for k, sl in enumerate(_SABUROV_SLICES, start=1):
        for i, row in enumerate(sl, start=1):
            for j, val in enumerate(row, start=1):
                lines.append(f"{i} {j} {k} {val}")
    return "\n".join(lines) + "\n"


def saburov_tensor() -> SparseTensor:
    return parse_tensor(saburov_text(), source="saburov")


EMBEDDED = {"saburov": saburov_tensor}


__all__ = [
    "TensorFormatError", "parse_tensor", "read_tensor", "format_tensor", "write_tensor",
    "materialize", "read_matrix_market", "saburov_tensor", "saburov_text",
    "SABUROV_FIXED_POINTS", "EMBEDDED",
]
