"""Dense tensors and the multilinear primitives used throughout the package.

Storage is generalized column-major: the flat value vector of a tensor of
shape ``(n_1, ..., n_d)`` has the first index varying fastest.  The mode-j
unfolding follows the same convention, so that for a CP tensor

    unfold(T, j) == U_j @ diag(sigma) @ khatri_rao(U_d, ..., U_{j+1}, U_{j-1}, ..., U_1).T

Modes are 0-based, as numpy axes are.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .exceptions import (
    ColsMismatch,
    InvalidMode,
    NonFiniteEntry,
    ShapeMismatch,
    SizeMismatch,
    TensorFormatError,
)


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """Immutable order-d real tensor.

    Parameters
    ----------
    data : numpy.ndarray
        Array of the tensor entries. It is copied, made read-only and
        checked for finiteness.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=float, copy=True)
        if arr.ndim < 1:
            raise ShapeMismatch("tensor order must be at least 1")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteEntry("tensor contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def order(self) -> int:
        return self.data.ndim

    @property
    def values(self) -> np.ndarray:
        """Flat entries, first index fastest."""
        return self.data.ravel(order="F")

    def __repr__(self):
        return f"DenseTensor(shape={self.shape})"


def as_array(T) -> np.ndarray:
    if isinstance(T, DenseTensor):
        return T.data
    return np.asarray(T, dtype=float)


def from_data(shape: Sequence[int], values) -> DenseTensor:
    """Build a tensor from its extents and mode-1-fastest flat values."""
    shape = tuple(int(n) for n in shape)
    if len(shape) < 1 or any(n < 1 for n in shape):
        raise ShapeMismatch(f"invalid shape {shape}")
    values = np.asarray(values, dtype=float).ravel()
    if values.size != int(np.prod(shape)):
        raise ShapeMismatch(
            f"{values.size} values given for shape {shape} ({int(np.prod(shape))} expected)"
        )
    if not np.all(np.isfinite(values)):
        raise NonFiniteEntry("values contain NaN or Inf")
    return DenseTensor(values.reshape(shape, order="F"))


def frobenius_norm(T) -> float:
    return float(np.sqrt(np.sum(as_array(T) ** 2)))


def inner(T, S) -> float:
    a, b = as_array(T), as_array(S)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def _check_mode(ndim, mode):
    if not 0 <= mode < ndim:
        raise InvalidMode(f"mode {mode} out of range for order-{ndim} tensor")


def unfold(T, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding, shape ``n_mode x prod(other extents)``."""
    a = as_array(T)
    _check_mode(a.ndim, mode)
    return np.reshape(np.moveaxis(a, mode, 0), (a.shape[mode], -1), order="F")


def fold(M, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    shape = tuple(shape)
    _check_mode(len(shape), mode)
    rest = shape[:mode] + shape[mode + 1:]
    M = np.asarray(M)
    if M.shape != (shape[mode], int(np.prod(rest))):
        raise ShapeMismatch(f"matrix of shape {M.shape} cannot fold into {shape}")
    return np.moveaxis(np.reshape(M, (shape[mode],) + rest, order="F"), 0, mode)


def _check_vectors(shape, vectors, skip=None):
    modes = [m for m in range(len(shape)) if m != skip]
    if len(vectors) != len(modes):
        raise ShapeMismatch(f"expected {len(modes)} vectors, got {len(vectors)}")
    out = []
    for m, v in zip(modes, vectors):
        v = np.asarray(v, dtype=float).ravel()
        if v.size != shape[m]:
            raise ShapeMismatch(f"vector for mode {m} has length {v.size}, expected {shape[m]}")
        out.append(v)
    return out


def rank1_contract(T, vectors, skip: int) -> np.ndarray:
    """Contract ``T`` with one vector on every mode except ``skip``.

    ``vectors`` lists the vectors of the remaining modes in increasing mode
    order.  The result is the gradient of ``<T, x_1 o ... o x_d>`` with
    respect to the vector of mode ``skip``.
    """
    a = as_array(T)
    _check_mode(a.ndim, skip)
    vecs = _check_vectors(a.shape, vectors, skip)
    if not vecs:
        return a.copy()
    # column index of the unfolding has the lowest remaining mode fastest
    kr = reduce(np.kron, vecs[::-1])
    return unfold(a, skip) @ kr


def full_contract(T, vectors) -> float:
    """``<T, x_1 o ... o x_d>``."""
    a = as_array(T)
    vecs = _check_vectors(a.shape, vectors)
    out = a
    for v in reversed(vecs):
        out = out @ v
    return float(out)


def khatri_rao(*matrices) -> np.ndarray:
    """Columnwise Kronecker product ``M_1 (.) M_2 (.) ... (.) M_k``.

    Column ``c`` of the result is ``kron(M_1[:, c], ..., M_k[:, c])``.
    """
    if len(matrices) == 1 and isinstance(matrices[0], (list, tuple)):
        matrices = tuple(matrices[0])
    mats = [np.atleast_2d(np.asarray(M, dtype=float)) for M in matrices]
    if not mats:
        raise ValueError("khatri_rao needs at least one matrix")
    ncols = mats[0].shape[1]
    if any(M.shape[1] != ncols for M in mats):
        raise ColsMismatch("all matrices must have the same number of columns")
    out = mats[0]
    for M in mats[1:]:
        out = np.einsum("ir,jr->ijr", out, M).reshape(-1, ncols)
    return out


def cp_reconstruct(sigma, factors) -> DenseTensor:
    """Full tensor of ``sum_i sigma_i u_{1,i} o ... o u_{d,i}``."""
    sigma = np.asarray(sigma, dtype=float).ravel()
    factors = [np.atleast_2d(np.asarray(U, dtype=float)) for U in factors]
    R = sigma.size
    if any(U.shape[1] != R for U in factors):
        raise ShapeMismatch("every factor must have len(sigma) columns")
    shape = tuple(U.shape[0] for U in factors)
    if len(factors) == 1:
        return DenseTensor(factors[0] @ sigma)
    kr = khatri_rao(factors[:0:-1])
    return DenseTensor(fold(factors[0] @ (sigma[:, None] * kr.T), 0, shape))


def reshape(T, new_shape: Sequence[int]) -> DenseTensor:
    """Column-major reshape (flat value order preserved)."""
    a = as_array(T)
    new_shape = tuple(int(n) for n in new_shape)
    if int(np.prod(new_shape)) != a.size:
        raise SizeMismatch(f"cannot reshape {a.shape} into {new_shape}")
    return DenseTensor(np.reshape(a, new_shape, order="F"))


def ttv(T, vectors, modes: Sequence[int]) -> np.ndarray:
    """Contract ``T`` with ``vectors[k]`` along ``modes[k]``; remaining modes keep their order."""
    a = as_array(T)
    order = sorted(range(len(modes)), key=lambda k: modes[k], reverse=True)
    for k in order:
        m = modes[k]
        _check_mode(a.ndim, m)
        a = np.tensordot(a, np.asarray(vectors[k], dtype=float), axes=([m], [0]))
    return a


# -- text format --------------------------------------------------------------

def _parse_int(tok, line, col):
    try:
        val = int(tok)
    except ValueError:
        raise TensorFormatError(f"expected an integer, got {tok!r}", line, col) from None
    return val


def _tokens(text):
    """Yield (token, line, column) with 1-based positions."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        col = 0
        for tok in line.split():
            col = line.index(tok, col)
            yield tok, lineno, col + 1
            col += len(tok)


def loads_tensor(text: str) -> DenseTensor:
    lines = text.splitlines()
    if len(lines) < 2:
        raise TensorFormatError("file must start with an 'order' line and a 'dims' line", len(lines) + 1)
    head = lines[0].split()
    if len(head) != 2 or head[0] != "order":
        raise TensorFormatError("first line must read 'order d'", 1, 1)
    d = _parse_int(head[1], 1, lines[0].index(head[1]) + 1)
    if d < 1:
        raise TensorFormatError("order must be positive", 1, lines[0].index(head[1]) + 1)
    dims_line = lines[1].split()
    if not dims_line or dims_line[0] != "dims":
        raise TensorFormatError("second line must start with 'dims'", 2, 1)
    if len(dims_line) - 1 != d:
        raise TensorFormatError(f"'dims' lists {len(dims_line) - 1} extents but order is {d}", 2, 1)
    dims = []
    for tok, _, col in _tokens(lines[1]):
        if tok == "dims":
            continue
        n = _parse_int(tok, 2, col)
        if n < 1:
            raise TensorFormatError(f"extent must be positive, got {n}", 2, col)
        dims.append(n)
    vals = []
    for tok, line, col in _tokens("\n".join(lines[2:])):
        try:
            x = float(tok)
        except ValueError:
            raise TensorFormatError(f"not a number: {tok!r}", line + 2, col) from None
        if not np.isfinite(x):
            raise TensorFormatError(f"non-finite value {tok!r}", line + 2, col)
        vals.append(x)
    expected = int(np.prod(dims))
    if len(vals) != expected:
        raise TensorFormatError(f"found {len(vals)} values, expected {expected}", len(lines))
    return from_data(dims, vals)


def dumps_tensor(T) -> str:
    a = as_array(T)
    flat = a.ravel(order="F")
    body = "\n".join(format(x, ".17g") for x in flat)
    return f"order {a.ndim}\ndims {' '.join(str(n) for n in a.shape)}\n{body}\n"


def read_tensor(path) -> DenseTensor:
    with open(path) as fh:
        return loads_tensor(fh.read())


def write_tensor(path, T) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_tensor(T))
