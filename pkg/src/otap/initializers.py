"""Initial points for the solver.

``get_initializer`` takes the leading left singular vectors of the unfoldings
for the orthonormal modes (a partial truncated HOSVD) and fills the remaining
modes column by column with a recursive SVD-based rank-1 approximation of
the correspondingly contracted tensor.  ``random_init`` is the baseline.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from . import tensor as tc
from .exceptions import DegenerateInitializer, InvalidOrder, RankTooLarge, ZeroTensor
from .linalg import leading_singular_pair, polar_decompose, thin_svd
from .model import FactorSet, compute_sigma


class Rank1Result(NamedTuple):
    vectors: list
    value: float


def xi(shape: Sequence[int]) -> float:
    """Loss factor of :func:`rank1_approx` for a tensor with ascending extents ``shape``.

    For even order ``m``: ``sqrt(prod(n_1..n_{m-1}) * prod_{j=1}^{m/2-2} n_{2j+1} / n_2)``;
    for odd ``m``: ``sqrt(prod(n_2..n_{m-1}) * prod_{j=1}^{(m+1)/2-2} n_{2j})``.
    Indices are 1-based as in the formula; empty products are 1.
    """
    n = [None] + [int(x) for x in shape]  # 1-based
    m = len(shape)
    if m < 1:
        raise InvalidOrder("order must be at least 1")
    if m <= 2:
        return 1.0
    if m % 2 == 0:
        val = np.prod([n[j] for j in range(1, m)], dtype=float)
        val *= np.prod([n[2 * j + 1] for j in range(1, m // 2 - 1)], dtype=float)
        val /= n[2]
    else:
        val = np.prod([n[j] for j in range(2, m)], dtype=float)
        val *= np.prod([n[2 * j] for j in range(1, (m + 1) // 2 - 1)], dtype=float)
    return float(np.sqrt(val))


def _rank1_recursive(B: np.ndarray) -> list:
    m = B.ndim
    if m == 1:
        return [B / np.linalg.norm(B)]
    if m == 2:
        u, _, v = leading_singular_pair(B)
        return [u, v]
    shape = B.shape
    rows = int(np.prod(shape[:-2]))
    Bmat = np.reshape(B, (rows, shape[-2] * shape[-1]), order="F")
    _, _, y = leading_singular_pair(Bmat)
    x_tail = _rank1_recursive(np.reshape(y, shape[-2:], order="F"))
    X = tc.ttv(B, x_tail, [m - 2, m - 1])
    if not np.any(X):
        # the contraction killed every entry; any unit vectors are optimal
        head = [np.eye(n)[:, 0] for n in shape[:-2]]
    else:
        head = _rank1_recursive(X)
    return head + x_tail


def rank1_approx(B) -> Rank1Result:
    """Approximate best rank-1 fit of ``B`` by recursive reshaping and SVD.

    Modes are processed in ascending order of extent and the vectors are
    returned in the original mode order.
    """
    b = tc.as_array(B)
    if not np.any(b):
        raise ZeroTensor("rank-1 approximation of a zero tensor is undefined")
    perm = np.argsort(b.shape, kind="stable")
    vecs_sorted = _rank1_recursive(np.transpose(b, perm))
    vectors = [None] * b.ndim
    for k, mode in enumerate(perm):
        vectors[mode] = vecs_sorted[k]
    return Rank1Result(vectors, tc.full_contract(b, vectors))


def _check_rank(shape, R, t):
    d = len(shape)
    if not 0 <= t <= d:
        raise ValueError(f"t must lie in [0, {d}], got {t}")
    for j in range(d - t, d):
        if shape[j] < R:
            raise RankTooLarge(f"rank exceeds mode extent: R={R} > n_{j}={shape[j]}")


def leading_left_singular_vectors(M: np.ndarray, R: int) -> np.ndarray:
    if M.shape[0] <= M.shape[1]:
        return thin_svd(M.T).Q[:, :R]
    return thin_svd(M).P[:, :R]


def get_initializer(A, R: int, t: int) -> FactorSet:
    """HOSVD-plus-rank-1 initial point."""
    a = tc.as_array(A)
    d = a.ndim
    _check_rank(a.shape, R, t)
    if not np.any(a):
        raise DegenerateInitializer("cannot initialize from a zero tensor")
    n_free = d - t
    factors = [np.zeros((a.shape[j], R)) for j in range(d)]
    for j in range(n_free, d):
        factors[j] = leading_left_singular_vectors(tc.unfold(a, j), R)
    if n_free > 0:
        orth_modes = list(range(n_free, d))
        for i in range(R):
            sub = tc.ttv(a, [factors[j][:, i] for j in orth_modes], orth_modes)
            try:
                vecs = rank1_approx(sub).vectors
            except ZeroTensor:
                vecs = [np.eye(n)[:, 0] for n in a.shape[:n_free]]
            for j in range(n_free):
                factors[j][:, i] = vecs[j]
    sigma = compute_sigma(a, factors)
    if not np.linalg.norm(sigma) > 0:
        raise DegenerateInitializer("initial weights are all zero")
    return FactorSet(factors, t, sigma)


def random_init(A, R: int, t: int, seed=None) -> FactorSet:
    """Uniform[-1, 1] factors; free modes column-normalized, orthonormal modes polar-projected."""
    a = tc.as_array(A)
    d = a.ndim
    _check_rank(a.shape, R, t)
    rng = np.random.default_rng(seed)
    factors = []
    for j in range(d):
        U = rng.uniform(-1.0, 1.0, size=(a.shape[j], R))
        if j < d - t:
            U = U / np.linalg.norm(U, axis=0)
        else:
            U = polar_decompose(U).U
        factors.append(U)
    return FactorSet(factors, t, compute_sigma(a, factors))
