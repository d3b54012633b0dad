"""Thin SVD, polar decomposition and the leading singular pair.

LAPACK (through numpy) is the SVD backend; this module pins the output
conventions the rest of the package relies on.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .exceptions import ConvergenceFailure, ShapeMismatch, ZeroMatrix


class SvdThin(NamedTuple):
    """``C = P @ diag(lam) @ Q.T`` with ``P`` m x n, ``Q`` n x n."""

    P: np.ndarray
    lam: np.ndarray
    Q: np.ndarray


class PolarFactors(NamedTuple):
    """``C = U @ H`` with ``U.T @ U = I`` and ``H`` symmetric PSD."""

    U: np.ndarray
    H: np.ndarray


def _first_nonzero_sign(cols):
    """Sign making the first clearly nonzero entry of each column positive."""
    cols = np.atleast_2d(cols)
    scale = np.max(np.abs(cols), axis=0, keepdims=True)
    mask = np.abs(cols) > 1e-12 * np.where(scale > 0, scale, 1.0)
    idx = np.argmax(mask, axis=0)
    lead = cols[idx, np.arange(cols.shape[1])]
    return np.where(lead < 0, -1.0, 1.0)


def thin_svd(C) -> SvdThin:
    """Thin SVD of a tall matrix (``m >= n``).

    Singular values come out nonincreasing.  Columns of ``P`` are signed so
    that their first nonzero entry is positive (``Q`` follows).
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ShapeMismatch("thin_svd expects a matrix")
    m, n = C.shape
    if m < n:
        raise ShapeMismatch(f"thin_svd needs rows >= cols, got {C.shape}; transpose first")
    try:
        P, lam, Qt = np.linalg.svd(C, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    s = _first_nonzero_sign(P)
    return SvdThin(P * s, lam, Qt.T * s)


def polar_decompose(C) -> PolarFactors:
    """Polar decomposition through the thin SVD: ``U = P Q^T``, ``H = Q diag(lam) Q^T``.

    When ``C`` is rank deficient ``U`` is not unique; the representative
    returned is the one built from the sign-normalized SVD.
    """
    P, lam, Q = thin_svd(C)
    U = P @ Q.T
    H = (Q * lam) @ Q.T
    H = 0.5 * (H + H.T)
    return PolarFactors(U, H)


def leading_singular_pair(C):
    """Return ``(u, s, v)`` with ``C v = s u`` and ``s`` the largest singular value.

    The first nonzero entry of ``u`` is positive.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if not np.any(C):
        raise ZeroMatrix("leading singular pair of a zero matrix is undefined")
    if C.shape[0] >= C.shape[1]:
        P, lam, Q = thin_svd(C)
        u, v = P[:, 0], Q[:, 0]
    else:
        P, lam, Q = thin_svd(C.T)
        v, u = P[:, 0], Q[:, 0]
        if _first_nonzero_sign(u[:, None])[0] < 0:
            u, v = -u, -v
    return u.copy(), float(lam[0]), v.copy()


def smallest_singular_value(C) -> float:
    C = np.asarray(C, dtype=float)
    if C.shape[0] < C.shape[1]:
        C = C.T
    return float(thin_svd(C).lam[-1])
