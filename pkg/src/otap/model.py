"""State of the constrained CP problem: factor sets, objectives and KKT residuals.

A factor set holds ``d`` matrices ``U_j`` of shape ``n_j x R``.  The first
``d - t`` have unit-norm columns, the last ``t`` have orthonormal columns.
For such a set the rank-1 terms are orthonormal, so fitting ``A`` in the
least-squares sense is the same as maximizing ``G = sum_i sigma_i**2`` with
``sigma_i = <A, u_{1,i} o ... o u_{d,i}>``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, NamedTuple

import numpy as np

from . import tensor as tc
from .exceptions import ShapeMismatch

UNIT_TOL = 1e-10
ORTH_TOL = 1e-8
OMEGA_TOL = 1e-10


@dataclass
class FactorSet:
    """Factor matrices plus weights ``sigma`` and unit auxiliary weights ``omega``.

    ``t`` counts the trailing modes whose factor has orthonormal columns.
    """

    factors: List[np.ndarray]
    t: int
    sigma: np.ndarray = None
    omega: np.ndarray = None

    def __post_init__(self):
        self.factors = [np.array(U, dtype=float, ndmin=2) for U in self.factors]
        R = self.factors[0].shape[1]
        if any(U.shape[1] != R for U in self.factors):
            raise ShapeMismatch("all factors must have the same number of columns")
        if not 0 <= self.t <= len(self.factors):
            raise ValueError(f"t={self.t} out of range for {len(self.factors)} modes")
        self.sigma = np.zeros(R) if self.sigma is None else np.array(self.sigma, dtype=float).ravel()
        if self.omega is None:
            nrm = np.linalg.norm(self.sigma)
            self.omega = self.sigma / nrm if nrm > 0 else np.zeros(R)
        else:
            self.omega = np.array(self.omega, dtype=float).ravel()
        if self.sigma.size != R or self.omega.size != R:
            raise ShapeMismatch("sigma and omega must have one entry per column")

    @property
    def R(self) -> int:
        return self.factors[0].shape[1]

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple:
        return tuple(U.shape[0] for U in self.factors)

    @property
    def n_free(self) -> int:
        """Number of leading modes with unit-norm (not orthonormal) columns."""
        return self.order - self.t

    def copy(self) -> "FactorSet":
        return FactorSet([U.copy() for U in self.factors], self.t, self.sigma.copy(), self.omega.copy())

    def with_weights(self, A) -> "FactorSet":
        """Copy with ``sigma`` recomputed from ``A`` and ``omega = sigma/||sigma||``."""
        return FactorSet([U.copy() for U in self.factors], self.t, compute_sigma(A, self.factors))

    def drop_columns(self, cols) -> "FactorSet":
        keep = np.setdiff1d(np.arange(self.R), np.atleast_1d(cols))
        return FactorSet([U[:, keep] for U in self.factors], self.t, self.sigma[keep])

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "t": self.t,
            "sigma": self.sigma.tolist(),
            "omega": self.omega.tolist(),
            "U": [
                {"rows": U.shape[0], "cols": U.shape[1], "values_col_major": U.ravel(order="F").tolist()}
                for U in self.factors
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FactorSet":
        factors = []
        for k, m in enumerate(obj["U"]):
            vals = np.asarray(m["values_col_major"], dtype=float)
            if vals.size != m["rows"] * m["cols"]:
                raise ShapeMismatch(f"factor {k}: {vals.size} values for {m['rows']}x{m['cols']}")
            factors.append(vals.reshape((m["rows"], m["cols"]), order="F"))
        fs = cls(factors, int(obj["t"]), obj["sigma"], obj["omega"])
        if fs.R != int(obj["R"]):
            raise ShapeMismatch(f"R={obj['R']} disagrees with factor width {fs.R}")
        return fs


def dumps_factors(F: FactorSet) -> str:
    # json writes floats with repr(), which round-trips exactly
    return json.dumps(F.to_dict())


def loads_factors(text: str) -> FactorSet:
    return FactorSet.from_dict(json.loads(text))


def read_factors(path) -> FactorSet:
    with open(path) as fh:
        return loads_factors(fh.read())


def write_factors(path, F: FactorSet) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_factors(F))


# -- evaluation ---------------------------------------------------------------

def _check_shapes(A, factors):
    a = tc.as_array(A)
    if a.shape != tuple(U.shape[0] for U in factors):
        raise ShapeMismatch(
            f"tensor shape {a.shape} does not match factor rows {tuple(U.shape[0] for U in factors)}"
        )
    return a


def compute_sigma(A, factors) -> np.ndarray:
    """``sigma_i = <A, u_{1,i} o ... o u_{d,i}>`` for every column ``i``."""
    a = _check_shapes(A, factors)
    if len(factors) == 1:
        return factors[0].T @ a
    kr = tc.khatri_rao(factors[:0:-1])
    return np.einsum("ir,ir->r", factors[0], tc.unfold(a, 0) @ kr)


def mode_gradients(A, factors, mode: int, batched: bool = True) -> np.ndarray:
    """Matrix whose column ``i`` is ``A`` contracted with column ``i`` of every other factor.

    ``batched`` uses one unfolding times a Khatri-Rao product; otherwise each
    column is contracted separately.
    """
    a = _check_shapes(A, factors)
    others = [factors[m] for m in range(len(factors)) if m != mode]
    if batched:
        if not others:
            return np.repeat(a[:, None], factors[0].shape[1], axis=1)
        return tc.unfold(a, mode) @ tc.khatri_rao(others[::-1])
    R = factors[0].shape[1]
    return np.column_stack([tc.rank1_contract(a, [U[:, i] for U in others], mode) for i in range(R)])


def objective_G(A, F: FactorSet) -> float:
    """``sum_i sigma_i**2`` with ``sigma`` evaluated at the factors of ``F``."""
    sigma = compute_sigma(A, F.factors)
    return float(sigma @ sigma)


def objective_H(A, F: FactorSet) -> float:
    """``sum_i sigma_i * omega_i`` with ``sigma`` evaluated at the factors and ``omega`` from ``F``."""
    return float(compute_sigma(A, F.factors) @ F.omega)


def objective_F(A, F: FactorSet) -> float:
    """Least-squares misfit ``0.5 * ||A - [[sigma; U_1..U_d]]||_F**2`` at the optimal ``sigma``."""
    sigma = compute_sigma(A, F.factors)
    return 0.5 * tc.frobenius_norm(tc.as_array(A) - tc.cp_reconstruct(sigma, F.factors).data) ** 2


class Violation(NamedTuple):
    kind: str
    mode: int
    column: int
    magnitude: float

    def __str__(self):
        where = f"mode {self.mode}" + (f", column {self.column}" if self.column >= 0 else "")
        return f"{self.kind} at {where}: {self.magnitude:.3e}"


def feasibility_check(F: FactorSet) -> List[Violation]:
    """List every violated constraint of ``F``; empty means feasible."""
    out = []
    R = F.R
    for j, U in enumerate(F.factors):
        if j < F.n_free:
            norms = np.linalg.norm(U, axis=0)
            for i in np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL):
                out.append(Violation("unit_norm", j, int(i), float(abs(norms[i] - 1.0))))
        else:
            if U.shape[0] < R:
                out.append(Violation("rank_exceeds_extent", j, -1, float(R - U.shape[0])))
            err = float(np.linalg.norm(U.T @ U - np.eye(R)))
            if err > ORTH_TOL:
                out.append(Violation("orthonormality", j, -1, err))
    nrm = np.linalg.norm(F.sigma)
    if nrm > 0:
        err = float(np.linalg.norm(F.omega - F.sigma / nrm))
        if err > OMEGA_TOL:
            out.append(Violation("omega_alignment", -1, -1, err))
    return out


@dataclass
class KktReport:
    """Stationarity residuals per mode and the multiplier estimates they imply."""

    rho: np.ndarray
    eta: np.ndarray
    lam: List[np.ndarray] = field(default_factory=list)
    sigma: np.ndarray = None
    total: float = 0.0


def kkt_residual(A, F: FactorSet, batched: bool = True) -> KktReport:
    """Residuals of the first-order optimality system at ``F``.

    Unit-norm modes: ``rho_j = max_i ||v_{j,i} - sigma_i u_{j,i}||``.
    Orthonormal modes, with ``W_j = V_j diag(omega)``:
    ``rho_j = ||(I - U_j U_j^T) W_j||_F + ||skew(U_j^T W_j)||_F`` where the
    skew part is ``U^T W - (U^T W)^T``.  ``total = max(rho) / (1 + ||sigma||)``.
    """
    a = _check_shapes(A, F.factors)
    sigma = compute_sigma(a, F.factors)
    nrm = float(np.linalg.norm(sigma))
    omega = sigma / nrm if nrm > 0 else np.zeros_like(sigma)
    rho = np.zeros(F.order)
    lam = []
    for j, U in enumerate(F.factors):
        V = mode_gradients(a, F.factors, j, batched=batched)
        if j < F.n_free:
            rho[j] = float(np.max(np.linalg.norm(V - U * sigma, axis=0)))
        else:
            W = V * omega
            UtW = U.T @ W
            rho[j] = float(np.linalg.norm(W - U @ UtW) + np.linalg.norm(UtW - UtW.T))
            M = U.T @ (V * sigma)
            lam.append(0.5 * (M + M.T))
    eta = np.tile(sigma ** 2, (F.n_free, 1))
    return KktReport(rho=rho, eta=eta, lam=lam, sigma=sigma, total=float(rho.max() / (1.0 + nrm)))
