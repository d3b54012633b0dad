"""The epsilon-ALS iteration.

One outer iteration updates, in Gauss-Seidel order,

* every unit-norm mode ``j``:  ``u_{j,i} <- normalize(v_{j,i} omega_i + eps1 u_{j,i})``;
* every orthonormal mode ``j``: ``U_j <- polar(V_j diag(omega) + eps2 U_j)``;
* the weights: ``sigma_i = <A, o_j u_{j,i}>``, ``omega = sigma / ||sigma||``.

``v_{j,i}`` is the gradient of ``<A, o_l u_{l,i}>`` with respect to
``u_{j,i}``, evaluated with the modes before ``j`` already updated.  With
``eps1, eps2 >= 0`` the cost ``H = sum_i sigma_i omega_i`` never decreases.
"""
from __future__ import annotations

import csv
import io
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from . import tensor as tc
from .exceptions import DegenerateSigma, InfeasibleInit, RankTooLarge, ShapeMismatch
from .linalg import polar_decompose, thin_svd
from .model import FactorSet, compute_sigma, feasibility_check, kkt_residual, mode_gradients

logger = logging.getLogger(__name__)

CONVERGED = "Converged"
MAX_ITER = "MaxIter"
DEGENERATE = "Degenerate"

TRACE_HEADER = ["iter", "H", "G", "sigma_norm", "step_norm", "omega_step", "kkt_total"]


class DegeneracyWarning(UserWarning):
    """A weight collapsed to (numerically) zero; the rank is likely too large."""


@dataclass
class SolverConfig:
    eps1: float = 1e-8
    eps2: float = 1e-8
    tol: float = 1e-4
    max_iter: int = 2000
    sigma_floor: float = 1e-12
    batched: bool = True
    trace_stride: int = 10
    auto_reduce_rank: bool = False

    def __post_init__(self):
        if self.eps1 < 0 or self.eps2 < 0:
            raise ValueError("eps1 and eps2 must be nonnegative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.sigma_floor < 0:
            raise ValueError("sigma_floor must be nonnegative")
        if self.trace_stride < 1:
            raise ValueError("trace_stride must be positive")


class SweepStats(NamedTuple):
    mode: int
    shifted_norms: Optional[np.ndarray]  # ||v~_{j,i}||, unit-norm modes
    lambda_min: Optional[float]  # R-th singular value of V~_j, orthonormal modes
    step: float  # ||U_j^{new} - U_j^{old}||_F


class IterationRecord(NamedTuple):
    iter: int
    H: float
    G: float
    sigma_norm: float
    step_norm: float
    omega_step: float
    kkt_total: float
    rel_step: float
    lambda_min: tuple


@dataclass
class IterationTrace:
    """History of a run.  Record 0 describes the initial point."""

    records: List[IterationRecord] = field(default_factory=list)
    status: str = MAX_ITER
    degenerate_columns: List[int] = field(default_factory=list)
    rank_reductions: List[int] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def n_iter(self) -> int:
        return max(len(self.records) - 1, 0)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def H(self) -> np.ndarray:
        return self.column("H")

    def to_csv(self, fh=None) -> Optional[str]:
        """Write ``iter,H,G,sigma_norm,step_norm,omega_step,kkt_total``; returns text if ``fh`` is None."""
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([r.iter] + [repr(float(getattr(r, k))) for k in TRACE_HEADER[1:]])
        if fh is None:
            return buf.getvalue()
        return None


def _replace_factor(state: FactorSet, j: int, U: np.ndarray) -> FactorSet:
    factors = list(state.factors)
    factors[j] = U
    return FactorSet(factors, state.t, state.sigma, state.omega)


def sweep_nonorthogonal(A, state: FactorSet, j: int, eps1: float, batched: bool = True):
    """Update the unit-norm mode ``j``; returns ``(new_state, SweepStats)``.

    A column whose shifted gradient vanishes (possible only for ``eps1 = 0``)
    keeps its previous value.
    """
    if not 0 <= j < state.n_free:
        raise ValueError(f"mode {j} is not a unit-norm mode")
    U = state.factors[j]
    V = mode_gradients(A, state.factors, j, batched=batched)
    Vt = V * state.omega + eps1 * U
    norms = np.linalg.norm(Vt, axis=0)
    U_new = U.copy()
    ok = norms > 0
    U_new[:, ok] = Vt[:, ok] / norms[ok]
    stats = SweepStats(j, norms, None, float(np.linalg.norm(U_new - U)))
    return _replace_factor(state, j, U_new), stats


def sweep_orthonormal(A, state: FactorSet, j: int, eps2: float, batched: bool = True):
    """Update the orthonormal mode ``j`` through a polar decomposition; returns ``(new_state, SweepStats)``."""
    if not state.n_free <= j < state.order:
        raise ValueError(f"mode {j} is not an orthonormal mode")
    U = state.factors[j]
    V = mode_gradients(A, state.factors, j, batched=batched)
    Vt = V * state.omega + eps2 * U
    U_new = polar_decompose(Vt).U
    lam_min = float(thin_svd(Vt).lam[-1])
    stats = SweepStats(j, None, lam_min, float(np.linalg.norm(U_new - U)))
    return _replace_factor(state, j, U_new), stats


def update_weights(A, state: FactorSet) -> FactorSet:
    """Recompute ``sigma`` at the current factors and set ``omega = sigma/||sigma||``."""
    sigma = compute_sigma(A, state.factors)
    nrm = np.linalg.norm(sigma)
    if not nrm > 0:
        raise DegenerateSigma("all weights vanish; the factors are orthogonal to the data")
    return FactorSet(state.factors, state.t, sigma, sigma / nrm)


def step(A, state: FactorSet, config: SolverConfig):
    """One outer iteration; returns ``(new_state, [SweepStats per mode])``."""
    stats = []
    for j in range(state.n_free):
        state, s = sweep_nonorthogonal(A, state, j, config.eps1, config.batched)
        stats.append(s)
    for j in range(state.n_free, state.order):
        state, s = sweep_orthonormal(A, state, j, config.eps2, config.batched)
        stats.append(s)
    return update_weights(A, state), stats


def _flat(state):
    return np.concatenate([U.ravel() for U in state.factors])


def _record(k, A, state, prev, stats, kkt):
    sn = float(np.linalg.norm(state.sigma))
    if prev is None:
        step_norm = omega_step = rel = 0.0
    else:
        diff = _flat(state) - _flat(prev)
        step_norm = float(np.linalg.norm(diff))
        rel = step_norm / float(np.linalg.norm(_flat(prev)))
        omega_step = float(np.linalg.norm(state.omega - prev.omega))
    lam = tuple(s.lambda_min for s in stats if s.lambda_min is not None)
    return IterationRecord(k, sn, sn * sn, sn, step_norm, omega_step, kkt, rel, lam)


def _validate(A, R, t, init):
    a = tc.as_array(A)
    if init.shape != a.shape:
        raise ShapeMismatch(f"initializer shape {init.shape} does not match tensor {a.shape}")
    if init.R != R or init.t != t:
        raise ValueError(f"initializer has R={init.R}, t={init.t}; expected R={R}, t={t}")
    for j in range(a.ndim - t, a.ndim):
        if a.shape[j] < R:
            raise RankTooLarge(f"rank exceeds mode extent: R={R} > n_{j}={a.shape[j]}")
    bad = [v for v in feasibility_check(init) if v.kind != "omega_alignment"]
    if bad:
        raise InfeasibleInit("; ".join(str(v) for v in bad))
    return a


def run(A, R: int, t: int, config: SolverConfig = None, init: FactorSet = None):
    """Run epsilon-ALS from ``init``; returns ``(FactorSet, IterationTrace)``.

    Stops when ``||u^{k+1} - u^k|| / ||u^k|| <= config.tol`` (all factor
    entries stacked, ``omega`` excluded) or after ``config.max_iter``
    iterations.
    """
    config = config or SolverConfig()
    if init is None:
        raise ValueError("an initial FactorSet is required")
    a = _validate(A, R, t, init)
    t0 = time.perf_counter()
    norm_a = tc.frobenius_norm(a)
    state = update_weights(a, init)
    trace = IterationTrace()
    trace.records.append(_record(0, a, state, None, [], kkt_residual(a, state).total))
    warned = set()
    status = MAX_ITER
    for k in range(1, config.max_iter + 1):
        prev = state
        state, stats = step(a, state, config)
        rel = float(np.linalg.norm(_flat(state) - _flat(prev)) / np.linalg.norm(_flat(prev)))
        done = rel <= config.tol or k == config.max_iter
        kkt = kkt_residual(a, state, config.batched).total if (done or k % config.trace_stride == 0) else np.nan
        trace.records.append(_record(k, a, state, prev, stats, kkt))

        degenerate = np.flatnonzero(np.abs(state.sigma) < config.sigma_floor * norm_a)
        if degenerate.size:
            if config.auto_reduce_rank and state.R > degenerate.size:
                logger.info("dropping degenerate columns %s", degenerate.tolist())
                trace.rank_reductions.append(int(state.R - degenerate.size))
                state = update_weights(a, state.drop_columns(degenerate))
                continue
            for i in degenerate.tolist():
                if i not in warned:
                    warned.add(i)
                    warnings.warn(
                        f"weight of column {i} is below sigma_floor; consider reducing R to {state.R - 1}",
                        DegeneracyWarning,
                        stacklevel=2,
                    )
        if rel <= config.tol:
            status = CONVERGED
            break
    final_deg = np.flatnonzero(np.abs(state.sigma) < config.sigma_floor * norm_a)
    if final_deg.size:
        status = DEGENERATE
        trace.degenerate_columns = final_deg.tolist()
    trace.status = status
    trace.wall_time = time.perf_counter() - t0
    return state, trace
