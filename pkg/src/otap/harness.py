"""Synthetic experiments: data generation, scoring and batch runs."""
from __future__ import annotations

import csv
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import tensor as tc
from .exceptions import OtapError, RankTooLarge, ShapeMismatch, TooManyColumns
from .initializers import get_initializer, random_init
from .linalg import polar_decompose
from .model import FactorSet, objective_G
from .solver import CONVERGED, DEGENERATE, MAX_ITER, SolverConfig, run

RESULT_HEADER = [
    "t", "dims", "R", "eps1", "eps2", "init", "instances", "mean_iter", "median_iter",
    "mean_time_s", "mean_rel_err", "n_converged", "n_maxiter", "n_degenerate",
]

MAX_KRUSKAL_COLUMNS = 12


def gen_synthetic(dims: Sequence[int], R: int, t: int, beta: float, seed, noise: str = "uniform"):
    """``A = B/||B|| + beta * N/||N||`` with ``B`` an exact constrained CP tensor.

    Factor entries, weights and (by default) noise entries are uniform on
    [-1, 1].  Returns ``(DenseTensor, truth FactorSet)``; the truth weights
    are scaled so that they reconstruct ``B/||B||``.
    """
    dims = tuple(int(n) for n in dims)
    d = len(dims)
    if not 0 <= t <= d:
        raise ValueError(f"t must lie in [0, {d}]")
    for j in range(d - t, d):
        if dims[j] < R:
            raise RankTooLarge(f"rank exceeds mode extent: R={R} > n_{j}={dims[j]}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    rng = np.random.default_rng(seed)
    factors = []
    for j, n in enumerate(dims):
        U = rng.uniform(-1.0, 1.0, size=(n, R))
        factors.append(U / np.linalg.norm(U, axis=0) if j < d - t else polar_decompose(U).U)
    sigma = rng.uniform(-1.0, 1.0, size=R)
    B = tc.cp_reconstruct(sigma, factors).data
    nb = tc.frobenius_norm(B)
    A = B / nb
    if beta > 0:
        if noise == "uniform":
            N = rng.uniform(-1.0, 1.0, size=dims)
        elif noise == "normal":
            N = rng.standard_normal(size=dims)
        else:
            raise ValueError(f"unknown noise distribution {noise!r}")
        A = A + beta * N / tc.frobenius_norm(N)
    return tc.DenseTensor(A), FactorSet(factors, t, sigma / nb)


def _assignment_cost(truth: FactorSet, rec: FactorSet) -> np.ndarray:
    # C[i, p] = sum_j min(||u - uhat||^2, ||u + uhat||^2), formed from the differences
    # themselves so that an exact match costs exactly zero
    C = np.zeros((truth.R, rec.R))
    for U, W in zip(truth.factors, rec.factors):
        minus = np.sum((U[:, :, None] - W[:, None, :]) ** 2, axis=0)
        plus = np.sum((U[:, :, None] + W[:, None, :]) ** 2, axis=0)
        C += np.minimum(minus, plus)
    return C


def _check_pair(truth, rec):
    if truth.shape != rec.shape or truth.R != rec.R or truth.t != rec.t:
        raise ShapeMismatch(
            f"cannot compare factor sets: shapes {truth.shape}/{rec.shape}, "
            f"R {truth.R}/{rec.R}, t {truth.t}/{rec.t}"
        )


def rel_err(truth: FactorSet, recovered: FactorSet) -> float:
    """Relative factor error, minimized over column permutations and per-column signs.

    The column matching is an exact linear assignment on the cost
    ``sum_j min_s ||u_{j,i} - s * uhat_{j,p}||^2``.
    """
    _check_pair(truth, recovered)
    C = _assignment_cost(truth, recovered)
    rows, cols = linear_sum_assignment(C)
    denom = np.sqrt(sum(np.sum(U ** 2) for U in truth.factors))
    return float(np.sqrt(C[rows, cols].sum()) / denom)


def kruskal_rank(M, rtol: float = 1e-10) -> int:
    """Largest ``k`` such that every ``k`` columns of ``M`` are linearly independent."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    ncols = M.shape[1]
    if ncols > MAX_KRUSKAL_COLUMNS:
        raise TooManyColumns(f"{ncols} columns; Kruskal rank is limited to {MAX_KRUSKAL_COLUMNS}")

    def independent(cols):
        s = np.linalg.svd(M[:, cols], compute_uv=False)
        return s.size == len(cols) and s[0] > 0 and s[-1] > rtol * s[0]

    for k in range(min(ncols, M.shape[0]), 0, -1):
        if all(independent(list(c)) for c in itertools.combinations(range(ncols), k)):
            return k
    return 0


@dataclass
class UniquenessVerdict:
    unique: bool
    reason: str
    kruskal_ranks: List[int] = field(default_factory=list)

    @property
    def label(self) -> str:
        return "Unique" if self.unique else "NotCertified"

    def __str__(self):
        return f"{self.label}: {self.reason}"


def uniqueness_check(F: FactorSet) -> UniquenessVerdict:
    """Sufficient Kruskal-rank condition for essential uniqueness of an exact decomposition.

    ``NotCertified`` only says the sufficient condition fails.
    """
    R, d, t = F.R, F.order, F.t
    if R < 2:
        return UniquenessVerdict(False, "R >= 2 required by the Kruskal uniqueness premise")
    free = F.factors[: d - t]
    ks = [kruskal_rank(U) for U in free] + [kruskal_rank(U) for U in F.factors[d - t:]]
    if any(np.linalg.norm(U, axis=0).min() == 0 for U in F.factors):
        return UniquenessVerdict(False, "a factor has a zero column", ks)
    if t == 0:
        total = sum(ks)
        ok = total >= 2 * R + d - 1
        return UniquenessVerdict(ok, f"sum of Kruskal ranks {total} vs 2R+d-1 = {2 * R + d - 1}", ks)
    if t == 1:
        total = sum(ks[: d - 1])
        ok = total >= R + d - 1
        return UniquenessVerdict(ok, f"t=1: sum of free-mode Kruskal ranks {total} vs R+d-1 = {R + d - 1}", ks)
    if t == 2:
        ok = any(k >= 2 for k in ks[: d - 2])
        return UniquenessVerdict(
            ok, "t=2: " + ("a free mode has Kruskal rank >= 2" if ok else "no free mode has Kruskal rank >= 2"), ks
        )
    return UniquenessVerdict(True, f"t={t} >= 3 orthonormal modes", ks)


# -- batch experiments --------------------------------------------------------

@dataclass
class ExperimentSpec:
    dims: tuple
    R: int
    t: int
    beta: float = 0.1
    eps1: float = 1e-8
    eps2: float = 1e-8
    n_instances: int = 50
    seed_base: int = 0
    init: str = "procedure"
    tol: float = 1e-4
    max_iter: int = 2000
    noise: str = "uniform"

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.n_instances < 1:
            raise ValueError("n_instances must be at least 1")
        if self.init not in ("procedure", "random"):
            raise ValueError(f"init must be 'procedure' or 'random', got {self.init!r}")
        if not 0 <= self.t <= len(self.dims):
            raise ValueError(f"t must lie in [0, {len(self.dims)}]")
        for j in range(len(self.dims) - self.t, len(self.dims)):
            if self.dims[j] < self.R:
                raise RankTooLarge(f"rank exceeds mode extent: R={self.R} > n_{j}={self.dims[j]}")
        SolverConfig(eps1=self.eps1, eps2=self.eps2, tol=self.tol, max_iter=self.max_iter)


@dataclass
class InstanceResult:
    seed: int
    n_iter: int
    time_s: float
    rel_err: float
    status: str
    error: Optional[str] = None


@dataclass
class ResultRow:
    spec: ExperimentSpec
    instances: List[InstanceResult]

    @property
    def ok(self):
        return [r for r in self.instances if r.error is None]

    @property
    def mean_iter(self) -> float:
        return float(np.mean([r.n_iter for r in self.ok])) if self.ok else float("nan")

    @property
    def median_iter(self) -> float:
        return float(np.median([r.n_iter for r in self.ok])) if self.ok else float("nan")

    @property
    def mean_time_s(self) -> float:
        return float(np.mean([r.time_s for r in self.ok])) if self.ok else float("nan")

    @property
    def mean_rel_err(self) -> float:
        return float(np.mean([r.rel_err for r in self.ok])) if self.ok else float("nan")

    def count(self, status) -> int:
        return sum(r.status == status for r in self.ok)

    @property
    def n_errors(self) -> int:
        return len(self.instances) - len(self.ok)

    def as_csv_row(self) -> list:
        s = self.spec
        return [
            s.t, "x".join(str(n) for n in s.dims), s.R, s.eps1, s.eps2, s.init, len(self.instances),
            self.mean_iter, self.median_iter, self.mean_time_s, self.mean_rel_err,
            self.count(CONVERGED), self.count(MAX_ITER), self.count(DEGENERATE),
        ]

    def manifest(self) -> dict:
        return {"spec": asdict(self.spec), "instances": [asdict(r) for r in self.instances]}


def run_instance(spec: ExperimentSpec, seed: int) -> InstanceResult:
    """Generate, initialize, solve and score one instance (timing covers init and solve)."""
    try:
        A, truth = gen_synthetic(spec.dims, spec.R, spec.t, spec.beta, seed, spec.noise)
        config = SolverConfig(eps1=spec.eps1, eps2=spec.eps2, tol=spec.tol, max_iter=spec.max_iter)
        t0 = time.perf_counter()
        if spec.init == "procedure":
            init = get_initializer(A, spec.R, spec.t)
        else:
            init = random_init(A, spec.R, spec.t, seed=[seed, 1])
        out, trace = run(A, spec.R, spec.t, config, init)
        elapsed = time.perf_counter() - t0
        return InstanceResult(seed, trace.n_iter, elapsed, rel_err(truth, out), trace.status)
    except OtapError as exc:
        return InstanceResult(seed, 0, 0.0, float("nan"), "Error", f"{type(exc).__name__}: {exc}")


def _run_one(args):
    return run_instance(*args)


def _n_workers():
    try:
        return max(int(os.environ.get("OTAP_THREADS", "0")), 0)
    except ValueError:
        return 0


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None) -> ResultRow:
    """Run ``spec.n_instances`` instances with seeds ``seed_base + k``.

    ``workers`` (default: env ``OTAP_THREADS``, 0 = serial) sizes a process
    pool; results are ordered by seed, so the output does not depend on it.
    """
    workers = _n_workers() if workers is None else workers
    jobs = [(spec, spec.seed_base + k) for k in range(spec.n_instances)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    return ResultRow(spec, sorted(results, key=lambda r: r.seed))


def append_result_csv(path, row: ResultRow) -> None:
    """Append one row, writing the header only when the file is new or empty."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(RESULT_HEADER)
        w.writerow(row.as_csv_row())


def write_manifest(path, row: ResultRow) -> None:
    with open(path, "w") as fh:
        json.dump(row.manifest(), fh, indent=1)


def init_ratio_experiment(dims: Sequence[int], R: int, t: int, n_instances: int, seed=0,
                          dist: str = "normal") -> float:
    """Mean of ``G(procedure init) / G(random init)`` over random tensors."""
    ratios = []
    for k in range(n_instances):
        rng = np.random.default_rng([seed, k])
        if dist == "normal":
            A = rng.standard_normal(size=tuple(dims))
        elif dist == "uniform":
            A = rng.uniform(-1.0, 1.0, size=tuple(dims))
        else:
            raise ValueError(f"unknown distribution {dist!r}")
        gp = objective_G(A, get_initializer(A, R, t))
        gr = objective_G(A, random_init(A, R, t, seed=[seed, k, 1]))
        ratios.append(gp / gr)
    return float(np.mean(ratios))
