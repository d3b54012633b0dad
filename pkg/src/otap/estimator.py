"""scikit-learn style front end for the solver."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import tensor as tc
from .exceptions import RankTooLarge
from .initializers import get_initializer, random_init
from .model import FactorSet, compute_sigma, kkt_residual
from .solver import SolverConfig, run


def check_tensor(X, min_order=1) -> np.ndarray:
    """Validate a dense tensor input and return it as a float ndarray."""
    if isinstance(X, tc.DenseTensor):
        return X.data
    arr = np.asarray(X, dtype=float)
    if arr.ndim < min_order:
        raise ValueError(f"expected a tensor of order >= {min_order}, got ndim={arr.ndim}")
    if arr.size == 0:
        raise ValueError("empty tensor")
    if not np.all(np.isfinite(arr)):
        raise ValueError("input contains NaN or Inf")
    return arr


class OrthogonalCPD(TransformerMixin, BaseEstimator):
    """Rank-``rank`` CP approximation whose last ``n_orthonormal`` factors have orthonormal columns.

    Fitting runs epsilon-ALS from either the HOSVD-based initializer
    (``init="procedure"``) or a random feasible point.

    Parameters
    ----------
    rank : int
        Number of rank-1 terms ``R``.
    n_orthonormal : int
        Number ``t`` of trailing modes constrained to orthonormal columns.
    eps1, eps2 : float
        Shifts for the unit-norm and orthonormal block updates.
    tol : float
        Relative step tolerance of the stopping rule.
    max_iter : int
    init : {"procedure", "random"} or FactorSet
    random_state : int, optional
        Seed of the random initializer.
    batched : bool
        Use the Khatri-Rao formulation for the block gradients.
    sigma_floor : float
        Relative weight below which a column is reported as degenerate.
    auto_reduce_rank : bool
        Drop degenerate columns and keep iterating with a smaller rank.

    Attributes
    ----------
    factors_ : list of ndarray
    weights_ : ndarray
    factor_set_ : FactorSet
    trace_ : IterationTrace
    n_iter_ : int
    status_ : str
    """

    def __init__(self, rank=1, n_orthonormal=1, eps1=1e-8, eps2=1e-8, tol=1e-4, max_iter=2000,
                 init="procedure", random_state=None, batched=True, sigma_floor=1e-12,
                 auto_reduce_rank=False):
        self.rank = rank
        self.n_orthonormal = n_orthonormal
        self.eps1 = eps1
        self.eps2 = eps2
        self.tol = tol
        self.max_iter = max_iter
        self.init = init
        self.random_state = random_state
        self.batched = batched
        self.sigma_floor = sigma_floor
        self.auto_reduce_rank = auto_reduce_rank

    def _config(self):
        return SolverConfig(eps1=self.eps1, eps2=self.eps2, tol=self.tol, max_iter=self.max_iter,
                            sigma_floor=self.sigma_floor, batched=self.batched,
                            auto_reduce_rank=self.auto_reduce_rank)

    def _initial_point(self, X):
        if isinstance(self.init, FactorSet):
            return self.init
        if self.init == "procedure":
            return get_initializer(X, self.rank, self.n_orthonormal)
        if self.init == "random":
            return random_init(X, self.rank, self.n_orthonormal, seed=self.random_state)
        raise ValueError(f"init must be 'procedure', 'random' or a FactorSet, got {self.init!r}")

    def fit(self, X, y=None):
        X = check_tensor(X)
        d = X.ndim
        if not 1 <= self.n_orthonormal <= d:
            raise ValueError(f"n_orthonormal must lie in [1, {d}]")
        for j in range(d - self.n_orthonormal, d):
            if X.shape[j] < self.rank:
                raise RankTooLarge(f"rank exceeds mode extent: R={self.rank} > n_{j}={X.shape[j]}")
        config = self._config()
        init = self._initial_point(X)
        fs, trace = run(X, self.rank, self.n_orthonormal, config, init)
        self.factor_set_ = fs
        self.factors_ = fs.factors
        self.weights_ = fs.sigma
        self.trace_ = trace
        self.n_iter_ = trace.n_iter
        self.status_ = trace.status
        self.shape_ = X.shape
        return self

    def transform(self, X):
        """Weights of ``X`` on the fitted rank-1 terms, ``<X, u_{1,i} o ... o u_{d,i}>``."""
        check_is_fitted(self, "factors_")
        X = check_tensor(X)
        if X.shape != self.shape_:
            raise ValueError(f"expected shape {self.shape_}, got {X.shape}")
        return compute_sigma(X, self.factors_)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).weights_

    def inverse_transform(self, weights):
        check_is_fitted(self, "factors_")
        return tc.cp_reconstruct(weights, self.factors_).data

    def reconstruct(self):
        check_is_fitted(self, "factors_")
        return self.inverse_transform(self.weights_)

    def score(self, X, y=None):
        """Fraction of ``||X||^2`` captured: ``sum(sigma**2) / ||X||_F**2``."""
        sigma = self.transform(X)
        return float(sigma @ sigma) / float(np.sum(check_tensor(X) ** 2))

    def kkt(self, X):
        check_is_fitted(self, "factors_")
        return kkt_residual(check_tensor(X), self.factor_set_)
