import warnings

import numpy as np
import pytest

from _util import exact_instance, random_feasible
from otap.exceptions import DegenerateSigma, InfeasibleInit
from otap.initializers import get_initializer, random_init
from otap.linalg import thin_svd
from otap.model import FactorSet, compute_sigma, mode_gradients
from otap.solver import (
    CONVERGED,
    DEGENERATE,
    MAX_ITER,
    TRACE_HEADER,
    DegeneracyWarning,
    SolverConfig,
    run,
    step,
    sweep_nonorthogonal,
    sweep_orthonormal,
    update_weights,
)


def start(A, factors, t):
    return update_weights(A, FactorSet(factors, t))


def H_of(A, state):
    return float(compute_sigma(A, state.factors) @ state.omega)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(eps1=-1)
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)


def test_nonorthogonal_fixed_point_eps0():
    rng = np.random.default_rng(0)
    A, truth = exact_instance(rng, (4, 5, 6), 3, 2)
    state = update_weights(A, truth)
    new, _ = sweep_nonorthogonal(A, state, 0, 0.0)
    np.testing.assert_allclose(np.abs(np.sum(new.factors[0] * truth.factors[0], axis=0)), 1, atol=1e-10)


def test_large_shift_keeps_iterate():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((4, 5, 6))
    state = start(A, random_feasible(rng, A.shape, 2, 1), 1)

    def angle(eps):
        U = sweep_nonorthogonal(A, state, 0, eps)[0].factors[0]
        return np.max(np.arccos(np.clip(np.sum(U * state.factors[0], axis=0), -1, 1)))

    assert angle(1e8) < angle(1e6) < angle(1.0)


def test_per_column_gain_identity():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((5, 4, 6))
    eps1 = 0.3
    state = start(A, random_feasible(rng, A.shape, 3, 1), 1)
    V = mode_gradients(A, state.factors, 0)
    new, stats = sweep_nonorthogonal(A, state, 0, eps1)
    dU = new.factors[0] - state.factors[0]
    gain = state.omega * (np.sum(V * new.factors[0], axis=0) - np.sum(V * state.factors[0], axis=0))
    predicted = (stats.shifted_norms + eps1) / 2 * np.sum(dU ** 2, axis=0)
    np.testing.assert_allclose(gain, predicted, rtol=1e-10, atol=1e-14)


def test_orthonormal_fixed_point_eps0():
    rng = np.random.default_rng(3)
    A, truth = exact_instance(rng, (4, 5, 6), 3, 2)
    state = update_weights(A, truth)
    new, _ = sweep_orthonormal(A, state, 2, 0.0)
    np.testing.assert_allclose(np.abs(np.sum(new.factors[2] * truth.factors[2], axis=0)), 1, atol=1e-8)


def test_orthonormal_gain_bound():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((5, 4, 6))
    for eps2 in (0.0, 1e-8, 0.5):
        state = start(A, random_feasible(rng, A.shape, 3, 2), 2)
        new, stats = sweep_orthonormal(A, state, 1, eps2)
        gain = H_of(A, new) - H_of(A, state)
        Vt = mode_gradients(A, state.factors, 1) * state.omega + eps2 * state.factors[1]
        assert np.isclose(stats.lambda_min, thin_svd(Vt).lam[-1])
        bound = (stats.lambda_min + eps2) / 2 * stats.step ** 2
        assert gain - bound >= -1e-10


def test_batched_and_naive_paths_agree():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((4, 5, 3, 6))
    init = FactorSet(random_feasible(rng, A.shape, 3, 2), 2)
    cfg = dict(max_iter=5, tol=1e-12)
    a, _ = run(A, 3, 2, SolverConfig(batched=True, **cfg), init)
    b, _ = run(A, 3, 2, SolverConfig(batched=False, **cfg), init)
    for U, V in zip(a.factors, b.factors):
        np.testing.assert_allclose(U, V, atol=1e-10)


def test_update_weights_example():
    A = np.diag([3.0, 4.0])
    state = FactorSet([np.eye(2), np.eye(2)], 1, [3.0, 4.0], omega=[1.0, 0.0])
    new = update_weights(A, state)
    np.testing.assert_allclose(new.omega, [0.6, 0.8])
    gain = new.sigma @ new.omega - new.sigma @ state.omega
    assert np.isclose(gain, 2.5 * np.sum((new.omega - state.omega) ** 2))
    same = update_weights(A, new)
    np.testing.assert_allclose(same.omega, new.omega)


def test_update_weights_zero_tensor():
    with pytest.raises(DegenerateSigma):
        update_weights(np.zeros((2, 2)), FactorSet([np.eye(2), np.eye(2)], 1))


def test_run_from_truth_converges_fast():
    rng = np.random.default_rng(6)
    A, truth = exact_instance(rng, (5, 5, 5, 5), 3, 1)
    out, trace = run(A, 3, 1, SolverConfig(), truth)
    assert trace.status == CONVERGED
    assert trace.n_iter <= 2
    assert trace.records[-1].rel_step < 1e-4


def test_run_h_monotone_and_trace():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((6, 5, 4, 6))
    out, trace = run(A, 3, 2, SolverConfig(tol=1e-8, max_iter=200, trace_stride=5),
                     random_init(A, 3, 2, seed=1))
    H = trace.H
    assert np.all(np.diff(H) >= -1e-11)
    kkt = trace.column("kkt_total")
    assert np.isfinite(kkt[0]) and np.isfinite(kkt[-1])
    assert np.isnan(kkt[1])
    lines = trace.to_csv().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len(lines) == trace.n_iter + 2


def test_max_iter_status():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((6, 6, 6))
    _, trace = run(A, 4, 1, SolverConfig(max_iter=2, tol=1e-14), random_init(A, 4, 1, seed=0))
    assert trace.status == MAX_ITER and trace.n_iter == 2


def degenerate_problem():
    A = np.zeros((3, 3, 3))
    A[0, 0, 0] = 1.0
    init = FactorSet([np.eye(3)[:, :2]] * 3, 3)
    return A, init


def test_degenerate_column_warns():
    A, init = degenerate_problem()
    with pytest.warns(DegeneracyWarning, match="consider reducing R"):
        out, trace = run(A, 2, 3, SolverConfig(max_iter=10), init)
    assert trace.status == DEGENERATE
    assert trace.degenerate_columns == [1]


def test_degenerate_auto_reduce():
    A, init = degenerate_problem()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out, trace = run(A, 2, 3, SolverConfig(max_iter=10, auto_reduce_rank=True), init)
    assert out.R == 1
    assert trace.rank_reductions == [1]
    assert trace.status == CONVERGED


def test_infeasible_init_rejected():
    A = np.random.default_rng(9).standard_normal((3, 4, 5))
    init = get_initializer(A, 2, 1)
    init.factors[0] = 2 * init.factors[0]
    with pytest.raises(InfeasibleInit):
        run(A, 2, 1, SolverConfig(), init)


def test_step_returns_stats_per_mode():
    rng = np.random.default_rng(10)
    A = rng.standard_normal((4, 5, 6))
    state = start(A, random_feasible(rng, A.shape, 2, 2), 2)
    new, stats = step(A, state, SolverConfig())
    assert [s.mode for s in stats] == [0, 1, 2]
    assert stats[0].lambda_min is None and stats[2].shifted_norms is None
