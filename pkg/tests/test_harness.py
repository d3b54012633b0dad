import csv
import itertools

import numpy as np
import pytest

from _util import random_feasible
from otap import tensor as tc
from otap.exceptions import RankTooLarge, ShapeMismatch, TooManyColumns
from otap.harness import (
    RESULT_HEADER,
    ExperimentSpec,
    append_result_csv,
    gen_synthetic,
    kruskal_rank,
    rel_err,
    run_experiment,
    uniqueness_check,
)
from otap.model import FactorSet


def brute_force_rel_err(truth, rec):
    """Exhaustive search over column permutations with the best sign per (mode, column)."""
    denom = np.sqrt(sum(np.sum(U ** 2) for U in truth.factors))
    best = np.inf
    for perm in itertools.permutations(range(truth.R)):
        total = 0.0
        for U, W in zip(truth.factors, rec.factors):
            for i, p in enumerate(perm):
                total += min(np.sum((U[:, i] - W[:, p]) ** 2), np.sum((U[:, i] + W[:, p]) ** 2))
        best = min(best, total)
    return np.sqrt(best) / denom


def subset_kruskal_oracle(M, tol=1e-10):
    n = M.shape[1]
    k = 0
    for size in range(1, n + 1):
        if all(np.linalg.matrix_rank(M[:, list(c)], tol=tol * np.linalg.norm(M, 2)) == size
               for c in itertools.combinations(range(n), size)):
            k = size
        else:
            break
    return k


def test_gen_synthetic_noise_free_and_noise_level():
    A, truth = gen_synthetic((4, 5, 6), 3, 1, 0.0, seed=1)
    assert abs(tc.frobenius_norm(A) - 1) < 1e-12
    np.testing.assert_allclose(tc.cp_reconstruct(truth.sigma, truth.factors).data, A.data, atol=1e-14)
    A2, _ = gen_synthetic((4, 5, 6), 3, 1, 0.1, seed=1)
    assert abs(tc.frobenius_norm(A2.data - A.data) - 0.1) < 1e-12
    A3, _ = gen_synthetic((4, 5, 6), 3, 1, 0.1, seed=1)
    assert np.array_equal(A2.data, A3.data)
    An, _ = gen_synthetic((4, 5, 6), 3, 1, 0.1, seed=1, noise="normal")
    assert abs(tc.frobenius_norm(An.data - A.data) - 0.1) < 1e-12


def test_gen_synthetic_validation():
    with pytest.raises(RankTooLarge):
        gen_synthetic((4, 5, 2), 3, 1, 0.1, seed=0)
    with pytest.raises(ValueError):
        gen_synthetic((4, 5, 6), 3, 1, -1.0, seed=0)


def test_rel_err_permuted_and_sign_flipped():
    rng = np.random.default_rng(0)
    truth = FactorSet(random_feasible(rng, (4, 5, 6), 4, 1), 1, np.ones(4))
    perm = [2, 0, 3, 1]
    flipped = [U[:, perm] * rng.choice([-1, 1], 4) for U in truth.factors]
    assert rel_err(truth, FactorSet(flipped, 1, np.ones(4))) < 1e-14
    assert rel_err(truth, truth) == 0


@pytest.mark.parametrize("R", [1, 3, 5])
def test_rel_err_matches_brute_force(R):
    rng = np.random.default_rng(R)
    for _ in range(5):
        a = FactorSet(random_feasible(rng, (4, 5, 6), R, 1), 1)
        b = FactorSet(random_feasible(rng, (4, 5, 6), R, 1), 1)
        assert abs(rel_err(a, b) - brute_force_rel_err(a, b)) < 1e-12


def test_rel_err_shape_mismatch():
    rng = np.random.default_rng(1)
    a = FactorSet(random_feasible(rng, (4, 5, 6), 2, 1), 1)
    b = FactorSet(random_feasible(rng, (4, 5, 6), 3, 1), 1)
    with pytest.raises(ShapeMismatch):
        rel_err(a, b)


def test_kruskal_rank():
    assert kruskal_rank(np.eye(4)) == 4
    M = np.random.default_rng(2).standard_normal((5, 3))
    assert kruskal_rank(np.column_stack([M, M[:, 0]])) == 1
    R = np.random.default_rng(3).standard_normal((6, 4))
    assert kruskal_rank(R) == 4 == subset_kruskal_oracle(R)
    C = np.random.default_rng(4).standard_normal((3, 5))
    assert kruskal_rank(C) == 3 == subset_kruskal_oracle(C)
    D = np.column_stack([C[:, 0], C[:, 1], C[:, 0] + C[:, 1], C[:, 2]])
    assert kruskal_rank(D) == 2 == subset_kruskal_oracle(D)
    with pytest.raises(TooManyColumns):
        kruskal_rank(np.ones((2, 13)))


def test_uniqueness_cases():
    rng = np.random.default_rng(5)
    v = uniqueness_check(FactorSet(random_feasible(rng, (4, 5, 6), 1, 1), 1))
    assert v.label == "NotCertified" and "R >= 2" in v.reason
    v = uniqueness_check(FactorSet(random_feasible(rng, (3, 4, 5), 2, 3), 3))
    assert v.unique and v.label == "Unique"
    # t = 1, d = 4, generic free modes: sum of k-ranks 3R >= R + 3
    v = uniqueness_check(FactorSet(random_feasible(rng, (5, 5, 5, 5), 3, 1), 1))
    assert v.unique and v.kruskal_ranks[:3] == [3, 3, 3]
    # t = 1 with collapsed free modes: 1 + 1 + 1 < R + 3
    col = rng.standard_normal((5, 1))
    col /= np.linalg.norm(col)
    same = np.repeat(col, 3, axis=1)
    v = uniqueness_check(FactorSet([same, same, same, np.eye(5)[:, :3]], 1))
    assert not v.unique
    v = uniqueness_check(FactorSet([same, same, np.eye(5)[:, :3], np.eye(5)[:, 2:]], 2))
    assert not v.unique
    v = uniqueness_check(FactorSet([np.eye(5)[:, :3], same, np.eye(5)[:, :3], np.eye(5)[:, 2:]], 2))
    assert v.unique


def test_experiment_noiseless_single_instance():
    spec = ExperimentSpec((5, 5, 5, 5), 3, 1, beta=0.0, n_instances=1, tol=1e-6)
    row = run_experiment(spec, workers=0)
    assert row.mean_rel_err <= 1e-6
    assert row.instances[0].n_iter <= 10
    assert row.count("Converged") == 1 and row.n_errors == 0


def test_experiment_validation():
    with pytest.raises(RankTooLarge):
        ExperimentSpec((5, 5, 2), 3, 1)
    with pytest.raises(ValueError):
        ExperimentSpec((5, 5, 5), 3, 1, init="bogus")
    with pytest.raises(ValueError):
        ExperimentSpec((5, 5, 5), 3, 1, n_instances=0)


def test_experiment_pool_matches_serial():
    spec = ExperimentSpec((5, 5, 5), 2, 1, n_instances=3, seed_base=7)
    a = run_experiment(spec, workers=0)
    b = run_experiment(spec, workers=2)
    assert [r.seed for r in b.instances] == [7, 8, 9]
    assert [r.rel_err for r in a.instances] == [r.rel_err for r in b.instances]
    assert [r.n_iter for r in a.instances] == [r.n_iter for r in b.instances]


def test_append_result_csv(tmp_path):
    spec = ExperimentSpec((4, 4, 4), 2, 1, n_instances=2)
    row = run_experiment(spec, workers=0)
    path = tmp_path / "out.csv"
    append_result_csv(path, row)
    append_result_csv(path, row)
    rows = list(csv.reader(open(path)))
    assert rows[0] == RESULT_HEADER
    assert len(rows) == 3 and rows[1] == rows[2]
    assert rows[1][1] == "4x4x4"
