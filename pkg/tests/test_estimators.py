from itertools import combinations
import math

import numpy as np
import pytest

from onebit.errors import DegenerateScoreError, InvalidParameterError
from onebit.estimators import (
    T0_NONZERO,
    T0_ZERO,
    NonnegUnitSparse,
    TernarySparse,
    UnitSparse,
    brute_force_oracle,
    estimate_direction,
    estimate_nonneg_direction,
    estimate_ternary,
    estimate_with_norm,
)
from onebit.harness import generate_signal, verify_oracle
from onebit.sensing import MeasurementSet, NoiselessSign, augment, gaussian_ensemble, sign_measure
from onebit.theory import SQRT_2_OVER_PI

WORKED_A = np.array([[1.0, 0.0, 2.0], [0.0, 3.0, -1.0]])
WORKED_Y = np.array([1, -1])


def scores_as_problem(v):
    """A one-row problem whose score vector A^T y is exactly ``v``."""
    return np.asarray(v, dtype=float)[None, :], np.array([1])


def test_worked_example():
    est = estimate_direction(WORKED_A, WORKED_Y, 2)
    np.testing.assert_array_equal(est.score_vector, [1, -3, 3])
    np.testing.assert_allclose(est.direction, [0, -1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-15)
    assert est.support.tolist() == [1, 2]
    assert est.scaled is None and est.branch is None


def test_accepts_measurement_set():
    ms = MeasurementSet(y=WORKED_Y, model=NoiselessSign())
    np.testing.assert_array_equal(estimate_direction(WORKED_A, ms, 2).direction,
                                  estimate_direction(WORKED_A, WORKED_Y, 2).direction)


def test_full_k_is_plain_normalization():
    A = gaussian_ensemble(15, 6, 3)
    y = sign_measure(A, np.arange(6.0) - 2.5).y
    est = estimate_direction(A, y, 6)
    v = A.rows.T @ y
    np.testing.assert_allclose(est.direction, v / np.linalg.norm(v), rtol=0, atol=1e-15)


def test_degenerate_scores():
    A, y = scores_as_problem([0.0, 0.0, 0.0])
    with pytest.raises(DegenerateScoreError):
        estimate_direction(A, y, 2)
    with pytest.raises(InvalidParameterError):
        estimate_direction(WORKED_A, WORKED_Y, 4)
    with pytest.raises(InvalidParameterError):
        estimate_direction(WORKED_A, np.array([1, -1, 1]), 1)


@pytest.mark.parametrize("variant", ["unit", "nonneg", "ternary"])
def test_matches_brute_force(variant):
    records = verify_oracle(200, seed=101, variant=variant)
    assert all(r["abs_diff"] <= 1e-12 for r in records)
    assert all(r["support_match"] for r in records)


@pytest.mark.parametrize("v, k, expected", [
    ([1, -3, 3], 2, np.array([1, 0, 3]) / math.sqrt(10)),
    ([-1, -2], 1, [1, 0]),
    ([5, 4, 3, 2], 2, np.array([5, 4, 0, 0]) / math.sqrt(41)),
    ([0, -1, 0], 2, [1, 0, 0]),
])
def test_nonneg_examples(v, k, expected):
    A, y = scores_as_problem(v)
    est = estimate_nonneg_direction(A, y, k)
    np.testing.assert_allclose(est.direction, expected, atol=1e-15)
    value, argmax = brute_force_oracle(A, y, NonnegUnitSparse(k))
    assert value == pytest.approx(float(np.dot(v, expected)), abs=1e-12)
    np.testing.assert_allclose(argmax, expected, atol=1e-15)
    assert np.all(est.direction >= 0)


@pytest.mark.parametrize("v, k, expected", [
    ([1, -3, 3], 2, [0, -1, 1]),
    ([0, 0, 7], 1, [0, 0, 1]),
])
def test_ternary_examples(v, k, expected):
    A, y = scores_as_problem(v)
    est = estimate_ternary(A, y, k)
    np.testing.assert_array_equal(est.scaled, expected)
    np.testing.assert_allclose(est.direction, np.array(expected) / np.linalg.norm(expected))


def test_oracle_single_support_and_full_ternary():
    A, y = scores_as_problem([0.5, -4.0, 2.0, 1.0])
    value, argmax = brute_force_oracle(A, y, UnitSparse(1))
    assert value == 4.0
    np.testing.assert_array_equal(argmax, [0, -1, 0, 0])
    value, argmax = brute_force_oracle(A, y, TernarySparse(4))
    assert value == 7.5
    np.testing.assert_array_equal(argmax, [1, -1, 1, 1])


def test_oracle_guard():
    A = gaussian_ensemble(3, 15, 1)
    with pytest.raises(InvalidParameterError):
        brute_force_oracle(A, np.ones(3), UnitSparse(2))
    A = gaussian_ensemble(3, 6, 1)
    with pytest.raises(InvalidParameterError):
        brute_force_oracle(A, np.ones(3), UnitSparse(5))


def _sphere_grid(m):
    theta = np.linspace(0, np.pi, m)
    phi = np.linspace(0, 2 * np.pi, 2 * m, endpoint=False)
    t, p = np.meshgrid(theta, phi)
    return np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1).reshape(-1, 3)


def test_oracle_against_dense_grid_in_three_dimensions():
    # second, naive maximizer: dense sampling of the unit sphere / its 2-sparse circles
    grid = _sphere_grid(400)
    circle = np.linspace(0, 2 * np.pi, 20_000, endpoint=False)
    for seed in range(10):
        A = gaussian_ensemble(5, 3, 500 + seed)
        y = sign_measure(A, [1.0, -0.5, 0.3]).y
        v = A.rows.T @ y
        value3, _ = brute_force_oracle(A, y, UnitSparse(3))
        grid3 = np.max(grid @ v)
        assert grid3 <= value3 + 1e-12
        assert value3 - grid3 <= 1e-3 * value3
        value2, _ = brute_force_oracle(A, y, UnitSparse(2))
        grid2 = max(np.max(v[i] * np.cos(circle) + v[j] * np.sin(circle))
                    for i, j in combinations(range(3), 2))
        assert grid2 <= value2 + 1e-12
        assert value2 - grid2 <= 1e-6 * value2


def _random_feasible(rng, d, k, kind):
    x = np.zeros(d)
    size = int(rng.integers(1, k + 1))
    S = rng.choice(d, size, replace=False)
    if kind == "ternary":
        x[S] = rng.choice([-1.0, 1.0], size)
        return x
    vals = rng.standard_normal(size)
    if kind == "nonneg":
        vals = np.abs(vals)
    x[S] = vals
    return x / np.linalg.norm(x)


@pytest.mark.parametrize("kind, estimator", [
    ("unit", estimate_direction),
    ("nonneg", estimate_nonneg_direction),
    ("ternary", estimate_ternary),
])
def test_optimality_certificate(kind, estimator):
    rng = np.random.default_rng(5)
    d, k = 40, 4
    A = gaussian_ensemble(60, d, 77)
    y = sign_measure(A, generate_signal(d, 4, 3).vec).y
    est = estimator(A, y, k)
    x_hat = est.scaled if kind == "ternary" else est.direction
    best = y @ A.rows @ x_hat
    for _ in range(1000):
        assert y @ A.rows @ _random_feasible(rng, d, k, kind) <= best + 1e-9


def test_scale_invariance():
    A = gaussian_ensemble(30, 12, 4)
    y = sign_measure(A, generate_signal(12, 3, 1).vec).y
    base = estimate_direction(A, y, 3)
    for c in (1e-3, 0.5, 7.0, 1e4):
        est = estimate_direction(c * A.rows, y, 3)
        assert est.support.tolist() == base.support.tolist()
        np.testing.assert_allclose(est.direction, base.direction, rtol=0, atol=1e-14)


def test_proof_sketch_inequality_chain():
    lam = SQRT_2_OVER_PI
    for seed in range(40):
        rng = np.random.default_rng(seed)
        d, s = int(rng.integers(10, 200)), int(rng.integers(1, 6))
        k = s + int(rng.integers(0, 3))
        n = int(rng.integers(5, 400))
        x_bar = generate_signal(d, s, seed).unit
        A = gaussian_ensemble(n, d, 1000 + seed)
        y = sign_measure(A, x_bar).y
        x_hat = estimate_direction(A, y, k).direction
        err = np.linalg.norm(x_hat - x_bar)
        sup = np.max(np.abs(A.rows.T @ y / n - lam * x_bar))
        assert lam / 2 * err**2 <= sup * math.sqrt(2 * k) * err + 1e-12


# --- norm estimation ------------------------------------------------------

def test_norm_branch_t0_zero():
    # the dither column contributes b/R = 0.1 to the augmented score: never in the top 2
    A = np.array([[5.0, 0.0, 1.0], [0.0, -4.0, 0.0]])
    y = np.array([1, -1])
    b = np.array([0.2, 0.0])
    R = 2.0
    est = estimate_with_norm(A, y, b, R, 2)
    assert est.branch == T0_ZERO
    np.testing.assert_allclose(est.scaled, R * np.array([5.0, 4.0, 0.0]) / math.sqrt(41))
    np.testing.assert_allclose(est.direction, np.array([5.0, 4.0, 0.0]) / math.sqrt(41))
    assert est.meta["t0"] == 0.0


def test_norm_branch_t0_negative():
    A = np.array([[1.0, 0.2], [0.0, 0.1]])
    y = np.array([1, 1])
    b = np.array([-6.0, -4.0])
    R = 2.0
    est = estimate_with_norm(A, y, b, R, 2)
    # augmented scores: (1, 0.3, -5); top two: coordinates 0 and 2
    x_aug = np.array([1.0, 0.0, -5.0]) / math.sqrt(26)
    assert est.branch == T0_NONZERO
    assert est.meta["t0"] == pytest.approx(x_aug[2])
    np.testing.assert_allclose(est.scaled, (R / x_aug[2]) * x_aug[:2])
    assert est.scaled[0] < 0


def test_norm_estimate_matches_augmented_direction():
    A = gaussian_ensemble(400, 30, 8)
    x = generate_signal(30, 3, 2).vec
    R = 2 * np.linalg.norm(x)
    from onebit.sensing import dithered_measure
    ms = dithered_measure(A, x, R, 9)
    est = estimate_with_norm(A, ms, ms.dither, R, 4)
    aug = estimate_direction(augment(A, ms.dither, R), ms.y, 4).direction
    x0, t0 = aug[:-1], aug[-1]
    assert est.branch == (T0_NONZERO if t0 != 0 else T0_ZERO)
    np.testing.assert_allclose(est.scaled, R / t0 * x0)
    assert abs(np.linalg.norm(est.direction) - 1) < 1e-10
    # the estimated norm is in the right ballpark at this size
    assert abs(np.linalg.norm(est.scaled) / np.linalg.norm(x) - 1) < 0.5


def test_norm_requires_k_two():
    with pytest.raises(InvalidParameterError):
        estimate_with_norm(WORKED_A, WORKED_Y, np.zeros(2), 1.0, 1)


def test_result_serialization():
    est = estimate_with_norm(np.array([[5.0, 0.0, 1.0], [0.0, -4.0, 0.0]]), np.array([1, -1]),
                             np.array([0.2, 0.0]), 2.0, 2)
    doc = est.to_dict()
    assert set(doc) == {"direction", "support", "scaled", "branch", "k", "meta"}
    doc = estimate_direction(WORKED_A, WORKED_Y, 2).to_dict()
    assert set(doc) == {"direction", "support", "k", "meta"}
