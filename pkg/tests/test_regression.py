import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expert_elicit.regression import (
    ConvergenceWarning,
    Dataset,
    LassoConfig,
    WeightVector,
    cv_select_lambda,
    fit_lasso,
    fit_lasso_cv,
    lambda_max,
    objective,
    predict,
    soft_threshold,
)

from conftest import assert_kkt


def orthonormal_problem(rng, n, p, noise=1.0):
    # Columns of X / sqrt(n) orthonormal: X^T X / n = I.
    q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    X = np.sqrt(n) * q
    theta = rng.standard_normal(p) * (rng.random(p) < 0.3)
    y = X @ theta + noise * rng.standard_normal(n)
    return Dataset(X, y)


@pytest.mark.parametrize("z, gamma, expected", [(3.0, 1.0, 2.0), (-0.5, 1.0, 0.0), (-3.0, 1.0, -2.0)])
def test_soft_threshold_examples(z, gamma, expected):
    assert soft_threshold(z, gamma) == expected


def test_soft_threshold_rejects_negative_gamma():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


@given(st.floats(-1e6, 1e6), st.floats(0, 1e6))
def test_soft_threshold_shrinks_toward_zero(z, gamma):
    out = soft_threshold(z, gamma)
    assert abs(out) <= abs(z)
    assert out == 0.0 or np.sign(out) == np.sign(z)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.zeros(1))
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)), np.zeros(0))


def test_weight_vector_support_is_nonzero_set():
    w = WeightVector([0.0, 1.5, 0.0, -2.0])
    assert w.support == {1, 3}
    assert w.sparsity == 2
    with pytest.raises(ValueError):
        WeightVector([np.inf])


def test_lasso_config_validation():
    for bad in (dict(alpha=1.5), dict(lam=-1.0), dict(tolerance=0.0), dict(max_sweeps=0)):
        with pytest.raises(ValueError):
            LassoConfig(**bad)


def test_orthonormal_design_matches_closed_form(rng):
    for _ in range(20):
        n, p = 60, int(rng.integers(2, 40))
        data = orthonormal_problem(rng, n, p)
        ols = data.features.T @ data.responses / n
        lam = float(rng.uniform(0.05, 1.0))
        fit = fit_lasso(data, LassoConfig(lam=lam))
        expected = soft_threshold(ols, lam)
        assert np.max(np.abs(fit.weights.values - expected)) < 1e-6
        assert_kkt(data, fit)


def test_large_penalty_gives_zero_vector(rng):
    data = Dataset(rng.standard_normal((8, 20)), rng.standard_normal(8))
    lam = float(np.max(np.abs(data.features.T @ data.responses)) / data.n)
    fit = fit_lasso(data, LassoConfig(lam=lam))
    assert fit.weights.sparsity == 0
    assert lam == pytest.approx(lambda_max(data))
    assert_kkt(data, fit)


def test_univariate_unpenalized_is_least_squares():
    X = np.array([[1.0], [1.0], [1.0]]) * 2.0
    y = np.array([1.0, 2.0, 4.5])
    slope = float(X[:, 0] @ y / (X[:, 0] @ X[:, 0]))
    fit = fit_lasso(Dataset(X, y), LassoConfig(lam=0.0))
    assert fit.weights[0] == pytest.approx(slope, abs=1e-12)


def test_objective_never_increases_across_sweeps(rng):
    data = Dataset(rng.standard_normal((12, 40)), rng.standard_normal(12))
    lam = 0.05 * lambda_max(data)
    values = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for k in range(1, 60):
            fit = fit_lasso(data, LassoConfig(lam=lam, max_sweeps=k))
            values.append(objective(data, fit.weights, lam))
    diffs = np.diff(values)
    assert np.all(diffs <= 1e-12 * max(values))
    assert values[-1] < values[0]


def test_objective_monotone_elastic_net(rng):
    data = Dataset(rng.standard_normal((10, 25)), rng.standard_normal(10))
    lam = 0.1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        values = [objective(data, fit_lasso(data, LassoConfig(alpha=0.5, lam=lam, max_sweeps=k)).weights, lam, 0.5)
                  for k in range(1, 30)]
    assert np.all(np.diff(values) <= 1e-12 * max(values))


def test_nonconvergence_is_flagged_not_raised(rng):
    data = Dataset(rng.standard_normal((10, 50)), rng.standard_normal(10))
    with pytest.warns(ConvergenceWarning):
        fit = fit_lasso(data, LassoConfig(lam=1e-3 * lambda_max(data), max_sweeps=2))
    assert not fit.converged
    assert fit.n_sweeps == 2
    assert fit.warnings


def test_zero_variance_column_skipped_when_standardizing(rng):
    X = rng.standard_normal((15, 4))
    X[:, 2] = 3.0
    y = X[:, 0] - X[:, 1] + 0.1 * rng.standard_normal(15)
    fit = fit_lasso(Dataset(X, y), LassoConfig(lam=0.01, standardize=True))
    assert fit.weights[2] == 0.0
    assert fit.skipped_columns == (2,)
    assert fit.warnings


def test_standardized_fit_returns_original_scale(rng):
    # Unpenalized fit is scale-equivariant: rescaling a column rescales its weight.
    X = rng.standard_normal((40, 3))
    y = X @ np.array([1.0, -2.0, 0.5]) + 0.05 * rng.standard_normal(40)
    base = fit_lasso(Dataset(X, y), LassoConfig(lam=0.0, standardize=True))
    X2 = X * np.array([10.0, 1.0, 0.1])
    scaled = fit_lasso(Dataset(X2, y), LassoConfig(lam=0.0, standardize=True))
    np.testing.assert_allclose(scaled.weights.values * [10.0, 1.0, 0.1], base.weights.values, atol=1e-6)


def test_kkt_holds_on_random_fits(rng):
    for _ in range(10):
        data = Dataset(rng.standard_normal((10, 60)), rng.standard_normal(10))
        fit = fit_lasso(data, LassoConfig(lam=float(rng.uniform(0.05, 0.8)) * lambda_max(data)))
        assert_kkt(data, fit)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_kkt_property(seed):
    r = np.random.default_rng(seed)
    data = Dataset(r.standard_normal((8, 30)), r.standard_normal(8))
    fit = fit_lasso(data, LassoConfig(lam=0.2 * lambda_max(data)))
    assert_kkt(data, fit)


def test_predict_examples():
    assert predict(WeightVector.zeros(3), [1.0, 2.0, 3.0]) == 0.0
    assert predict(WeightVector([1.0, -2.0]), [3.0, 1.0]) == 1.0
    e = np.zeros(4)
    e[2] = 1.0
    assert predict(e, [5.0, 6.0, 7.0, 8.0]) == 7.0
    with pytest.raises(ValueError):
        predict([1.0, 2.0], [1.0])


def test_cv_pure_noise_prefers_sparse_end():
    hits = 0
    for seed in range(20):
        r = np.random.default_rng(1000 + seed)
        data = Dataset(r.standard_normal((30, 50)), r.standard_normal(30))
        cv = cv_select_lambda(data, 1.0, 10, 100, seed)
        hits += cv.lambda_min >= np.median(cv.lambda_grid)
    assert hits == 20


def test_cv_tie_goes_to_larger_lambda(rng):
    # Constant-zero responses: every penalty gives the zero fit and equal errors.
    data = Dataset(rng.standard_normal((10, 5)), np.zeros(10))
    cv = cv_select_lambda(data, 1.0, 5, 2, 0)
    assert cv.mean_cv_error[0] == cv.mean_cv_error[1]
    assert cv.lambda_min == cv.lambda_grid[0] > cv.lambda_grid[1]


def test_cv_grid_shape_and_invariants(rng):
    data = Dataset(rng.standard_normal((20, 30)), rng.standard_normal(20))
    cv = cv_select_lambda(data, 1.0, 5, 50, 3)
    g = cv.lambda_grid
    assert len(g) == 50 and np.all(np.diff(g) < 0)
    assert g[0] == pytest.approx(lambda_max(data))
    assert g[-1] == pytest.approx(1e-3 * g[0])
    assert cv.lambda_min in g
    assert cv.mean_cv_error[cv.index_min] == cv.mean_cv_error.min()


def test_cv_is_deterministic(rng):
    data = Dataset(rng.standard_normal((20, 30)), rng.standard_normal(20))
    a = cv_select_lambda(data, 1.0, 10, 100, 11)
    b = cv_select_lambda(data, 1.0, 10, 100, 11)
    assert np.array_equal(a.mean_cv_error, b.mean_cv_error)
    assert a.lambda_min == b.lambda_min


def test_cv_preconditions(rng):
    data = Dataset(rng.standard_normal((4, 3)), rng.standard_normal(4))
    with pytest.raises(ValueError):
        cv_select_lambda(data, 1.0, 5, 10, 0)
    with pytest.raises(ValueError):
        cv_select_lambda(data, 1.0, 2, 1, 0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cv_recovers_planted_support(seed):
    # Easy instance: n=100, p=150, five weights of magnitude >= 1, unit noise.
    r = np.random.default_rng(seed)
    X = r.standard_normal((100, 150))
    truth = r.choice(150, size=5, replace=False)
    theta = np.zeros(150)
    theta[truth] = r.choice([-1, 1], 5) * r.uniform(1.0, 2.0, 5)
    data = Dataset(X, X @ theta + r.standard_normal(100))
    fit, cv = fit_lasso_cv(data, seed=seed)
    found = fit.weights.support
    assert set(truth.tolist()) <= found
    assert len(found) - 5 <= 30
    assert_kkt(data, fit)
