import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decorradj.regressors import (
    DegenerateSubsetError,
    FittedFunction,
    LassoSpec,
    TrainingSubset,
    default_lambda,
    fit_backend,
    fit_lasso_constrained,
    fit_ols_minnorm,
    fit_regressogram,
    fit_zero,
    interpolate_wrap,
    lasso_kkt_residual,
    lasso_objective,
    regressogram_bins,
    regressogram_shrinkage,
    safe_ceil,
    soft_threshold,
)


def _subset(rng, n, p=0.5):
    mask = rng.random(n) < p
    mask[:2] = True
    return TrainingSubset(mask, p)


def test_training_subset_basics():
    s = TrainingSubset.from_indices([0, 3], 5, 0.4)
    assert s.size == 2 and s.n == 5 and s.expected_size == 2.0
    np.testing.assert_array_equal(s.indices, [0, 3])
    with pytest.raises(ValueError):
        TrainingSubset(np.ones(3), 1.0)


def test_ols_uses_only_subset_outcomes():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 4))
    y = rng.normal(size=40)
    sub = _subset(rng, 40)
    f = fit_ols_minnorm(X, y, sub)
    ref, *_ = np.linalg.lstsq(X[sub.mask], y[sub.mask], rcond=None)
    np.testing.assert_allclose(f.coef, ref, atol=1e-10)
    y2 = y.copy()
    y2[~sub.mask] = 1e6
    np.testing.assert_array_equal(fit_ols_minnorm(X, y2, sub).predictions, f.predictions)
    assert f.train_error == pytest.approx(np.sqrt(np.mean((X[sub.mask] @ ref - y[sub.mask]) ** 2)))


def test_ols_more_features_than_subset_interpolates():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 12))
    y = rng.normal(size=30)
    sub = TrainingSubset.from_indices(range(8), 30, 0.3)
    f = fit_ols_minnorm(X, y, sub)
    assert f.train_error < 1e-10
    np.testing.assert_allclose(f.coef, np.linalg.pinv(X[:8]) @ y[:8], atol=1e-10)


def test_empty_subset_raises():
    with pytest.raises(DegenerateSubsetError):
        fit_ols_minnorm(np.ones((3, 1)), np.ones(3), TrainingSubset(np.zeros(3), 0.5))


def _orthonormal_instance(rng, m, d, p):
    n = int(round(m / p))
    n_fit = p * n
    Q, _ = np.linalg.qr(rng.normal(size=(m, d)))
    X = np.zeros((n, d))
    X[:m] = math.sqrt(n_fit) * Q
    X[m:] = rng.normal(size=(n - m, d))
    y = rng.normal(size=n) * 3
    sub = TrainingSubset.from_indices(range(m), n, p)
    return X, y, sub, n_fit


def test_lasso_orthonormal_matches_soft_threshold():
    rng = np.random.default_rng(8)
    for _ in range(20):
        X, y, sub, n_fit = _orthonormal_instance(rng, 40, 6, 0.4)
        lam = rng.uniform(0.01, 0.5)
        f = fit_lasso_constrained(X, y, sub, LassoSpec(lam, 1e9), tol=1e-10)
        ref = soft_threshold(X[:40].T @ y[:40] / n_fit, lam)
        np.testing.assert_allclose(f.coef, ref, atol=1e-8)


def test_lasso_constraint_always_feasible_and_kkt_when_inactive():
    rng = np.random.default_rng(4)
    for _ in range(15):
        X = rng.normal(size=(50, 6))
        y = X @ rng.normal(size=6) * 2 + rng.normal(size=50)
        sub = _subset(rng, 50)
        y_inf = rng.uniform(0.3, 1.5) * np.abs(y).max()
        f = fit_lasso_constrained(X, y, sub, LassoSpec(0.05, y_inf))
        assert np.max(np.abs(X @ f.coef)) <= y_inf
        if np.max(np.abs(X @ f.coef)) < 0.999 * y_inf:
            assert lasso_kkt_residual(f.coef, X[sub.mask], y[sub.mask], sub.expected_size, 0.05) < 1e-5


def test_lasso_against_conic_solver():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(21)
    for _ in range(6):
        n, d = 50, 6
        X = rng.normal(size=(n, d))
        y = X @ rng.normal(size=d) * 2 + rng.normal(size=n)
        sub = _subset(rng, n)
        lam, y_inf = 0.05, 0.6 * np.abs(y).max()
        f = fit_lasso_constrained(X, y, sub, LassoSpec(lam, y_inf))
        b = cp.Variable(d)
        m = sub.mask
        obj = cp.sum_squares(X[m] @ b - y[m]) / (2 * sub.expected_size) + lam * cp.norm1(b)
        prob = cp.Problem(cp.Minimize(obj), [cp.abs(X @ b) <= y_inf])
        prob.solve(solver=cp.CLARABEL)
        assert f.objective <= prob.value + 1e-5


def test_lasso_history_and_objective():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 4))
    y = X @ np.array([3.0, -2, 0, 0]) + rng.normal(size=30)
    sub = _subset(rng, 30)
    f = fit_lasso_constrained(X, y, sub, LassoSpec(0.1, 0.5 * np.abs(y).max()))
    assert f.history and all(b <= a + 1e-12 for a, b in zip(f.history, f.history[1:]))
    assert f.objective == pytest.approx(
        lasso_objective(f.coef, X[sub.mask], y[sub.mask], sub.expected_size, 0.1)
    )


def test_lasso_spec_validation():
    with pytest.raises(ValueError):
        LassoSpec(-1.0, 1.0)
    with pytest.raises(ValueError):
        LassoSpec(0.1, 0.0)
    with pytest.raises(ValueError):
        LassoSpec(0.1, 1.0, x_inf=0.5).check_design(np.ones((2, 2)))


def test_default_lambda_positive():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 5))
    y = rng.normal(size=60)
    sub = _subset(rng, 60)
    assert default_lambda(X, y, sub, 3.0) > 0


def test_safe_ceil_and_bins():
    assert safe_ceil(3.0000000000001) == 3
    assert safe_ceil(3.01) == 4
    assert safe_ceil(800**0.6) == 56
    assert regressogram_bins(1000, 0.5) == 32  # 1000 ** 0.5 = 31.62
    assert regressogram_shrinkage(1000, 1.0) == pytest.approx(1 - 1000 ** (-1 / 3))


def test_regressogram_matches_loop():
    rng = np.random.default_rng(6)
    n, alpha = 200, 0.5
    x = rng.random(n)
    y = rng.normal(size=n)
    sub = _subset(rng, n, 0.3)
    f = fit_regressogram(x, y, sub, alpha)
    B = math.ceil(n ** (1 / (1 + 2 * alpha)))
    shrink = 1 - n ** (-alpha / (2 * alpha + 1))
    glob = y[sub.mask].mean()
    for i in range(n):
        b = min(int(x[i] * B), B - 1)
        members = [j for j in range(n) if sub.mask[j] and min(int(x[j] * B), B - 1) == b]
        ref = shrink * (np.mean(y[members]) if members else glob)
        assert f.predictions[i] == pytest.approx(ref, abs=1e-12)
    with pytest.raises(ValueError):
        fit_regressogram(x, y, sub, 1.5)


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_interpolating_wrapper_reproduces_training_outcomes(seed):
    rng = np.random.default_rng(seed)
    n = 50
    x = rng.random(n)
    y = rng.normal(size=n)
    sub = _subset(rng, n)
    f = fit_backend("regressogram_interp", x[:, None], y, sub, alpha=0.8)
    np.testing.assert_array_equal(f.predictions[sub.mask], y[sub.mask])
    assert f.train_error == 0 and f.backend_tag == "regressogram_interp"
    base = fit_regressogram(x, y, sub, 0.8)
    np.testing.assert_array_equal(f.predictions[~sub.mask], base.predictions[~sub.mask])


def test_dispatch_and_fixed():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 2))
    y = rng.normal(size=20)
    sub = _subset(rng, 20)
    assert fit_backend("zero", X, y, sub).predictions.sum() == 0
    assert fit_backend("ols", X, y, sub).backend_tag == "ols"
    assert fit_backend("lasso", X, y, sub).backend_tag == "lasso"
    with pytest.raises(ValueError):
        fit_backend("regressogram", X, y, sub)
    with pytest.raises(ValueError):
        fit_backend("forest", X, y, sub)
    assert FittedFunction.fixed([1, 2]).train_mask is None
    assert fit_zero(3).backend_tag == "zero"
    with pytest.raises(ValueError):
        FittedFunction(np.array([np.nan]), 0.0, "x")
    with pytest.raises(ValueError):
        interpolate_wrap(fit_zero(3), np.ones(4), sub)
