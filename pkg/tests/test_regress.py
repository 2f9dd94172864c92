import numpy as np
import pytest
from scipy.interpolate import make_smoothing_spline

from nlicp.regress import (
    ConstantModel,
    ForestParams,
    fit_additive_model,
    fit_quantile_forest,
    fit_random_forest,
    fit_regressor,
    make_feature_map,
    ols_fit,
)
from nlicp.regress.features import rbf_kernel

# ---------------------------------------------------------------- random forest


def test_forest_constant_response():
    X = np.random.default_rng(0).normal(size=(50, 3))
    rf = fit_random_forest(X, np.full(50, 2.5), ForestParams(num_trees=20))
    assert np.allclose(rf.predict(np.random.default_rng(1).normal(size=(10, 3))), 2.5)


def test_forest_fits_identity_on_dense_grid():
    x = np.linspace(0, 1, 500)[:, None]
    y = x[:, 0].copy()
    rf = fit_random_forest(x, y, ForestParams(num_trees=50, seed=3))
    mse = np.mean((rf.predict(x) - y) ** 2)
    # the OLS oracle fits this exactly, so anything below 5% of var(y) is a good nonparametric fit
    assert mse < 0.05 * y.var()


@pytest.mark.slow
def test_forest_pure_noise_oob_r2():
    r2 = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X, y = rng.normal(size=(300, 3)), rng.normal(size=300)
        rf = fit_random_forest(X, y, ForestParams(num_trees=100, seed=seed))
        r2.append(1 - rf.oob_error() / y.var())
    assert np.mean(r2) <= 0.05


def test_forest_deterministic_and_name_invariant():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(200, 3))
    y = X[:, 0] ** 2 + X[:, 1] + 0.1 * rng.normal(size=200)
    p = ForestParams(num_trees=30, seed=9)
    a = fit_random_forest(X, y, p, feature_names=["a", "b", "c"])
    b = fit_random_forest(X, y, p, feature_names=["a", "b", "c"])
    perm = [2, 0, 1]
    c = fit_random_forest(X[:, perm], y, p, feature_names=["c", "a", "b"])
    Q = rng.normal(size=(20, 3))
    assert np.array_equal(a.predict(Q), b.predict(Q))
    assert np.array_equal(a.predict(Q), c.predict(Q[:, perm]))


def test_forest_classification_and_oob():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(300, 2))
    labels = np.where(X[:, 0] > 0, "right", "left")
    rf = fit_random_forest(X, labels, ForestParams(num_trees=50), classification=True)
    assert set(rf.predict(X)) <= {"left", "right"}
    assert rf.oob_error() < 0.1
    proba = rf.predict_proba(X[:5])
    assert np.allclose(proba.sum(axis=1), 1)


def test_forest_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_random_forest(np.zeros((1, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        fit_random_forest(np.zeros((5, 2)), np.zeros(5), feature_names=["a", "a"])


def test_mtry_defaults():
    p = ForestParams()
    assert p.resolve_mtry(9, classification=False) == 3
    assert p.resolve_mtry(9, classification=True) == 3
    assert p.resolve_mtry(10, classification=True) == 4
    assert ForestParams(mtry=50).resolve_mtry(4, False) == 4


# ---------------------------------------------------------------- quantile forest


def test_quantile_forest_constant_response():
    X = np.random.default_rng(0).normal(size=(60, 2))
    q = fit_quantile_forest(X, np.full(60, -1.0), ForestParams(num_trees=10))
    assert np.allclose(q.predict_quantiles(X[:5], [0.1, 0.5, 0.9]), -1.0)


@pytest.mark.slow
def test_quantile_forest_uniform_upper_quantile():
    est = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X, y = rng.normal(size=(2000, 2)), rng.uniform(size=2000)
        q = fit_quantile_forest(X, y, ForestParams(num_trees=50, seed=seed))
        est.append(q.query(np.median(X, axis=0), 0.9))
    assert 0.85 <= np.mean(est) <= 0.95


def test_quantile_forest_monotone_in_level():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(400, 2))
    y = X[:, 0] + rng.standard_t(3, 400)
    q = fit_quantile_forest(X, y, ForestParams(num_trees=40))
    T = rng.normal(size=(100, 2))
    Q = q.predict_quantiles(T, [0.1, 0.5, 0.9])
    assert np.all(Q[:, 0] <= Q[:, 1]) and np.all(Q[:, 1] <= Q[:, 2])
    Qo = q.predict_quantiles(X, [0.1, 0.5, 0.9], oob=True)
    assert np.all(np.diff(Qo, axis=1) >= 0)


def test_quantile_forest_oob_weights():
    rng = np.random.default_rng(2)
    X, y = rng.normal(size=(150, 2)), rng.normal(size=150)
    q = fit_quantile_forest(X, y, ForestParams(num_trees=30, min_leaf=10))
    W = q.weights(X, oob=True)
    assert np.allclose(W.sum(axis=1), 1)
    assert np.all(np.diag(W) == 0)
    with pytest.raises(ValueError):
        q.weights(X[:10], oob=True)


def test_quantile_forest_level_checks():
    X = np.random.default_rng(0).normal(size=(30, 1))
    q = fit_quantile_forest(X, X[:, 0], ForestParams(num_trees=5))
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            q.query(X[0], bad)


# ---------------------------------------------------------------- additive model


def test_additive_linear_component_matches_ols():
    rng = np.random.default_rng(3)
    x = rng.uniform(-2, 2, 500)
    y = 2 * x + 0.1 * rng.normal(size=500)
    gam = fit_additive_model(x[:, None], y)
    H = np.column_stack([np.ones(500), x])
    beta = ols_fit(H, y).coefficients
    lo, hi = np.quantile(x, [0.05, 0.95])
    grid = np.linspace(lo, hi, 50)
    assert np.max(np.abs(gam.predict(grid[:, None]) - (beta[0] + beta[1] * grid))) < 0.1


def test_additive_two_terms_close_to_known_component_oracle():
    rng = np.random.default_rng(4)
    X = rng.uniform(-1, 1, size=(2000, 2))
    y = np.sin(2 * np.pi * X[:, 0]) + X[:, 1] ** 2 + 0.3 * rng.normal(size=2000)
    gam = fit_additive_model(X, y)
    assert gam.converged
    # oracle: one smoothing spline per true component, fitted to y minus the other true component
    f1 = make_smoothing_spline(*_sorted(X[:, 0], y - X[:, 1] ** 2))
    f2 = make_smoothing_spline(*_sorted(X[:, 1], y - np.sin(2 * np.pi * X[:, 0])))
    oracle = f1(X[:, 0]) + f2(X[:, 1])
    oracle += np.mean(y - oracle)
    mse_oracle = np.mean((y - oracle) ** 2)
    assert np.mean(gam.residuals() ** 2) <= 2 * mse_oracle


def _sorted(x, y):
    o = np.argsort(x)
    return x[o], y[o]


def test_additive_single_covariate_one_sweep():
    rng = np.random.default_rng(5)
    x = rng.normal(size=300)
    gam = fit_additive_model(x[:, None], np.cos(x) + 0.1 * rng.normal(size=300))
    assert gam.converged and gam.n_sweeps == 1


def test_additive_linear_columns_for_dummies():
    rng = np.random.default_rng(6)
    x = rng.normal(size=400)
    d = rng.integers(0, 2, 400).astype(float)
    y = x**2 + 1.5 * d + 0.1 * rng.normal(size=400)
    gam = fit_additive_model(np.column_stack([x, d]), y)
    assert 1 in gam.linear
    assert gam.linear[1][0] == pytest.approx(1.5, abs=0.1)


def test_additive_size_check():
    with pytest.raises(ValueError):
        fit_additive_model(np.zeros((20, 2)), np.zeros(20))


def test_residuals_are_y_minus_fit():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(200, 2))
    y = X[:, 0] - X[:, 1] ** 2 + rng.normal(size=200)
    for kind in ("additive_model", "random_forest", "ols_basis"):
        m = fit_regressor(kind, X, y, forest=ForestParams(num_trees=20))
        if kind == "random_forest":
            assert np.allclose(m.residuals(), y - m.predict(X))
        else:
            assert np.allclose(m.residuals(), y - m.predict(X), atol=1e-8)


def test_fit_regressor_empty_design():
    m = fit_regressor("random_forest", np.zeros((10, 0)), np.arange(10.0))
    assert isinstance(m, ConstantModel)
    assert np.allclose(m.residuals(), np.arange(10.0) - 4.5)
    with pytest.raises(ValueError):
        fit_regressor("boosting", np.zeros((10, 1)), np.zeros(10))


# ---------------------------------------------------------------- feature maps and OLS


def test_fourier_features_approximate_rbf_kernel():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(60, 2))
    fmap = make_feature_map(X, "fourier", 2000, bandwidth=1.3, seed=1)
    Phi = fmap.apply(X)
    K = rbf_kernel(X, X, 1.3)
    assert np.mean(np.abs(Phi @ Phi.T - K)) < 0.05


def test_poly_basis_degree_two_in_one_dimension():
    x = np.array([1.0, 2.0, 3.0])
    H = make_feature_map(x, "poly_basis", degree=2).apply(x)
    assert np.allclose(H, np.column_stack([x, x**2]))


@pytest.mark.parametrize("kind", ["nystrom_rbf", "nystrom_poly"])
def test_nystrom_with_all_landmarks_is_exact(kind):
    rng = np.random.default_rng(9)
    X = rng.normal(size=(30, 2))
    fmap = make_feature_map(X, kind, 30, bandwidth=1.0, degree=2, seed=0)
    Phi = fmap.apply(X)
    K = rbf_kernel(X, X, 1.0) if kind == "nystrom_rbf" else (X @ X.T + 1) ** 2
    assert np.allclose(Phi @ Phi.T, K, atol=1e-8 * max(1.0, np.abs(K).max()))


def test_feature_map_state_is_stored():
    X = np.random.default_rng(10).normal(size=(40, 3))
    for kind in ("fourier", "nystrom_rbf", "nystrom_poly", "poly_basis"):
        fmap = make_feature_map(X, kind, seed=4, standardize=True)
        assert np.array_equal(fmap.apply(X), fmap.apply(X))


def test_feature_map_errors():
    X = np.zeros((5, 1))
    with pytest.raises(ValueError):
        make_feature_map(X, "nystrom_rbf", 6)
    with pytest.raises(ValueError):
        make_feature_map(X, "wavelet")


def test_ols_intercept_only():
    y = np.array([1.0, 4.0, 7.0])
    assert np.allclose(ols_fit(np.ones((3, 1)), y).residuals, y - y.mean())


def test_ols_exact_fit():
    rng = np.random.default_rng(11)
    H = rng.normal(size=(20, 4))
    assert np.max(np.abs(ols_fit(H, H @ np.array([1.0, -2.0, 0.5, 3.0])).residuals)) < 1e-10


def test_ols_residuals_orthogonal_to_design():
    rng = np.random.default_rng(12)
    H, y = rng.normal(size=(50, 5)), rng.normal(size=50)
    assert np.max(np.abs(H.T @ ols_fit(H, y).residuals)) < 1e-8


def test_ols_rank_deficient_min_norm():
    rng = np.random.default_rng(13)
    h = rng.normal(size=30)
    H = np.column_stack([h, h])
    fit = ols_fit(H, 2 * h)
    assert fit.rank == 1
    assert np.allclose(fit.coefficients, [1.0, 1.0])
