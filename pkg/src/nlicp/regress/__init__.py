"""Nonparametric regression engines used by the invariance tests."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .additive import AdditiveModel, fit_additive_model
from .features import FeatureMap, OlsFit, make_feature_map, ols_fit
from .forest import ForestParams, RandomForest, fit_random_forest
from .quantile import QuantileForest, fit_quantile_forest

REGRESSORS = ("random_forest", "additive_model", "ols_basis")

__all__ = [
    "AdditiveModel",
    "ConstantModel",
    "FeatureMap",
    "ForestParams",
    "OlsBasisModel",
    "OlsFit",
    "QuantileForest",
    "RandomForest",
    "REGRESSORS",
    "fit_additive_model",
    "fit_quantile_forest",
    "fit_random_forest",
    "fit_regressor",
    "make_feature_map",
    "ols_fit",
]


@dataclass
class ConstantModel:
    """Intercept-only fit, used when there is nothing to condition on."""

    value: float
    _y_train: np.ndarray = field(repr=False)
    kind: str = "constant"

    def predict(self, X) -> np.ndarray:
        return np.full(np.asarray(X).shape[0], self.value)

    def residuals(self) -> np.ndarray:
        return self._y_train - self.value

    def fitted_residuals(self) -> np.ndarray:
        return self.residuals()


@dataclass
class OlsBasisModel:
    """OLS on ``[1, h_1(x), ..., h_M(x)]`` for a fixed basis expansion."""

    fmap: FeatureMap | None
    fit: OlsFit
    _X_train: np.ndarray = field(repr=False)
    _y_train: np.ndarray = field(repr=False)
    kind: str = "ols_basis"

    def design(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        ones = np.ones((X.shape[0], 1))
        if self.fmap is None:
            return np.hstack([ones, X])
        return np.hstack([ones, self.fmap.apply(X)])

    def predict(self, X) -> np.ndarray:
        return self.design(X) @ self.fit.coefficients

    def residuals(self) -> np.ndarray:
        return self.fit.residuals

    def fitted_residuals(self) -> np.ndarray:
        return self.fit.residuals


def fit_ols_basis(X, y, basis: str | None = None, *, seed: int = 0, **kw) -> OlsBasisModel:
    """OLS on the raw columns (``basis=None``) or on a drawn feature map."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    fmap = make_feature_map(X, basis, seed=seed, **kw) if basis else None
    model = OlsBasisModel(fmap=fmap, fit=None, _X_train=X, _y_train=np.asarray(y, float))
    model.fit = ols_fit(model.design(X), y)
    return model


def fit_regressor(kind: str, X, y, *, seed: int = 0, forest: ForestParams | None = None, **kw):
    """Fit one of the named regressors; an empty ``X`` gives an intercept-only model.

    Every returned model has ``predict`` and ``fitted_residuals``; the
    latter are out-of-bag for forests so that they are not shrunk by
    in-sample overfitting.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] == 0:
        return ConstantModel(float(y.mean()), y)
    if kind == "random_forest":
        params = forest or ForestParams(seed=seed)
        return fit_random_forest(X, y, params, **kw)
    if kind == "additive_model":
        return fit_additive_model(X, y, **kw)
    if kind == "ols_basis":
        return fit_ols_basis(X, y, seed=seed, **kw)
    raise ValueError(f"unknown regressor {kind!r}; expected one of {REGRESSORS}")
