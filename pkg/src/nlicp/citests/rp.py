"""Residual prediction test on a basis expansion of the conditioning set."""

from __future__ import annotations

import numpy as np

from ..regress import fit_random_forest, make_feature_map, ols_fit
from ._common import CITestConfig, CITestOutcome, Prepared, forest_params, sub_seed

VARIANTS = {
    "rp_fourier": "fourier",
    "rp_nystrom_rbf": "nystrom_rbf",
    "rp_nystrom_poly": "nystrom_poly",
    "rp_poly": "poly_basis",
}


def _design(prep: Prepared, kind: str, config: CITestConfig) -> np.ndarray:
    ones = np.ones((prep.n, 1))
    if prep.Xs.shape[1] == 0:
        return ones
    fmap = make_feature_map(
        prep.Xs, kind, config.num_features, seed=sub_seed(config.seed, 1), standardize=True
    )
    return np.hstack([ones, fmap.apply(prep.Xs)])


def _stats(target: np.ndarray, U: np.ndarray, features: np.ndarray, config: CITestConfig, tag: int):
    """OOB accuracy gains for predicting the scaled residuals and their absolute values."""
    r = target - U @ (U.T @ target)
    sd = r.std()
    r = r / sd if sd > 0 else r
    out = []
    for j, t in enumerate((r, np.abs(r))):
        rf = fit_random_forest(features, t, forest_params(config, 2, tag, j))
        out.append(float(t.var() - rf.oob_error()))
    return out


def residual_prediction_test(prep: Prepared, config: CITestConfig, variant: str) -> CITestOutcome:
    kind = VARIANTS[variant]
    H = _design(prep, kind, config)
    U = np.linalg.svd(H, full_matrices=False)[0]
    rank = ols_fit(H, prep.y).rank
    U = U[:, :rank]
    features = np.hstack([prep.env, prep.Xs])

    observed = _stats(prep.y, U, features, config, 0)
    rng = np.random.default_rng(sub_seed(config.seed, 3))
    sims = np.array([_stats(rng.standard_normal(prep.n), U, features, config, b + 1) for b in range(config.B)])
    pvals = [(1 + int((sims[:, j] >= observed[j]).sum())) / (config.B + 1) for j in range(2)]
    return CITestOutcome(
        2 * min(pvals),
        config.alpha,
        variant,
        correction=2,
        diagnostics={"p_mean": pvals[0], "p_abs": pvals[1], "stat_mean": observed[0], "stat_abs": observed[1]},
    )
