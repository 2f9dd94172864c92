"""One-vs-rest tests on pooled residuals and on conditional quantile exceedances."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..regress import fit_additive_model, fit_quantile_forest, fit_random_forest
from ..stattests import fisher_exact_2x2, ks_two_sample, levene, wilcoxon_rank_sum
from ._common import CITestConfig, CITestOutcome, Prepared, forest_params

RESIDUAL_VARIANTS = {
    "resid_gam_ks": ("additive_model", "ks"),
    "resid_gam_levene": ("additive_model", "levene_wilcoxon"),
    "resid_rf_ks": ("random_forest", "ks"),
    "resid_rf_levene": ("random_forest", "levene_wilcoxon"),
}


def _need_categorical(prep: Prepared, name: str) -> None:
    if prep.codes is None:
        raise ValueError(f"{name} needs a single categorical environment")


def _pooled_residuals(prep: Prepared, regressor: str, config: CITestConfig) -> np.ndarray:
    if prep.Xs.shape[1] == 0:
        return prep.y - prep.y.mean()
    if regressor == "random_forest":
        names = [f"x{j:03d}" for j in range(prep.Xs.shape[1])]
        return fit_random_forest(prep.Xs, prep.y, forest_params(config, 30), feature_names=names).fitted_residuals()
    return fit_additive_model(prep.Xs, prep.y).residuals()


def residual_distribution_test(prep: Prepared, config: CITestConfig, variant: str) -> CITestOutcome:
    _need_categorical(prep, "the residual distribution test")
    regressor, comparison = RESIDUAL_VARIANTS[variant]
    sizes = np.bincount(prep.codes)
    if sizes.min() < 2:
        raise ValueError("every environment needs at least 2 residuals")
    r = _pooled_residuals(prep, regressor, config)

    pvals = []
    for e in range(prep.n_env):
        inside = prep.codes == e
        if comparison == "ks":
            pvals.append(ks_two_sample(r[inside], r[~inside]).p_value)
        else:
            pvals.append(wilcoxon_rank_sum(r[inside], r[~inside]).p_value)
        if prep.n_env == 2:
            break
    t = len(pvals)
    p_loop = min(1.0, t * min(pvals))
    diag = {"subtests": pvals, "t": t}
    if comparison == "ks":
        return CITestOutcome(p_loop, config.alpha, variant, correction=t, diagnostics=diag)

    p_lev = levene([r[prep.codes == e] for e in range(prep.n_env)]).p_value
    diag.update(p_wilcoxon=p_loop, p_levene=p_lev)
    return CITestOutcome(2 * min(p_loop, p_lev), config.alpha, variant, correction=t, diagnostics=diag)


def _exceedance_quantiles(prep: Prepared, config: CITestConfig) -> np.ndarray:
    """``(n, |B|)`` out-of-bag estimates of the upper ``1 - beta`` quantiles."""
    probs = [1 - b for b in config.quantiles]
    if prep.Xs.shape[1] == 0:
        q = np.quantile(prep.y, probs, method="inverted_cdf")
        return np.broadcast_to(q, (prep.n, len(probs)))
    names = [f"x{j:03d}" for j in range(prep.Xs.shape[1])]
    params = replace(forest_params(config, 40), min_leaf=config.quantile_min_leaf)
    qrf = fit_quantile_forest(prep.Xs, prep.y, params, feature_names=names)
    return qrf.predict_quantiles(prep.Xs, probs, oob=True)


def conditional_quantile_test(prep: Prepared, config: CITestConfig) -> CITestOutcome:
    _need_categorical(prep, "the conditional quantile test")
    Q = _exceedance_quantiles(prep, config)
    pvals, flags = [], []
    for j, beta in enumerate(config.quantiles):
        exceed = prep.y > Q[:, j]
        for e in range(prep.n_env):
            inside = prep.codes == e
            if exceed.all() or not exceed.any():
                pvals.append(1.0)
                flags.append(f"degenerate_exceedance:beta={beta}")
            else:
                table = [
                    [int((exceed & inside).sum()), int((exceed & ~inside).sum())],
                    [int((~exceed & inside).sum()), int((~exceed & ~inside).sum())],
                ]
                pvals.append(fisher_exact_2x2(table).p_value)
            if prep.n_env == 2:
                break
    t = len(pvals)
    return CITestOutcome(
        t * min(pvals),
        config.alpha,
        "quantile",
        correction=t,
        diagnostics={"subtests": pvals, "t": t, "flags": sorted(set(flags))},
    )
