"""Held-out prediction tests: predicting the environment, or the target with the environment."""

from __future__ import annotations

import numpy as np

from ..regress import fit_additive_model, fit_random_forest
from ..stattests import f_test_accuracy, two_proportion_test, wilcoxon_rank_sum
from ._common import CITestConfig, CITestOutcome, Prepared, forest_params, one_hot, sub_rng, train_test_split

TARGET_VARIANTS = {
    "target_gam_f": ("additive_model", "f_test"),
    "target_gam_wilcoxon": ("additive_model", "wilcoxon"),
    "target_rf_f": ("random_forest", "f_test"),
    "target_rf_wilcoxon": ("random_forest", "wilcoxon"),
}


def _names(prefix: str, k: int) -> list[str]:
    return [f"{prefix}{j:03d}" for j in range(k)]


def environment_prediction_test(prep: Prepared, config: CITestConfig) -> CITestOutcome:
    if prep.codes is None:
        raise ValueError("environment prediction needs a single categorical environment")
    rng = sub_rng(config.seed, 10)
    train, test = train_test_split(prep, config, rng)
    y_perm = prep.y[rng.permutation(prep.n)]
    # the response and its permuted copy share a name, hence a column slot
    names = ["resp"] + _names("x", prep.Xs.shape[1])
    full = np.column_stack([prep.y, prep.Xs])
    null = np.column_stack([y_perm, prep.Xs])
    labels = prep.codes

    hits = []
    for j, F in enumerate((full, null)):
        rf = fit_random_forest(
            F[train], labels[train], forest_params(config, 11, j), classification=True, feature_names=names
        )
        hits.append(int((rf.predict(F[test]) == labels[test]).sum()))
    m = test.size
    res = two_proportion_test(hits[0], m, hits[1], m, "greater")
    return CITestOutcome(
        res.p_value,
        config.alpha,
        "env_rf",
        diagnostics={"acc_full": hits[0] / m, "acc_restricted": hits[1] / m, "n_test": m},
    )


def _env_features(prep: Prepared) -> np.ndarray:
    if prep.codes is not None:
        return one_hot(prep.codes, prep.n_env)
    return prep.env


def _fit_predict_gam(X_train, y_train, X_test) -> np.ndarray:
    if X_train.shape[1] == 0:
        return np.full(X_test.shape[0], y_train.mean())
    return fit_additive_model(X_train, y_train).predict(X_test)


def target_prediction_test(prep: Prepared, config: CITestConfig, variant: str) -> CITestOutcome:
    regressor, comparison = TARGET_VARIANTS[variant]
    rng = sub_rng(config.seed, 20)
    train, test = train_test_split(prep, config, rng)
    y_tr, y_te = prep.y[train], prep.y[test]

    if regressor == "random_forest":
        E = prep.env
        E_perm = E[rng.permutation(prep.n)]
        names = _names("e", E.shape[1]) + _names("x", prep.Xs.shape[1])
        preds = []
        for j, Ecols in enumerate((E, E_perm)):
            F = np.column_stack([Ecols, prep.Xs])
            rf = fit_random_forest(F[train], y_tr, forest_params(config, 21, j), feature_names=names)
            preds.append(rf.predict(F[test]))
        pred_full, pred_restr = preds
    else:
        F = np.column_stack([prep.Xs, _env_features(prep)])
        pred_full = _fit_predict_gam(F[train], y_tr, F[test])
        pred_restr = _fit_predict_gam(prep.Xs[train], y_tr, prep.Xs[test])

    r_full = y_te - pred_full
    r_restr = y_te - pred_restr
    if comparison == "f_test":
        res = f_test_accuracy(r_restr**2, r_full**2)
    else:
        res = wilcoxon_rank_sum(np.abs(r_restr), np.abs(r_full), "greater")
    return CITestOutcome(
        res.p_value,
        config.alpha,
        variant,
        diagnostics={
            "mse_full": float(np.mean(r_full**2)),
            "mse_restricted": float(np.mean(r_restr**2)),
            "statistic": res.statistic,
            "n_test": int(test.size),
        },
    )
