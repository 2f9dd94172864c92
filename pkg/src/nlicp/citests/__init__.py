"""Conditional independence tests of ``Y _||_ E | X_S`` and their dispatcher."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ._common import CITestConfig, CITestOutcome, Prepared, is_categorical, prepare
from .distribution import RESIDUAL_VARIANTS, conditional_quantile_test, residual_distribution_test
from .kci import kci_test
from .prediction import TARGET_VARIANTS, environment_prediction_test, target_prediction_test
from .rp import VARIANTS as RP_VARIANTS
from .rp import residual_prediction_test

__all__ = [
    "ALIASES",
    "CITestConfig",
    "CITestOutcome",
    "METHODS",
    "cond_indep_test",
    "resolve_method",
]


def _bind(fn, variant):
    return lambda prep, cfg: fn(prep, cfg, variant)


# name -> (runner, supports multi-column env, needs categorical env)
METHODS: dict[str, tuple[Callable[[Prepared, CITestConfig], CITestOutcome], bool, bool]] = {
    "kci": (kci_test, True, False),
    **{v: (_bind(residual_prediction_test, v), True, False) for v in RP_VARIANTS},
    "env_rf": (environment_prediction_test, False, True),
    **{v: (_bind(target_prediction_test, v), True, False) for v in TARGET_VARIANTS},
    **{v: (_bind(residual_distribution_test, v), False, True) for v in RESIDUAL_VARIANTS},
    "quantile": (conditional_quantile_test, False, True),
}

ALIASES = {
    "A": "kci",
    "B1": "rp_fourier",
    "B2": "rp_nystrom_rbf",
    "B3": "rp_nystrom_poly",
    "B4": "rp_poly",
    "C": "env_rf",
    "D1": "target_gam_f",
    "D2": "target_gam_wilcoxon",
    "D3": "target_rf_f",
    "D4": "target_rf_wilcoxon",
    "E1": "resid_gam_ks",
    "E2": "resid_gam_levene",
    "E3": "resid_rf_ks",
    "E4": "resid_rf_levene",
    "F": "quantile",
}


def resolve_method(name: str) -> str:
    if name in METHODS:
        return name
    if name.upper() in ALIASES:
        return ALIASES[name.upper()]
    raise ValueError(f"unknown CI test method {name!r}")


def _columns(a) -> np.ndarray:
    a = np.asarray(a)
    return a[:, None] if a.ndim == 1 else a


def cond_indep_test(y, env, Xs, config: CITestConfig | None = None) -> CITestOutcome:
    """Test ``y _||_ env | Xs`` with ``config.method``.

    Multi-column ``y``, or multi-column ``env`` for methods that handle a
    single environment variable only, are tested column by column and the
    smallest p-value is multiplied by the number of columns.
    """
    config = config or CITestConfig()
    method = resolve_method(config.method)
    runner, multi_env, needs_cat = METHODS[method]
    Y = _columns(y)
    E = _columns(env)

    def single(ycol, ecols) -> CITestOutcome:
        categorical = is_categorical(ecols)
        if needs_cat and not categorical:
            raise ValueError(f"method {method!r} needs a categorical environment")
        prep = prepare(ycol, ecols, Xs, categorical=categorical)
        if prep.codes is not None and prep.n_env < 2:
            raise ValueError("need >= 2 environments")
        return runner(prep, config)

    if Y.shape[1] == 1 and (E.shape[1] == 1 or multi_env):
        out = single(Y[:, 0], E if E.shape[1] > 1 else E[:, 0])
        out.method = method
        return out

    env_blocks = [E] if multi_env else [E[:, [k]] for k in range(E.shape[1])]
    parts = [single(Y[:, i], blk if blk.shape[1] > 1 else blk[:, 0]) for i in range(Y.shape[1]) for blk in env_blocks]
    d = len(parts)
    p = min(1.0, d * min(o.p_value for o in parts))
    return CITestOutcome(
        p,
        config.alpha,
        method,
        correction=d,
        diagnostics={"per_column": [o.p_value for o in parts]},
    )
