"""Small hand-built data generators used for examples, checks and the CLI."""

from __future__ import annotations

import numpy as np

from .data import Dataset

# (shift on X1, shift on X3) per environment; environment 0 is observational
CHAIN_SHIFTS = ((0.0, 0.0), (1.5, 2.0), (-1.5, 0.0), (0.0, -2.0), (0.0, 3.0), (0.0, -3.0))


def chain_example(seed: int, n_per_env: int = 100) -> Dataset:
    """Chain ``X1 -> X2 -> X3`` over six environments with shift interventions.

    Two environments shift ``X1`` and four shift ``X3`` (one environment
    shifts both).  The response is ``X2``, whose only parent is ``X1``.
    """
    rng = np.random.default_rng(seed)
    k = len(CHAIN_SHIFTS)
    env = np.repeat(np.arange(k), n_per_env)
    a = np.array([s[0] for s in CHAIN_SHIFTS])[env]
    b = np.array([s[1] for s in CHAIN_SHIFTS])[env]
    eta = rng.standard_normal((env.size, 3))
    x1 = eta[:, 0] + a
    x2 = x1 + 0.3 * x1**2 + eta[:, 1]
    x3 = x2 + eta[:, 2] + b
    return Dataset(X=np.column_stack([x1, x3]), y=x2, env=env, columns=["X1", "X3"], target_name="X2")


def heteroscedastic_example(seed: int, n: int = 1000) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``E = 0.2 eta_E, X = eta_X, Y = X^2 + E * eta_Y``; returns ``(y, e, x)``.

    The conditional mean of ``Y`` given ``X`` does not involve ``E``; only
    the noise scale does.
    """
    rng = np.random.default_rng(seed)
    e = 0.2 * rng.standard_normal(n)
    x = rng.standard_normal(n)
    y = x**2 + e * rng.standard_normal(n)
    return y, e, x


def tertile_labels(e: np.ndarray) -> np.ndarray:
    """Bin a continuous variable into three equal-frequency categories."""
    cuts = np.quantile(e, [1 / 3, 2 / 3])
    return np.searchsorted(cuts, e, side="right")


def residual_blind_example(seed: int, n: int = 1000, x_sd: float = 0.5) -> Dataset:
    """Two linear regimes whose pooled residuals share one distribution.

    Regime 1: ``Y = 2X + N``; regime 2: ``Y = -X + 0.3N`` with the same
    laws for ``X`` and ``N``.  The regime sizes are chosen so that both
    regimes' residuals from the pooled least-squares line have equal
    variance, which for Gaussian inputs makes them identically distributed.
    """
    rng = np.random.default_rng(seed)
    p1 = matched_share(x_sd)
    n1 = int(round(p1 * n))
    env = np.repeat([1, 2], [n1, n - n1])
    x = x_sd * rng.standard_normal(n)
    noise = rng.standard_normal(n)
    y = np.where(env == 1, 2 * x + noise, -x + 0.3 * noise)
    return Dataset(X=x[:, None], y=y, env=env, columns=["X"], target_name="Y")


def matched_share(x_sd: float) -> float:
    """Share of regime 1 for which the pooled residual variances agree.

    With pooled slope ``3 p1 - 1`` the residual variances are
    ``9 p2^2 s + 1`` and ``9 p1^2 s + 0.09`` (``s = x_sd^2``); equating
    them gives ``p1 - p2 = 0.91 / (9 s)``.
    """
    diff = 0.91 / (9 * x_sd**2)
    if not diff < 1:
        raise ValueError("x_sd too small for matching residual variances")
    return (1 + diff) / 2
