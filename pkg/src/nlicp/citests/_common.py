"""Shared configuration, outcome type and input handling for the CI tests."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from ..regress import ForestParams


@dataclass(frozen=True)
class CITestConfig:
    """Settings for one conditional independence test.

    ``forest.seed`` is ignored; forests draw their seeds from ``seed``.
    """

    method: str = "quantile"
    alpha: float = 0.05
    seed: int = 0
    B: int = 250
    quantiles: tuple[float, ...] = (0.1, 0.5, 0.9)
    train_fraction: float = 2 / 3
    stratify: bool = True
    kci_eps: float | None = None
    num_features: int | None = None
    quantile_min_leaf: int = 10
    forest: ForestParams = field(default_factory=ForestParams)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.B < 50:
            raise ValueError("B must be at least 50")
        if not self.quantiles or any(not 0 < b < 1 for b in self.quantiles):
            raise ValueError("quantiles must lie in (0, 1)")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")

    def with_(self, **kw) -> "CITestConfig":
        return replace(self, **kw)


@dataclass
class CITestOutcome:
    p_value: float
    alpha: float
    method: str
    correction: int = 1
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.p_value = float(min(1.0, max(0.0, self.p_value)))

    @property
    def reject(self) -> bool:
        return self.p_value <= self.alpha


@dataclass
class Prepared:
    """Inputs in canonical row order.

    Rows are sorted by ``(y, Xs)`` so results do not depend on how rows
    were ordered on input; categorical environments are recoded to
    ``0..k-1`` in order of first appearance after sorting, so label names
    do not matter either.
    """

    y: np.ndarray
    env: np.ndarray  # (n, d_e) float matrix
    Xs: np.ndarray  # (n, |S|)
    categorical: bool
    codes: np.ndarray | None  # (n,) ints when categorical and d_e == 1

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_env(self) -> int:
        return 0 if self.codes is None else int(self.codes.max()) + 1


def _matrix(a, n: int | None, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be 1- or 2-dimensional")
    if n is not None and a.shape[0] != n:
        raise ValueError(f"{name} has {a.shape[0]} rows, expected {n}")
    return a


def is_categorical(env) -> bool:
    """Integer-valued or non-numeric labels are categorical."""
    env = np.asarray(env)
    if env.dtype.kind in "biuUSOb":
        return True
    if env.dtype.kind == "f":
        return bool(np.all(env == np.round(env)))
    return False


def first_appearance_codes(labels: np.ndarray) -> np.ndarray:
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty_like(first)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse.ravel()]


def prepare(y, env, Xs, *, categorical: bool | None = None) -> Prepared:
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    Xs = _matrix(np.zeros((n, 0)) if Xs is None else Xs, n, "Xs").astype(float)
    env_raw = _matrix(env, n, "env")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(Xs))):
        raise ValueError("inputs contain non-finite values")
    if categorical is None:
        categorical = is_categorical(env_raw)

    # lexsort sorts by the last key first, so y is the primary key
    order = np.lexsort(tuple(Xs[:, j] for j in reversed(range(Xs.shape[1]))) + (y,))
    y, Xs, env_raw = y[order], Xs[order], env_raw[order]

    codes = None
    if categorical:
        if env_raw.shape[1] == 1:
            codes = first_appearance_codes(env_raw[:, 0])
            env_num = codes[:, None].astype(float)
        else:
            env_num = np.column_stack(
                [first_appearance_codes(env_raw[:, j]) for j in range(env_raw.shape[1])]
            ).astype(float)
    else:
        env_num = env_raw.astype(float)
        if not np.all(np.isfinite(env_num)):
            raise ValueError("env contains non-finite values")
    return Prepared(y=y, env=env_num, Xs=Xs, categorical=categorical, codes=codes)


def sub_rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *tags]))


def sub_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *tags]).generate_state(1)[0] & 0x7FFFFFFF)


def forest_params(config: CITestConfig, *tags: int) -> ForestParams:
    return replace(config.forest, seed=sub_seed(config.seed, *tags))


def one_hot(codes: np.ndarray, k: int) -> np.ndarray:
    """Dummy columns for levels ``1..k-1`` (level 0 is the reference)."""
    return (codes[:, None] == np.arange(1, k)[None, :]).astype(float)


def train_test_split(prep: Prepared, config: CITestConfig, rng: np.random.Generator):
    """Index arrays for a train/test split, stratified by environment when possible."""
    n = prep.n
    n_test_total = n - int(round(config.train_fraction * n))
    if n_test_total < 30:
        raise ValueError(f"need at least 30 held-out rows, got {n_test_total}")
    if config.stratify and prep.codes is not None:
        train, test = [], []
        for e in range(prep.n_env):
            idx = np.flatnonzero(prep.codes == e)
            idx = idx[rng.permutation(idx.size)]
            k = int(round(config.train_fraction * idx.size))
            k = min(max(k, 1), idx.size)
            train.append(idx[:k])
            test.append(idx[k:])
        return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
    perm = rng.permutation(n)
    k = n - n_test_total
    train, test = np.sort(perm[:k]), np.sort(perm[k:])
    if prep.codes is not None and np.unique(prep.codes[train]).size < prep.n_env:
        raise ValueError("an environment is absent from the training split")
    return train, test
