"""Random forest regression and classification on bootstrap-grown CART trees."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _trees


@dataclass(frozen=True)
class ForestParams:
    num_trees: int = 100
    mtry: int | None = None
    min_leaf: int = 5
    seed: int = 0
    n_jobs: int = 1

    def resolve_mtry(self, d: int, classification: bool) -> int:
        if self.mtry is not None:
            return max(1, min(int(self.mtry), d))
        if classification:
            return max(1, math.ceil(math.sqrt(d)))
        return max(1, math.ceil(d / 3))


@dataclass
class _FlatForest:
    roots: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    dist: np.ndarray
    inbag: np.ndarray  # (n_train, num_trees) bootstrap counts


def _tree_seeds(seed: int, num_trees: int) -> np.ndarray:
    state = np.random.SeedSequence(seed).generate_state(num_trees, dtype=np.uint32)
    return (state & 0x7FFFFFFF).astype(np.int64)


def _grow(X: np.ndarray, y: np.ndarray, n_classes: int, params: ForestParams) -> _FlatForest:
    mtry = params.resolve_mtry(X.shape[1], n_classes > 0)
    seeds = _tree_seeds(params.seed, params.num_trees)

    def one(s):
        return _trees.build_tree(X, y, n_classes, mtry, params.min_leaf, int(s))

    if params.n_jobs > 1:
        with ThreadPoolExecutor(params.n_jobs) as pool:
            trees = list(pool.map(one, seeds))
    else:
        trees = [one(s) for s in seeds]

    sizes = np.array([len(t[0]) for t in trees])
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])

    def shift(a, off):
        return np.where(a >= 0, a + off, -1)

    return _FlatForest(
        roots=offsets.astype(np.int64),
        feature=np.concatenate([t[0] for t in trees]),
        threshold=np.concatenate([t[1] for t in trees]),
        left=np.concatenate([shift(t[2], o) for t, o in zip(trees, offsets)]),
        right=np.concatenate([shift(t[3], o) for t, o in zip(trees, offsets)]),
        value=np.concatenate([t[4] for t in trees]),
        dist=np.concatenate([t[5] for t in trees]),
        inbag=np.stack([t[6] for t in trees], axis=1),
    )


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.ascontiguousarray(X)


@dataclass
class RandomForest:
    """A fitted forest.

    Columns are reordered by feature name before fitting, so the fitted
    model (and its predictions) does not depend on the column order the
    caller used as long as names travel with their columns.
    """

    params: ForestParams
    feature_names: tuple[str, ...]
    classes: np.ndarray | None
    _forest: _FlatForest = field(repr=False)
    _order: np.ndarray = field(repr=False)
    _X_train: np.ndarray = field(repr=False)
    _y_train: np.ndarray = field(repr=False)

    @property
    def is_classifier(self) -> bool:
        return self.classes is not None

    @property
    def num_trees(self) -> int:
        return len(self._forest.roots)

    def _prepare(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != len(self._order):
            raise ValueError(f"expected {len(self._order)} columns, got {X.shape[1]}")
        return np.ascontiguousarray(X[:, self._order])

    def apply(self, X) -> np.ndarray:
        f = self._forest
        return _trees.apply_forest(self._prepare(X), f.roots, f.feature, f.threshold, f.left, f.right)

    def _tree_outputs(self, X) -> np.ndarray:
        return self._forest.value[self.apply(X)]

    def predict(self, X) -> np.ndarray:
        out = self._tree_outputs(X)
        if not self.is_classifier:
            return out.mean(axis=1)
        return self.classes[_majority(out.astype(np.int64), len(self.classes))]

    def predict_proba(self, X) -> np.ndarray:
        if not self.is_classifier:
            raise TypeError("predict_proba needs a classification forest")
        votes = self._tree_outputs(X).astype(np.int64)
        k = len(self.classes)
        return np.stack([(votes == c).mean(axis=1) for c in range(k)], axis=1)

    @property
    def oob_mask(self) -> np.ndarray:
        """``(n_train, num_trees)`` mask of trees for which a row is out of bag."""
        return self._forest.inbag == 0

    def oob_predict(self) -> np.ndarray:
        """Out-of-bag predictions for the training rows.

        Rows that were in bag for every tree fall back to the full-forest
        prediction.
        """
        out = self._tree_outputs(self._X_train)
        mask = self.oob_mask
        has = mask.any(axis=1)
        if not self.is_classifier:
            pred = np.where(has, (out * mask).sum(axis=1) / np.maximum(mask.sum(axis=1), 1), out.mean(axis=1))
            return pred
        codes = out.astype(np.int64)
        k = len(self.classes)
        oob_votes = np.stack([((codes == c) & mask).sum(axis=1) for c in range(k)], axis=1)
        all_votes = np.stack([(codes == c).sum(axis=1) for c in range(k)], axis=1)
        votes = np.where(has[:, None], oob_votes, all_votes)
        return self.classes[np.argmax(votes, axis=1)]

    def residuals(self) -> np.ndarray:
        if self.is_classifier:
            raise TypeError("residuals are defined for regression forests only")
        return self._y_train - self.predict(self._X_train)

    def fitted_residuals(self) -> np.ndarray:
        """Out-of-bag residuals of a regression forest."""
        return self._y_train - self.oob_predict()

    def oob_error(self) -> float:
        """OOB mean squared error (regression) or misclassification rate."""
        pred = self.oob_predict()
        if self.is_classifier:
            return float(np.mean(pred != self._y_train))
        return float(np.mean((self._y_train - pred) ** 2))


def _majority(codes: np.ndarray, k: int) -> np.ndarray:
    votes = np.stack([(codes == c).sum(axis=1) for c in range(k)], axis=1)
    return np.argmax(votes, axis=1)


def _column_order(names: Sequence[str]) -> np.ndarray:
    return np.array(sorted(range(len(names)), key=lambda i: names[i]), dtype=np.int64)


def fit_random_forest(
    X,
    y,
    params: ForestParams | None = None,
    *,
    classification: bool = False,
    feature_names: Sequence[str] | None = None,
) -> RandomForest:
    """Fit a regression forest, or a classification forest when asked.

    Classification labels may be any hashable values; predictions are
    returned in the original label space.
    """
    params = params or ForestParams()
    X = _as_matrix(X)
    n, d = X.shape
    if n < 2 or d < 1:
        raise ValueError("need at least 2 rows and 1 column")
    y = np.asarray(y)
    if y.shape[0] != n:
        raise ValueError("X and y have different numbers of rows")
    if feature_names is None:
        feature_names = [f"x{i:04d}" for i in range(d)]
    if len(feature_names) != d or len(set(feature_names)) != d:
        raise ValueError("feature_names must be unique and match the columns")
    order = _column_order(list(feature_names))
    Xo = np.ascontiguousarray(X[:, order])

    if classification:
        classes, codes = np.unique(y, return_inverse=True)
        target = codes.astype(float)
        forest = _grow(Xo, target, len(classes), params)
        y_store = y
    else:
        classes = None
        target = y.astype(float)
        if not np.all(np.isfinite(target)):
            raise ValueError("non-finite response")
        forest = _grow(Xo, target, 0, params)
        y_store = target

    return RandomForest(
        params=params,
        feature_names=tuple(feature_names),
        classes=classes,
        _forest=forest,
        _order=order,
        _X_train=X,
        _y_train=y_store,
    )
