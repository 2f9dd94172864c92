"""Quantile regression forest: conditional distribution functions from forest weights."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _trees
from .forest import ForestParams, RandomForest, fit_random_forest


@dataclass
class QuantileForest:
    forest: RandomForest
    _ptr: np.ndarray = field(repr=False)
    _members: np.ndarray = field(repr=False)
    _weights: np.ndarray = field(repr=False)
    _y_sorted: np.ndarray = field(repr=False)
    _y_order: np.ndarray = field(repr=False)
    _oob_ptr: np.ndarray = field(repr=False)
    _oob_members: np.ndarray = field(repr=False)
    _oob_weights: np.ndarray = field(repr=False)

    @property
    def n_train(self) -> int:
        return self._y_order.shape[0]

    def weights(self, X, *, oob: bool = False) -> np.ndarray:
        """Forest weights over training rows, one row per query.

        With ``oob=True`` the queries must be the training rows.  Each row
        then only uses trees for which it was out of bag, and within such a
        tree it is compared with the other out-of-bag rows of its leaf
        rather than the in-bag rows that shaped the split.  That keeps the
        estimated conditional distribution from being too narrow.
        """
        leaves = self.forest.apply(X)
        if not oob:
            mask = np.ones(leaves.shape, dtype=np.bool_)
            return _trees.quantile_weights_query(
                leaves, self._ptr, self._members, self._weights, mask, self.n_train
            )
        if leaves.shape[0] != self.n_train:
            raise ValueError("oob weights are only defined for the training rows")
        W = _trees.quantile_weights_query(
            leaves, self._oob_ptr, self._oob_members, self._oob_weights, self.forest.oob_mask, self.n_train
        )
        np.fill_diagonal(W, 0.0)
        # rows without any out-of-bag neighbour fall back to the full forest
        empty = W.sum(axis=1) <= 0
        if empty.any():
            full = np.ones((int(empty.sum()), leaves.shape[1]), dtype=np.bool_)
            W[empty] = _trees.quantile_weights_query(
                leaves[empty], self._ptr, self._members, self._weights, full, self.n_train
            )
        return W / W.sum(axis=1, keepdims=True)

    def predict_quantiles(self, X, probs: Sequence[float], *, oob: bool = False) -> np.ndarray:
        """Conditional quantiles, shape ``(n_queries, len(probs))``."""
        probs = np.asarray(probs, dtype=float)
        if np.any((probs <= 0) | (probs >= 1)):
            raise ValueError("quantile levels must lie strictly inside (0, 1)")
        W = self.weights(X, oob=oob)
        return _trees.weighted_quantiles(W, self._y_sorted, self._y_order, probs)

    def query(self, x, prob: float) -> float | np.ndarray:
        """Estimated ``prob``-quantile of the response at ``x`` (one row or many)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(self.predict_quantiles(x[None, :], [prob])[0, 0])
        return self.predict_quantiles(x, [prob])[:, 0]


def fit_quantile_forest(
    X,
    y,
    params: ForestParams | None = None,
    *,
    feature_names: Sequence[str] | None = None,
) -> QuantileForest:
    forest = fit_random_forest(X, y, params, feature_names=feature_names)
    y = np.asarray(y, dtype=float)
    leaves = forest.apply(forest._X_train)
    n_nodes = forest._forest.left.shape[0]
    inbag = forest._forest.inbag
    ptr, members, weights = _leaf_csr(leaves, inbag, inbag > 0, n_nodes)
    oob_ptr, oob_members, oob_weights = _leaf_csr(leaves, np.ones_like(inbag), inbag == 0, n_nodes)
    y_order = np.argsort(y, kind="stable")
    return QuantileForest(
        forest=forest,
        _ptr=ptr,
        _members=members,
        _weights=weights,
        _y_sorted=y[y_order],
        _y_order=y_order.astype(np.int64),
        _oob_ptr=oob_ptr,
        _oob_members=oob_members,
        _oob_weights=oob_weights,
    )


def _leaf_csr(leaves: np.ndarray, counts: np.ndarray, keep: np.ndarray, n_nodes: int):
    """Per-leaf member lists with weights ``count / leaf total``."""
    rows, trees = np.nonzero(keep)
    leaf = leaves[rows, trees]
    count = counts[rows, trees].astype(float)
    total = np.bincount(leaf, weights=count, minlength=n_nodes)
    w = count / total[leaf]
    order = np.argsort(leaf, kind="stable")
    ptr = np.zeros(n_nodes + 1, dtype=np.int64)
    ptr[1:] = np.cumsum(np.bincount(leaf, minlength=n_nodes))
    return ptr, rows[order].astype(np.int64), w[order]
