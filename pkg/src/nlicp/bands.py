"""Bootstrap confidence bands for regression functions and bounds on average causal effects."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .data import Dataset
from .regress import fit_regressor


def block_bootstrap_resample(fitted, residuals, block_len: int, rng) -> list[np.ndarray]:
    """Resample residuals in consecutive blocks across panel units.

    ``fitted`` and ``residuals`` are sequences of per-unit, time-ordered
    arrays.  For every unit the series is cut into consecutive blocks of
    ``block_len`` points; each block gets the residuals of a randomly drawn
    unit starting at a randomly drawn time, and the last block is
    truncated.  ``rng`` needs an ``integers(low, high)`` method.
    """
    fitted = [np.asarray(f, dtype=float) for f in fitted]
    residuals = [np.asarray(r, dtype=float) for r in residuals]
    if len(fitted) != len(residuals) or any(f.shape != r.shape for f, r in zip(fitted, residuals)):
        raise ValueError("fitted values and residuals must have matching shapes")
    if block_len < 1:
        raise ValueError("block length must be at least 1")
    if any(block_len > r.size for r in residuals):
        raise ValueError("block length exceeds a series length")
    out = []
    for f in fitted:
        y = f.copy()
        for start in range(0, f.size, block_len):
            stop = min(start + block_len, f.size)
            b = int(rng.integers(0, len(residuals)))
            src = residuals[b]
            t = int(rng.integers(0, src.size - block_len + 1))
            y[start:stop] += src[t : t + stop - start]
        out.append(y)
    return out


def _panel_index(data: Dataset) -> list[np.ndarray]:
    if data.unit is None or data.time is None:
        raise ValueError("block bootstrap needs unit and time columns")
    groups = []
    for u in sorted(set(data.unit.tolist()), key=str):
        rows = np.flatnonzero(data.unit == u)
        groups.append(rows[np.argsort(data.time[rows], kind="stable")])
    return groups


@dataclass
class ConfidenceBand:
    """The bootstrap fits for one set ``S``; bounds are pointwise quantiles."""

    columns: tuple[str, ...]
    fits: list[Any] = field(repr=False)
    alpha: float
    lo: np.ndarray = field(repr=False)
    hi: np.ndarray = field(repr=False)
    dropped: int = 0
    envelope: str = "pointwise"

    def _sub(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        return X

    def evaluate(self, X) -> np.ndarray:
        """Every bootstrap fit at ``X`` (restricted to this band's columns): shape ``(B, m)``."""
        X = self._sub(X)
        return np.stack([f.predict(X) for f in self.fits])

    def lower(self, X) -> np.ndarray:
        return np.quantile(self.evaluate(X), self.alpha / 2, axis=0)

    def upper(self, X) -> np.ndarray:
        return np.quantile(self.evaluate(X), 1 - self.alpha / 2, axis=0)

    def outside_hull(self, X) -> np.ndarray:
        X = self._sub(X)
        if X.shape[1] == 0:
            return np.zeros(X.shape[0], dtype=bool)
        return np.any((X < self.lo) | (X > self.hi), axis=1)


def confidence_bands(
    data: Dataset,
    sets: Iterable[Iterable[str]],
    *,
    regressor: str = "additive_model",
    regressor_kwargs: dict | None = None,
    B: int = 100,
    alpha: float = 0.05,
    bootstrap: str = "iid",
    block_len: int = 3,
    seed: int = 0,
) -> dict[frozenset[str], ConfidenceBand]:
    """Residual-bootstrap bands for the regression of ``y`` on each set.

    ``bootstrap`` is ``"iid"`` (residuals drawn with replacement) or
    ``"block"`` (the panel block scheme of ``block_bootstrap_resample``).
    """
    if B < 50:
        raise ValueError("need at least 50 bootstrap fits")
    if bootstrap not in ("iid", "block"):
        raise ValueError("bootstrap must be 'iid' or 'block'")
    kw = dict(regressor_kwargs or {})
    panel = _panel_index(data) if bootstrap == "block" else None
    bands = {}
    for k, s in enumerate(sorted((frozenset(s) for s in sets), key=lambda s: (len(s), sorted(s)))):
        cols = tuple(sorted(s))
        X = data.X[:, [data.column_index(c) for c in cols]]
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        base = fit_regressor(regressor, X, data.y, seed=seed, **kw)
        fitted = base.predict(X)
        resid = data.y - fitted
        fits, dropped = [], 0
        for b in range(B):
            if panel is None:
                yb = fitted + resid[rng.integers(0, data.n, data.n)]
            else:
                parts = block_bootstrap_resample(
                    [fitted[g] for g in panel], [resid[g] for g in panel], block_len, rng
                )
                yb = np.empty(data.n)
                for g, part in zip(panel, parts):
                    yb[g] = part
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    fits.append(fit_regressor(regressor, X, yb, seed=seed + b + 1, **kw))
            except (ValueError, np.linalg.LinAlgError):
                dropped += 1
        if dropped > 0.1 * B:
            raise RuntimeError(f"{dropped} of {B} bootstrap fits failed for set {cols}")
        if dropped:
            warnings.warn(f"dropped {dropped} failed bootstrap fits for set {cols}", RuntimeWarning)
        lo = X.min(axis=0) if X.shape[1] else np.zeros(0)
        hi = X.max(axis=0) if X.shape[1] else np.zeros(0)
        bands[s] = ConfidenceBand(columns=cols, fits=fits, alpha=alpha, lo=lo, hi=hi, dropped=dropped)
    return bands


@dataclass(frozen=True)
class AceInterval:
    per_set: dict[frozenset[str], tuple[float, float]]
    union: tuple[tuple[float, float], ...]
    hull: tuple[float, float]
    level: float
    extrapolated: tuple[frozenset[str], ...] = ()


def merge_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


def ace_bounds(
    bands: dict[frozenset[str], ConfidenceBand],
    x_tilde: dict[str, float] | Sequence[float],
    x: dict[str, float] | Sequence[float],
    *,
    columns: Sequence[str] | None = None,
) -> AceInterval:
    """Bounds on ``E[Y | do(x_tilde)] - E[Y | do(x)]`` over all bands.

    ``x_tilde`` and ``x`` give a value for every predictor, either as a
    mapping from column name or as a vector ordered like ``columns``.
    Each band contributes ``[min_b, max_b]`` of ``g_b(x_tilde_S) - g_b(x_S)``
    over its bootstrap fits.  The reported level is ``1 - 2 alpha``.
    """
    if not bands:
        raise ValueError("no accepted sets: average causal effect bounds are undefined")

    def as_map(v) -> dict[str, float]:
        if isinstance(v, dict):
            return {k: float(val) for k, val in v.items()}
        if columns is None:
            raise ValueError("vector queries need column names")
        v = np.asarray(v, dtype=float).ravel()
        if v.size != len(columns):
            raise ValueError("query vector does not match the columns")
        return dict(zip(columns, v.tolist()))

    xt, x0 = as_map(x_tilde), as_map(x)
    per_set, extrap, alphas = {}, [], set()
    for s, band in bands.items():
        try:
            a = np.array([[xt[c] for c in band.columns]])
            b = np.array([[x0[c] for c in band.columns]])
        except KeyError as exc:
            raise ValueError(f"query lacks a value for column {exc.args[0]!r}") from None
        diff = band.evaluate(a)[:, 0] - band.evaluate(b)[:, 0]
        per_set[s] = (float(diff.min()), float(diff.max()))
        if band.outside_hull(a)[0] or band.outside_hull(b)[0]:
            extrap.append(s)
        alphas.add(band.alpha)
    union = merge_intervals(per_set.values())
    hull = (min(i[0] for i in union), max(i[1] for i in union))
    return AceInterval(
        per_set=per_set,
        union=tuple(union),
        hull=hull,
        level=1 - 2 * max(alphas),
        extrapolated=tuple(sorted(extrap, key=lambda s: (len(s), sorted(s)))),
    )
