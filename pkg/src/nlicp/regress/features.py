"""Random and fixed basis expansions, and least squares on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

KINDS = ("fourier", "nystrom_rbf", "nystrom_poly", "poly_basis")


def median_bandwidth(X: np.ndarray, max_rows: int = 1000, rng=None) -> float:
    """Median pairwise Euclidean distance (the median heuristic)."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] > max_rows:
        rng = rng if rng is not None else np.random.default_rng(0)
        X = X[rng.choice(X.shape[0], max_rows, replace=False)]
    sq = (X**2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * X @ X.T, 0.0)
    iu = np.triu_indices(X.shape[0], k=1)
    med = float(np.sqrt(np.median(d2[iu]))) if iu[0].size else 1.0
    return med if med > 0 else 1.0


def rbf_kernel(A: np.ndarray, B: np.ndarray, sigma: float) -> np.ndarray:
    sa = (A**2).sum(axis=1)
    sb = (B**2).sum(axis=1)
    d2 = np.maximum(sa[:, None] + sb[None, :] - 2 * A @ B.T, 0.0)
    return np.exp(-d2 / (2 * sigma**2))


def poly_kernel(A: np.ndarray, B: np.ndarray, degree: int) -> np.ndarray:
    return (A @ B.T + 1.0) ** degree


@dataclass
class FeatureMap:
    kind: str
    num_features: int
    bandwidth: float | None = None
    degree: int | None = None
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    state: dict = field(default_factory=dict, repr=False)

    def _standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.center is not None:
            X = (X - self.center) / self.scale
        return X

    def apply(self, X) -> np.ndarray:
        Z = self._standardize(X)
        st = self.state
        if self.kind == "fourier":
            return math.sqrt(2.0 / self.num_features) * np.cos(Z @ st["omega"] + st["phase"])
        if self.kind == "nystrom_rbf":
            return rbf_kernel(Z, st["landmarks"], self.bandwidth) @ st["proj"]
        if self.kind == "nystrom_poly":
            return poly_kernel(Z, st["landmarks"], self.degree) @ st["proj"]
        if self.kind == "poly_basis":
            cols = [np.prod(Z[:, list(p)], axis=1) for p in st["powers"]]
            return np.column_stack(cols) if cols else np.empty((Z.shape[0], 0))
        raise ValueError(f"unknown feature map kind {self.kind!r}")


def _nystrom_projection(K_LL: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(0.5 * (K_LL + K_LL.T))
    keep = w > w.max() * 1e-12
    return U[:, keep] / np.sqrt(w[keep])


def make_feature_map(
    X,
    kind: str,
    M: int | None = None,
    *,
    bandwidth: float | None = None,
    degree: int | None = None,
    seed: int = 0,
    standardize: bool = False,
) -> FeatureMap:
    """Draw a feature map from the rows of ``X``.

    ``M`` defaults to ``ceil(n/4)``.  A missing ``bandwidth`` comes from the
    median heuristic and a missing ``degree`` is drawn from {2, 3, 4}.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown feature map kind {kind!r}; expected one of {KINDS}")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    rng = np.random.default_rng(seed)
    M = int(M) if M is not None else math.ceil(n / 4)
    if M < 1:
        raise ValueError("M must be at least 1")

    center = scale = None
    if standardize:
        center = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    fmap = FeatureMap(kind=kind, num_features=M, center=center, scale=scale)
    Z = fmap._standardize(X)

    if kind in ("nystrom_poly", "poly_basis") and degree is None:
        degree = int(rng.integers(2, 5))
    if kind in ("fourier", "nystrom_rbf") and bandwidth is None:
        bandwidth = median_bandwidth(Z, rng=rng)
    fmap.bandwidth = bandwidth
    fmap.degree = degree

    if kind == "fourier":
        fmap.state = {
            "omega": rng.normal(0.0, 1.0 / bandwidth, size=(d, M)),
            "phase": rng.uniform(0.0, 2 * np.pi, size=M),
        }
    elif kind in ("nystrom_rbf", "nystrom_poly"):
        if M > n:
            raise ValueError(f"Nystrom map needs M <= n (M={M}, n={n})")
        L = Z[np.sort(rng.choice(n, M, replace=False))]
        K = rbf_kernel(L, L, bandwidth) if kind == "nystrom_rbf" else poly_kernel(L, L, degree)
        fmap.state = {"landmarks": L, "proj": _nystrom_projection(K)}
        fmap.num_features = fmap.state["proj"].shape[1]
    else:
        powers = [p for k in range(1, degree + 1) for p in combinations_with_replacement(range(d), k)]
        fmap.state = {"powers": powers}
        fmap.num_features = len(powers)
    return fmap


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    hat_diag: np.ndarray
    rank: int


def ols_fit(H, y) -> OlsFit:
    """Minimum-norm least squares through a truncated SVD."""
    H = np.asarray(H, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    y = np.asarray(y, dtype=float)
    if H.shape[0] == 0:
        raise ValueError("empty design")
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    tol = max(H.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    r = int((s > tol).sum())
    U, s, Vt = U[:, :r], s[:r], Vt[:r]
    uty = U.T @ y
    coef = Vt.T @ (uty / s)
    resid = y - U @ uty
    return OlsFit(coefficients=coef, residuals=resid, hat_diag=(U**2).sum(axis=1), rank=r)
