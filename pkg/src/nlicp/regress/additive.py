"""Additive models fitted by backfitting univariate penalized cubic splines."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

_LAMBDAS = np.logspace(-8, 8, 65)


class _SplineSmoother:
    """Cubic B-spline smoother with a second-difference penalty.

    The basis is diagonalised once (Demmler-Reinsch), which makes the
    generalized cross-validation search over the penalty a cheap vector
    computation for every new partial residual.
    """

    def __init__(self, x: np.ndarray, n_knots: int = 20):
        self.lo, self.hi = float(x.min()), float(x.max())
        inner = np.unique(np.quantile(x, np.linspace(0, 1, n_knots)))
        self.knots = np.concatenate([[inner[0]] * 3, inner, [inner[-1]] * 3])
        B = self._basis(x)
        self.B = B
        k = B.shape[1]
        D = np.diff(np.eye(k), n=2, axis=0)
        P = D.T @ D
        self.D = D
        G = B.T @ B + 1e-10 * np.trace(B.T @ B) / k * np.eye(k)
        R = np.linalg.cholesky(G).T
        Rinv = np.linalg.inv(R)
        s, U = np.linalg.eigh(Rinv.T @ P @ Rinv)
        self.s = np.clip(s, 0.0, None)
        self.Q = B @ Rinv @ U
        self.coef_map = Rinv @ U  # eigen-coordinates -> B-spline coefficients
        self.lam = 1.0

    def _basis(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(x, self.lo, self.hi)
        return BSpline.design_matrix(x, self.knots, 3, extrapolate=False).toarray()

    def smooth(self, r: np.ndarray, select: bool = True) -> np.ndarray:
        """Return B-spline coefficients of the smoothed ``r``."""
        c = self.Q.T @ r
        if select:
            n = r.shape[0]
            base = r @ r - c @ c
            shrink = 1.0 / (1.0 + _LAMBDAS[:, None] * self.s[None, :])
            rss = base + (((1.0 - shrink) * c[None, :]) ** 2).sum(axis=1)
            edf = shrink.sum(axis=1)
            gcv = n * rss / np.maximum(n - edf, 1e-8) ** 2
            self.lam = float(_LAMBDAS[int(np.argmin(gcv))])
        shrink = 1.0 / (1.0 + self.lam * self.s)
        return self.coef_map @ (shrink * c)

    def edf(self) -> float:
        return float((1.0 / (1.0 + self.lam * self.s)).sum())


def _joint_solve(X, y, smoothers, lin_cols, Xl):
    """Minimum-norm solution of the penalized normal equations for all terms."""
    n = X.shape[0]
    blocks = [np.ones((n, 1))]
    pens = [np.zeros((0, 1))]
    idx = []
    for j, sm in enumerate(smoothers):
        if sm is None:
            continue
        blocks.append(sm.B)
        pens.append(np.sqrt(sm.lam) * sm.D)
        idx.append(j)
    if lin_cols:
        blocks.append(Xl)
        pens.append(np.zeros((0, Xl.shape[1])))
    design = np.hstack(blocks)
    widths = [b.shape[1] for b in blocks]
    pen = np.zeros((sum(p.shape[0] for p in pens), design.shape[1]))
    r0 = c0 = 0
    for p, w in zip(pens, widths):
        pen[r0 : r0 + p.shape[0], c0 : c0 + w] = p
        r0 += p.shape[0]
        c0 += w
    try:
        beta = np.linalg.lstsq(np.vstack([design, pen]), np.concatenate([y, np.zeros(pen.shape[0])]), rcond=None)[0]
    except np.linalg.LinAlgError:
        return None
    out = {}
    c0 = 1
    for j in idx:
        w = smoothers[j].B.shape[1]
        out[j] = beta[c0 : c0 + w]
        c0 += w
    return float(beta[0]), out, beta[c0:]


@dataclass
class AdditiveModel:
    """Fitted additive model ``y ~ intercept + sum_j f_j(x_j)``.

    Columns with fewer than ``min_unique`` distinct values enter linearly.
    """

    intercept: float
    smoothers: list
    coefs: list
    linear: dict
    centers: list
    n_sweeps: int
    converged: bool
    _X_train: np.ndarray = field(repr=False)
    _y_train: np.ndarray = field(repr=False)
    kind: str = "additive_model"

    def component(self, j: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if j in self.linear:
            slope, mu = self.linear[j]
            return slope * (x - mu)
        sm = self.smoothers[j]
        return sm._basis(x) @ self.coefs[j] - self.centers[j]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        out = np.full(X.shape[0], self.intercept)
        for j in range(X.shape[1]):
            out += self.component(j, X[:, j])
        return out

    def residuals(self) -> np.ndarray:
        return self._y_train - self.predict(self._X_train)

    def fitted_residuals(self) -> np.ndarray:
        return self.residuals()


def fit_additive_model(
    X,
    y,
    *,
    n_knots: int = 20,
    max_sweeps: int = 50,
    tol: float = 1e-6,
    min_unique: int = 5,
    check_size: bool = True,
    select_sweeps: int = 5,
) -> AdditiveModel:
    """Backfit one penalized cubic spline per covariate.

    Smoothness of every term is re-selected by GCV on its partial residual
    during the first ``select_sweeps`` sweeps and then held fixed, at which
    point the fixed point of backfitting is computed directly from the joint
    penalized normal equations.  Plain sweeps continue only if that solve
    fails; they stop once the largest coefficient change in a sweep,
    relative to the response scale, drops below ``tol`` or after
    ``max_sweeps`` sweeps, in which case the model is returned with
    ``converged=False`` and a warning.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if check_size and n <= 10 * d:
        raise ValueError(f"additive model needs n > 10*d (n={n}, d={d})")

    intercept = float(y.mean())
    scale = float(y.std()) or 1.0
    smoothers: list = [None] * d
    coefs: list = [None] * d
    centers = [0.0] * d
    linear: dict = {}
    fits = np.zeros((d, n))
    for j in range(d):
        if np.unique(X[:, j]).size < min_unique:
            linear[j] = (0.0, float(X[:, j].mean()))
        else:
            smoothers[j] = _SplineSmoother(X[:, j], n_knots)
            coefs[j] = np.zeros(smoothers[j].Q.shape[1])

    # linear columns are updated jointly as one least-squares block
    lin_cols = sorted(linear)
    if lin_cols:
        Xl = X[:, lin_cols] - np.array([linear[j][1] for j in lin_cols])
        Xl_pinv = np.linalg.pinv(Xl)
        lin_coef = np.zeros(len(lin_cols))
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        change = 0.0
        if lin_cols:
            partial = y - intercept - fits.sum(axis=0) + fits[lin_cols].sum(axis=0)
            new_lin = Xl_pinv @ partial
            change = float(np.max(np.abs(new_lin - lin_coef)))
            lin_coef = new_lin
            for k, j in enumerate(lin_cols):
                linear[j] = (float(lin_coef[k]), linear[j][1])
                fits[j] = lin_coef[k] * Xl[:, k]
        for j in range(d):
            if j in linear:
                continue
            partial = y - intercept - fits.sum(axis=0) + fits[j]
            sm = smoothers[j]
            new = sm.smooth(partial, select=sweeps <= select_sweeps)
            change = max(change, float(np.max(np.abs(new - coefs[j]))))
            coefs[j] = new
            raw = sm.B @ new
            centers[j] = float(raw.mean())
            fits[j] = raw - centers[j]
        n_blocks = len(smoothers) - len(lin_cols) + (1 if lin_cols else 0)
        if n_blocks == 1 or change / scale < tol:
            converged = True
            break
        if sweeps == select_sweeps:
            # smoothing is frozen from here on, so the backfitting fixed
            # point solves one joint penalized least-squares problem
            solved = _joint_solve(X, y, smoothers, lin_cols, Xl if lin_cols else None)
            if solved is not None:
                beta0, coefs_new, lin_new = solved
                for j, c in coefs_new.items():
                    coefs[j] = c
                    raw = smoothers[j].B @ c
                    centers[j] = float(raw.mean())
                    fits[j] = raw - centers[j]
                for k, j in enumerate(lin_cols):
                    linear[j] = (float(lin_new[k]), linear[j][1])
                    fits[j] = lin_new[k] * Xl[:, k]
                intercept = float(beta0 + sum(centers[j] for j in coefs_new))
                converged = True
                break
    if not converged:
        warnings.warn(f"backfitting did not converge in {max_sweeps} sweeps", RuntimeWarning)

    return AdditiveModel(
        intercept=intercept,
        smoothers=smoothers,
        coefs=coefs,
        linear=linear,
        centers=centers,
        n_sweeps=sweeps,
        converged=converged,
        _X_train=X,
        _y_train=y,
    )
