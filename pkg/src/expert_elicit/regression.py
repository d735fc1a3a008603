"""Sparse linear regression by cyclic coordinate descent.

The objective minimised by :func:`fit_lasso` is the elastic net

    (1/2n) * ||y - X w||^2 + lam * (alpha * ||w||_1 + (1 - alpha)/2 * ||w||_2^2)

with no intercept term. :func:`cv_select_lambda` picks ``lam`` by K-fold
cross-validation over a log-spaced descending grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Dataset:
    """Design matrix (n x p) with its n responses."""

    features: np.ndarray
    responses: np.ndarray
    feature_names: Optional[Sequence[str]] = None

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=float)
        y = np.ascontiguousarray(self.responses, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(
                f"responses must have length {X.shape[0]}, got shape {y.shape}"
            )
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("need n >= 1 and p >= 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("features and responses must be finite")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise ValueError("feature_names length does not match p")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.features[rows], self.responses[rows], self.feature_names)


class WeightVector:
    """Length-p weight vector; ``support`` is the set of nonzero indices."""

    __slots__ = ("_values",)

    def __init__(self, values):
        v = np.array(values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("weights must be finite")
        v.setflags(write=False)
        self._values = v

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def support(self) -> frozenset:
        return frozenset(int(i) for i in np.flatnonzero(self._values))

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self._values))

    def __len__(self):
        return self._values.shape[0]

    def __getitem__(self, i):
        return self._values[i]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._values
        return self._values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, WeightVector):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __hash__(self):
        return hash(self._values.tobytes())

    def __repr__(self):
        return f"WeightVector(p={len(self)}, support={sorted(self.support)})"

    @classmethod
    def zeros(cls, p: int) -> "WeightVector":
        return cls(np.zeros(p))


def as_weights(w) -> WeightVector:
    return w if isinstance(w, WeightVector) else WeightVector(w)


@dataclass(frozen=True)
class LassoConfig:
    alpha: float = 1.0
    lam: float = 0.0
    max_sweeps: int = 100_000
    tolerance: float = 1e-7
    standardize: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.lam >= 0.0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be positive")


@dataclass(frozen=True)
class LassoFit:
    """Result of :func:`fit_lasso`.

    ``intercept`` is nonzero only for standardized fits, where columns and
    responses are centered internally; callers working in the intercept-free
    model ignore it.
    """

    weights: WeightVector
    converged: bool
    n_sweeps: int
    lam: float
    alpha: float
    intercept: float = 0.0
    skipped_columns: tuple = ()
    warnings: tuple = ()


@dataclass(frozen=True)
class CvResult:
    lambda_grid: np.ndarray
    mean_cv_error: np.ndarray
    lambda_min: float
    folds: int = 0

    @property
    def index_min(self) -> int:
        return int(np.flatnonzero(self.lambda_grid == self.lambda_min)[0])


def soft_threshold(z, gamma):
    """Return ``sign(z) * max(|z| - gamma, 0)`` (elementwise for arrays)."""
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("gamma must be nonnegative")
    out = np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


@numba.njit(cache=True)
def _cd_sweep(X, r, w, col_sq, l1, l2, idx, m):
    # One cyclic pass over coordinates idx[:m]; updates w and the residual r.
    n = X.shape[0]
    max_change = 0.0
    for t in range(m):
        j = idx[t]
        cj = col_sq[j]
        if cj == 0.0:
            continue
        wj = w[j]
        g = 0.0
        for i in range(n):
            g += X[i, j] * r[i]
        rho = g / n + cj * wj
        if rho > l1:
            new = (rho - l1) / (cj + l2)
        elif rho < -l1:
            new = (rho + l1) / (cj + l2)
        else:
            new = 0.0
        delta = new - wj
        if delta != 0.0:
            for i in range(n):
                r[i] -= delta * X[i, j]
            w[j] = new
            if abs(delta) > max_change:
                max_change = abs(delta)
    return max_change


@numba.njit(cache=True)
def _cd_solve(X, y, w, col_sq, l1, l2, tol, max_sweeps):
    # Cyclic coordinate descent, updating ``w`` in place. Alternates full
    # sweeps with sweeps restricted to the nonzero coordinates; convergence is
    # only declared on a full sweep. Returns (sweeps run, converged).
    p = X.shape[1]
    r = y - X @ w
    every = np.arange(p)
    active = np.empty(p, dtype=np.int64)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        if _cd_sweep(X, r, w, col_sq, l1, l2, every, p) < tol:
            return sweeps, True
        m = 0
        for j in range(p):
            if w[j] != 0.0:
                active[m] = j
                m += 1
        while sweeps < max_sweeps:
            sweeps += 1
            if _cd_sweep(X, r, w, col_sq, l1, l2, active, m) < tol:
                break
    return sweeps, False


@numba.njit(cache=True)
def _cd_path(X, y, col_sq, lambdas, alpha, tol, max_sweeps):
    # Warm-started solutions along a descending lambda grid.
    p = X.shape[1]
    W = np.zeros((lambdas.shape[0], p))
    w = np.zeros(p)
    ok = True
    for k in range(lambdas.shape[0]):
        lam = lambdas[k]
        _, conv = _cd_solve(X, y, w, col_sq, lam * alpha, lam * (1.0 - alpha), tol, max_sweeps)
        ok = ok and conv
        W[k] = w
    return W, ok


def _prepare(X, y, standardize):
    """Center/scale for standardized fits. Returns (Xs, ys, x_mean, x_scale, y_mean, zero_cols)."""
    n, p = X.shape
    if not standardize:
        return X, y, np.zeros(p), np.ones(p), 0.0, np.zeros(p, dtype=bool)
    x_mean = X.mean(axis=0)
    Xc = X - x_mean
    x_scale = np.sqrt((Xc * Xc).mean(axis=0))
    zero = x_scale <= 1e-12 * np.maximum(1.0, np.abs(x_mean))
    safe = np.where(zero, 1.0, x_scale)
    Xs = Xc / safe
    Xs[:, zero] = 0.0
    y_mean = float(y.mean())
    return np.ascontiguousarray(Xs), y - y_mean, x_mean, safe, y_mean, zero


def objective(data: Dataset, weights, lam: float, alpha: float = 1.0) -> float:
    """Elastic-net objective value of ``weights`` on ``data`` (unstandardized)."""
    w = np.asarray(weights, dtype=float)
    r = data.responses - data.features @ w
    return float(
        0.5 * (r @ r) / data.n
        + lam * (alpha * np.abs(w).sum() + 0.5 * (1.0 - alpha) * (w @ w))
    )


def fit_lasso(data: Dataset, config: LassoConfig = LassoConfig(), warm_start=None) -> LassoFit:
    """Fit the elastic net at a single penalty.

    Non-convergence within ``config.max_sweeps`` is not an error: the last
    iterate is returned with ``converged=False`` and a
    :class:`ConvergenceWarning` is emitted.
    """
    X, y = data.features, data.responses
    Xs, ys, x_mean, x_scale, y_mean, zero = _prepare(X, y, config.standardize)
    col_sq = (Xs * Xs).mean(axis=0)
    notes = []
    skipped = tuple(int(j) for j in np.flatnonzero(zero))
    if skipped:
        notes.append(f"zero-variance columns skipped: {list(skipped)}")
    if warm_start is None:
        w = np.zeros(data.p)
    else:
        w = np.array(warm_start, dtype=float) * (x_scale if config.standardize else 1.0)
        w[zero] = 0.0
    sweeps, converged = _cd_solve(
        Xs, ys, w, col_sq,
        config.lam * config.alpha, config.lam * (1.0 - config.alpha),
        config.tolerance, config.max_sweeps,
    )
    if not converged:
        msg = f"coordinate descent did not converge in {config.max_sweeps} sweeps"
        notes.append(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    intercept = 0.0
    if config.standardize:
        w = w / x_scale
        w[zero] = 0.0
        intercept = y_mean - float(x_mean @ w)
    return LassoFit(
        weights=WeightVector(w),
        converged=bool(converged),
        n_sweeps=int(sweeps),
        lam=config.lam,
        alpha=config.alpha,
        intercept=intercept,
        skipped_columns=skipped,
        warnings=tuple(notes),
    )


def lambda_max(data: Dataset, alpha: float = 1.0, standardize: bool = False) -> float:
    """Smallest penalty at which the all-zero vector is optimal."""
    Xs, ys, *_ = _prepare(data.features, data.responses, standardize)
    return float(np.max(np.abs(Xs.T @ ys)) / (data.n * max(alpha, 1e-3)))


def lambda_grid(lam_max: float, grid_size: int, ratio: float = 1e-3) -> np.ndarray:
    if lam_max <= 0.0:
        # Constant responses: any positive grid gives the zero fit.
        lam_max = 1.0
    return np.geomspace(lam_max, lam_max * ratio, grid_size)


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold id per row from a seeded shuffle; fold sizes differ by at most one."""
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % folds
    return fold_of


def cv_select_lambda(
    data: Dataset,
    alpha: float = 1.0,
    folds: int = 10,
    grid_size: int = 100,
    seed: int = 0,
    *,
    standardize: bool = False,
    tolerance: float = 1e-7,
    max_sweeps: int = 100_000,
) -> CvResult:
    """K-fold cross-validated choice of the penalty.

    The grid runs log-spaced from ``lambda_max`` down to ``1e-3 * lambda_max``.
    Held-out mean squared errors are summed over folds in fold order; the
    grid point with the smallest mean error wins, ties going to the larger
    penalty.
    """
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if data.n < folds:
        raise ValueError(f"cannot split n={data.n} rows into {folds} nonempty folds")
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    grid = lambda_grid(lambda_max(data, alpha, standardize), grid_size)
    fold_of = fold_assignment(data.n, folds, seed)
    total = np.zeros(grid_size)
    for k in range(folds):
        test = fold_of == k
        train = data.subset(np.flatnonzero(~test))
        Xs, ys, x_mean, x_scale, y_mean, zero = _prepare(
            train.features, train.responses, standardize
        )
        col_sq = (Xs * Xs).mean(axis=0)
        W, _ = _cd_path(Xs, ys, col_sq, grid, alpha, tolerance, max_sweeps)
        if standardize:
            W = W / x_scale
            W[:, zero] = 0.0
            b = y_mean - W @ x_mean
        else:
            b = np.zeros(grid_size)
        pred = data.features[test] @ W.T + b
        total += ((data.responses[test][:, None] - pred) ** 2).mean(axis=0)
    mean_err = total / folds
    best = int(np.argmin(mean_err))
    return CvResult(grid, mean_err, float(grid[best]), folds)


def fit_lasso_cv(
    data: Dataset,
    seed: int = 0,
    *,
    max_folds: int = 10,
    alpha: float = 1.0,
    grid_size: int = 100,
    standardize: bool = False,
) -> tuple[LassoFit, CvResult]:
    """CV-select the penalty with ``min(max_folds, n)`` folds, then refit on all rows."""
    folds = min(max_folds, data.n)
    if folds < 2:
        raise ValueError("need at least 2 rows for cross-validation")
    cv = cv_select_lambda(data, alpha, folds, grid_size, seed, standardize=standardize)
    # Cold starts at small penalties can need >1e5 sweeps; walk the grid instead.
    Xs, ys, _, x_scale, _, _ = _prepare(data.features, data.responses, standardize)
    W, _ = _cd_path(Xs, ys, (Xs * Xs).mean(axis=0), cv.lambda_grid[: cv.index_min + 1],
                    alpha, 1e-7, 100_000)
    start = W[-1] / x_scale
    fit = fit_lasso(data, LassoConfig(alpha=alpha, lam=cv.lambda_min, standardize=standardize),
                    warm_start=start)
    return fit, cv


def predict(weights, x) -> float:
    w = np.asarray(weights, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape != w.shape:
        raise ValueError(f"dimension mismatch: weights {w.shape}, x {x.shape}")
    return float(x @ w)


def kkt_residuals(data: Dataset, fit: LassoFit) -> np.ndarray:
    """Per-coordinate KKT violation for a pure-lasso, unstandardized fit."""
    w = fit.weights.values
    grad = data.features.T @ (data.responses - data.features @ w) / data.n
    active = w != 0
    viol = np.empty_like(w)
    viol[active] = np.abs(grad[active] - fit.lam * np.sign(w[active]))
    viol[~active] = np.maximum(np.abs(grad[~active]) - fit.lam, 0.0)
    return viol
