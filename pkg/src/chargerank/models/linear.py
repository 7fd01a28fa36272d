"""Sparse logistic regression (l1 penalty) and the OLS screening fit.

The penalized objective is the mean log-likelihood minus lambda * ||beta||_1
(maximization form); features are standardized internally and coefficients
are kept on the standardized scale with the transform parameters stored for
prediction and back-transformation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from chargerank._kernels import logistic_lasso_path
from chargerank.models.common import (
    STREAM_FOLD,
    ModelError,
    rank_auc_columns,
    rng_stream,
    stratified_kfold,
)

LAMBDA_GRID_BASE = -4.0
LAMBDA_GRID_STEP = 0.015
LAMBDA_GRID_COUNT = 201

COEF_CAP = 1e4

# CV path fits run the cheap curvature-scaled convergence mode; the final
# model is always refit in exact mode (coef tol 1e-7, KKT-checked).
CV_OBJ_TOL = 1e-5
CV_MAX_SWEEPS = 100


def lambda_grid() -> np.ndarray:
    """The regularization grid 10^(-4 + 0.015 i), i = 0..200.

    Built with scalar arithmetic so every element equals the formula as
    evaluated in plain Python (vectorized pow rounds differently by 1 ulp).
    """
    return np.array([10.0 ** (LAMBDA_GRID_BASE + LAMBDA_GRID_STEP * i)
                     for i in range(LAMBDA_GRID_COUNT)])


def standardize_columns(X: np.ndarray):
    """Per-column mean/std with a unit floor for constant columns."""
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return (X - mean) / std, mean, std


def lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest lambda with an all-zero coefficient vector (KKT at the null)."""
    Xs, _, _ = standardize_columns(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    ybar = y.mean()
    return float(np.max(np.abs(Xs.T @ (y - ybar)) / y.shape[0], initial=0.0))


@dataclass
class LrModel:
    """Fitted l1-logistic model (standardized coefficient scale)."""

    beta0: float
    beta: np.ndarray
    lambda_: float
    mean: np.ndarray
    std: np.ndarray
    capped: bool = False
    n_sweeps: int = 0
    feature_names: list | None = None

    @property
    def coef_raw(self) -> np.ndarray:
        """Coefficients on the original feature scale."""
        return self.beta / self.std

    @property
    def intercept_raw(self) -> float:
        return float(self.beta0 - np.sum(self.beta * self.mean / self.std))

    def decision_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.beta.shape[0]:
            raise ModelError(
                f"predictor count {X.shape[1]} != fit-time {self.beta.shape[0]}")
        return self.beta0 + ((X - self.mean) / self.std) @ self.beta

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.decision_scores(X)))


def _validate_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(X).all():
        raise ModelError("X contains non-finite values")
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ModelError("X must be (n, p) with matching y of length n")
    uniq = np.unique(y)
    if not np.all(np.isin(uniq, (0.0, 1.0))):
        raise ModelError(f"y must be binary 0/1, got values {uniq[:5]}")
    return X, y


def fit_lr_l1(X, y, lambda_: float, tol: float = 1e-7,
              max_sweeps: int = 10_000, feature_names: list | None = None) -> LrModel:
    """Fit at one lambda with coordinate descent to full tolerance.

    Converged when the largest coefficient change over a sweep is below
    ``tol`` and the KKT conditions hold; diverging coefficients (separable
    data at tiny lambda) are capped at 1e4 with a warning.
    """
    X, y = _validate_xy(X, y)
    if lambda_ < 0:
        raise ModelError("lambda must be >= 0")
    Xs, mean, std = standardize_columns(X)
    b0s, betas, sweeps, capped = logistic_lasso_path(
        np.asfortranarray(Xs), y, np.array([float(lambda_)]),
        tol=tol, max_sweeps=max_sweeps, coef_cap=COEF_CAP)
    hit_cap = bool(capped[0])
    if hit_cap:
        warnings.warn(
            "coefficients hit the 1e4 cap; data may be separable at this lambda",
            stacklevel=2)
    return LrModel(
        beta0=float(b0s[0]), beta=betas[0].copy(), lambda_=float(lambda_),
        mean=mean, std=std, capped=hit_cap, n_sweeps=int(sweeps[0]),
        feature_names=list(feature_names) if feature_names is not None else None)


@dataclass
class CvLambdaResult:
    lambda_star: float
    grid: np.ndarray
    mean_auc: np.ndarray  # aligned with grid (ascending lambda)

    def best_index(self) -> int:
        return int(np.nonzero(self.grid == self.lambda_star)[0][0])


def cv_lambda(X, y, k: int = 10, master_seed: int = 0, cv_key: tuple = (0,),
              grid: np.ndarray | None = None,
              obj_tol: float = CV_OBJ_TOL,
              max_sweeps_per_lambda: int = CV_MAX_SWEEPS) -> CvLambdaResult:
    """Pick lambda by stratified k-fold CV, maximizing mean held-out AUC.

    The grid is swept descending with warm starts inside each fold; ties in
    mean AUC go to the larger lambda (the sparser model). ``cv_key``
    namespaces the fold stream so callers can align folds across methods.
    """
    X, y = _validate_xy(X, y)
    grid = lambda_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ModelError("empty lambda grid")
    rng = rng_stream(master_seed, STREAM_FOLD, *cv_key)
    folds = stratified_kfold(y, k, rng)
    order = np.argsort(-grid, kind="stable")  # descending for warm starts
    lam_desc = np.ascontiguousarray(grid[order])
    auc_sum = np.zeros(grid.shape[0])
    for train_idx, val_idx in folds:
        Xs, mean, std = standardize_columns(X[train_idx])
        b0s, betas, _sweeps, _capped = logistic_lasso_path(
            np.asfortranarray(Xs), y[train_idx], lam_desc,
            obj_tol=obj_tol, max_sweeps=max_sweeps_per_lambda, coef_cap=COEF_CAP)
        scores = ((X[val_idx] - mean) / std) @ betas.T + b0s
        auc_desc = rank_auc_columns(y[val_idx], scores)
        auc_sum[order] += auc_desc
    mean_auc = auc_sum / len(folds)
    best_idx = 0
    best_auc = -np.inf
    for pos in range(grid.shape[0] - 1, -1, -1):  # largest lambda first
        if mean_auc[pos] > best_auc:
            best_auc = mean_auc[pos]
            best_idx = pos
    return CvLambdaResult(lambda_star=float(grid[best_idx]), grid=grid,
                          mean_auc=mean_auc)


def ols_r2(X, y) -> float:
    """Coefficient of determination of an ordinary least squares fit.

    Solved via normal equations with a 1e-8 ridge jitter for rank safety.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if float(np.var(y)) == 0.0:
        raise ModelError("response has zero variance")
    A = np.column_stack((np.ones(X.shape[0]), X))
    G = A.T @ A + 1e-8 * np.eye(A.shape[1])
    coef = np.linalg.solve(G, A.T @ y)
    resid = y - A @ coef
    ssr = float(resid @ resid)
    sst = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ssr / sst
