"""Threshold-swept metrics, ROC/AUC, null baselines, split ensembles,
AUC comparison tests, and bootstrap coefficient stability."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from chargerank import models
from chargerank.models.common import (
    STREAM_BOOTSTRAP,
    STREAM_SPLIT,
    ModelError,
    rng_stream,
    stratified_bootstrap,
    stratified_split,
)
from chargerank.stats import f_test_variances, t_test_means

THETA_GRID_STEP = 0.01
DEFAULT_PREVALENCE = 0.25


class EvalError(ValueError):
    pass


def theta_grid() -> np.ndarray:
    """The sweep grid {0.00, 0.01, ..., 0.99}."""
    return np.arange(100) / 100.0


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    sensitivity: float
    fall_out: float
    f_score: float
    mcc: float

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "sensitivity": self.sensitivity,
            "fall_out": self.fall_out,
            "f_score": self.f_score,
            "mcc": self.mcc,
        }


METRIC_NAMES = ("accuracy", "precision", "sensitivity", "fall_out", "f_score", "mcc")


def confusion(y, scores, theta: float) -> ConfusionMatrix:
    """Confusion counts of the thresholded scores against truth."""
    y = np.asarray(y)
    scores = np.asarray(scores)
    if y.shape != scores.shape:
        raise EvalError(f"length mismatch: y {y.shape} vs scores {scores.shape}")
    pred = scores >= theta
    actual = y == 1
    tp = int(np.sum(pred & actual))
    fp = int(np.sum(pred & ~actual))
    fn = int(np.sum(~pred & actual))
    tn = int(np.sum(~pred & ~actual))
    return ConfusionMatrix(tp, fp, tn, fn)


def metrics(c: ConfusionMatrix) -> MetricSet:
    """The six measures; every zero-denominator case evaluates to 0
    (the MCC rule extended to the ratio measures so sweeps stay total)."""
    n = c.n
    if n < 1:
        raise EvalError("empty confusion matrix")
    accuracy = (c.tp + c.tn) / n
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else 0.0
    sensitivity = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else 0.0
    fall_out = c.fp / (c.fp + c.tn) if (c.fp + c.tn) > 0 else 0.0
    f_score = (2.0 * sensitivity * precision / (sensitivity + precision)
               if (sensitivity + precision) > 0 else 0.0)
    denom = ((c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn))
    mcc = ((c.tp * c.tn - c.fp * c.fn) / np.sqrt(denom)) if denom > 0 else 0.0
    return MetricSet(accuracy, precision, sensitivity, fall_out, f_score, float(mcc))


def roc_auc(y, scores):
    """ROC staircase over unique score thresholds and its trapezoid area.

    Ties are grouped, so the area equals the Mann-Whitney concordance
    P(s+ > s-) + 0.5 P(s+ = s-). Returns (points, auc) with points an
    (m, 2) array of (fall-out, sensitivity) from (0,0) to (1,1).
    """
    y = np.asarray(y)
    scores = np.asarray(scores, dtype=np.float64)
    if y.shape != scores.shape:
        raise EvalError("length mismatch")
    n_pos = int(np.sum(y == 1))
    n_neg = y.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvalError("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    ys = y[order]
    ss = scores[order]
    boundaries = np.nonzero(np.diff(ss))[0]
    group_ends = np.append(boundaries, ys.shape[0] - 1)
    cum_tp = np.cumsum(ys == 1)
    cum_fp = np.cumsum(ys == 0)
    tpr = np.concatenate(([0.0], cum_tp[group_ends] / n_pos))
    fpr = np.concatenate(([0.0], cum_fp[group_ends] / n_neg))
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) * 0.5))
    return np.column_stack((fpr, tpr)), auc


def null_expectations(theta: float, prevalence: float = DEFAULT_PREVALENCE) -> MetricSet:
    """Expected measures of the uniform-random-score null classifier.

    With scores ~ Uniform(0,1) independent of truth, P(predict 1) = 1-theta,
    so accuracy = rho + (1-2 rho) theta, expected precision equals the
    prevalence, and sensitivity equals 1-theta. (The source table prints
    the precision and sensitivity rows swapped; this is the assignment
    consistent with its own accuracy and F-score rows.)
    """
    if not 0.0 <= theta < 1.0:
        raise EvalError("theta must be in [0, 1)")
    rho = prevalence
    accuracy = rho + (1.0 - 2.0 * rho) * theta
    precision = rho
    sensitivity = 1.0 - theta
    fall_out = 1.0 - theta
    f_score = (2.0 * rho * (1.0 - theta) / (rho + 1.0 - theta)
               if (rho + 1.0 - theta) > 0 else 0.0)
    return MetricSet(accuracy, precision, sensitivity, fall_out, f_score, 0.0)


def sweep_metrics(y, scores, grid: np.ndarray | None = None) -> dict:
    """Metric curves over the theta grid; returns {metric: array}."""
    grid = theta_grid() if grid is None else grid
    curves = {name: np.zeros(grid.shape[0]) for name in METRIC_NAMES}
    for i, theta in enumerate(grid):
        m = metrics(confusion(y, scores, float(theta)))
        for name, value in m.as_dict().items():
            curves[name][i] = value
    return curves


@dataclass
class SweepResult:
    theta_mcc_max: float
    theta_f_max: float
    curves: dict
    grid: np.ndarray
    metrics_at_mcc_max: MetricSet
    metrics_at_f_max: MetricSet


def sweep_and_select(y, scores) -> SweepResult:
    """Sweep the grid and pick the MCC- and F-score-maximizing thresholds.

    Ties resolve to the smallest theta (np.argmax takes the first max).
    """
    grid = theta_grid()
    curves = sweep_metrics(y, scores, grid)
    i_mcc = int(np.argmax(curves["mcc"]))
    i_f = int(np.argmax(curves["f_score"]))
    return SweepResult(
        theta_mcc_max=float(grid[i_mcc]),
        theta_f_max=float(grid[i_f]),
        curves=curves,
        grid=grid,
        metrics_at_mcc_max=metrics(confusion(y, scores, float(grid[i_mcc]))),
        metrics_at_f_max=metrics(confusion(y, scores, float(grid[i_f]))),
    )


# ---------------------------------------------------------------------------
# multi-split ensembles
# ---------------------------------------------------------------------------

DEFAULT_TREE_GRIDS = {
    "rf": [{"n_trees": 100, "min_leaf": 5}],
    "gbrt": [{"n_cycles": 100, "learn_rate": 0.1, "min_leaf": 5, "max_splits": 10}],
}


def train_method(method: str, X, y, master_seed: int, cv_key: tuple,
                 k: int = 10, tree_grids: dict | None = None,
                 cv_obj_tol: float = None, cv_max_sweeps: int = None,
                 feature_names: list | None = None):
    """Fit one of the three methods with its internal CV on (X, y)."""
    grids = dict(DEFAULT_TREE_GRIDS)
    if tree_grids:
        grids.update(tree_grids)
    cv_kwargs = {}
    if cv_obj_tol is not None:
        cv_kwargs["obj_tol"] = cv_obj_tol
    if cv_max_sweeps is not None:
        cv_kwargs["max_sweeps_per_lambda"] = cv_max_sweeps
    if method == "lr_l1":
        cv = models.cv_lambda(X, y, k=k, master_seed=master_seed, cv_key=cv_key,
                              **cv_kwargs)
        model = models.fit_lr_l1(X, y, cv.lambda_star, feature_names=feature_names)
        return model, {"lambda_star": cv.lambda_star}
    if method == "rf":
        grid = grids["rf"]
        combo = grid[0] if len(grid) == 1 else models.tune_tree_hparams(
            X, y, "rf", grid, k=k, master_seed=master_seed, cv_key=cv_key)
        model = models.fit_forest(X, y, models.ForestHParams(**combo),
                                  master_seed=master_seed, key=cv_key,
                                  feature_names=feature_names)
        return model, {"hparams": combo}
    if method == "gbrt":
        grid = grids["gbrt"]
        combo = grid[0] if len(grid) == 1 else models.tune_tree_hparams(
            X, y, "gbrt", grid, k=k, master_seed=master_seed, cv_key=cv_key)
        model = models.fit_gbrt(X, y, models.GbrtHParams(**combo),
                                feature_names=feature_names)
        return model, {"hparams": combo}
    raise EvalError(f"unknown method {method!r}")


@dataclass
class EnsembleResult:
    method: str
    n_splits: int
    grid: np.ndarray
    mean_curves: dict   # metric -> (100,) mean over splits
    std_curves: dict    # metric -> (100,) std over splits
    aucs: np.ndarray    # (n_splits,)
    roc_points: list    # per split (m, 2) arrays
    theta_mcc_max: float
    theta_f_max: float
    details: list = field(default_factory=list)

    def metrics_at(self, theta: float) -> dict:
        i = int(np.nonzero(np.isclose(self.grid, theta))[0][0])
        return {name: float(self.mean_curves[name][i]) for name in METRIC_NAMES}


def ensemble_experiment(X, y, method: str = "lr_l1", n_splits: int = 100,
                        test_fraction: float = 0.2, k: int = 10,
                        master_seed: int = 0, tree_grids: dict | None = None,
                        cv_obj_tol: float = None, cv_max_sweeps: int = None,
                        n_jobs: int = 1) -> EnsembleResult:
    """Train/evaluate over many stratified 80/20 splits.

    Every split trains with internal CV on the training side and sweeps the
    theta grid on the held-out side; curves aggregate pointwise mean and
    standard deviation, and the per-split AUCs form the comparison ensemble.
    Deterministic given the master seed regardless of worker scheduling.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    grid = theta_grid()

    def run_split(i: int):
        rng = rng_stream(master_seed, STREAM_SPLIT, i)
        train_idx, test_idx = stratified_split(y, test_fraction, rng)
        model, detail = train_method(
            method, X[train_idx], y[train_idx].astype(np.float64),
            master_seed, (STREAM_SPLIT, i), k=k, tree_grids=tree_grids,
            cv_obj_tol=cv_obj_tol, cv_max_sweeps=cv_max_sweeps)
        scores = model.predict_proba(X[test_idx])
        curves = sweep_metrics(y[test_idx], scores, grid)
        points, auc = roc_auc(y[test_idx], scores)
        return curves, auc, points, detail

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run_split, range(n_splits)))
    else:
        results = [run_split(i) for i in range(n_splits)]

    stacked = {name: np.stack([r[0][name] for r in results]) for name in METRIC_NAMES}
    mean_curves = {name: arr.mean(axis=0) for name, arr in stacked.items()}
    std_curves = {name: arr.std(axis=0) for name, arr in stacked.items()}
    aucs = np.array([r[1] for r in results])
    i_mcc = int(np.argmax(mean_curves["mcc"]))
    i_f = int(np.argmax(mean_curves["f_score"]))
    return EnsembleResult(
        method=method, n_splits=n_splits, grid=grid,
        mean_curves=mean_curves, std_curves=std_curves, aucs=aucs,
        roc_points=[r[2] for r in results],
        theta_mcc_max=float(grid[i_mcc]), theta_f_max=float(grid[i_f]),
        details=[r[3] for r in results])


def compare_auc(aucs_a, aucs_b, alpha: float = 0.01) -> dict:
    """Variance F-test, then pooled or Welch t-test on the AUC ensembles.

    The Welch flavor is used when the F-test rejects equal variances at
    ``alpha``; both p-values and the decision are reported.
    """
    a = list(map(float, aucs_a))
    b = list(map(float, aucs_b))
    if len(a) != len(b) or len(a) < 2:
        raise EvalError("AUC ensembles must have equal size >= 2")
    f_res = f_test_variances(a, b)
    variances_differ = f_res["p_value"] < alpha
    t_res = t_test_means(a, b, welch=variances_differ)
    return {
        "f_statistic": f_res["statistic"],
        "f_p_value": f_res["p_value"],
        "variances_differ": bool(variances_differ),
        "test_used": "welch" if variances_differ else "pooled",
        "t_statistic": t_res["statistic"],
        "t_p_value": t_res["p_value"],
        "mean_a": float(np.mean(a)),
        "mean_b": float(np.mean(b)),
        "alpha": alpha,
    }


# ---------------------------------------------------------------------------
# bootstrap coefficient stability
# ---------------------------------------------------------------------------

@dataclass
class BootstrapResult:
    feature_names: list
    coefficients: np.ndarray      # (B, p) standardized per the chosen mode
    selection_frequency: np.ndarray
    median: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    lambda_stars: np.ndarray
    standardize_mode: str
    selected_mask: np.ndarray     # frequency >= 0.9

    def table(self):
        import pandas as pd

        df = pd.DataFrame({
            "predictor": self.feature_names,
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "selection_frequency": self.selection_frequency,
            "zero_fraction": 1.0 - self.selection_frequency,
            "selected": self.selected_mask,
        })
        order = np.argsort(-np.abs(df["median"].to_numpy()), kind="stable")
        return df.iloc[order].reset_index(drop=True)


def bootstrap_coefficients(X, y, B: int = 500, k: int = 10, master_seed: int = 0,
                           standardize_mode: str = "divide",
                           selection_threshold: float = 0.9,
                           feature_names: list | None = None,
                           cv_obj_tol: float = None, cv_max_sweeps: int = None,
                           n_jobs: int = 1) -> BootstrapResult:
    """Coefficient distributions over stratified bootstrap refits.

    Each resample gets its own cross-validated lambda and an exact refit;
    coefficients are reported standardized per ``standardize_mode``:
    "divide" (raw coefficient / predictor std, the stated convention) or
    "multiply" (raw coefficient * std, the effect-size convention).
    """
    if standardize_mode not in ("divide", "multiply"):
        raise EvalError(f"unknown standardize mode {standardize_mode!r}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.float64)
    p = X.shape[1]
    names = list(feature_names) if feature_names is not None else [
        f"x{j}" for j in range(p)]
    full_std = X.std(axis=0)
    full_std = np.where(full_std == 0.0, 1.0, full_std)
    cv_kwargs = {}
    if cv_obj_tol is not None:
        cv_kwargs["obj_tol"] = cv_obj_tol
    if cv_max_sweeps is not None:
        cv_kwargs["max_sweeps_per_lambda"] = cv_max_sweeps

    def run_resample(b: int):
        rng = rng_stream(master_seed, STREAM_BOOTSTRAP, b)
        idx = stratified_bootstrap(y, rng)
        Xb = X[idx]
        yb = y[idx]
        cv = models.cv_lambda(Xb, yb, k=k, master_seed=master_seed,
                              cv_key=(STREAM_BOOTSTRAP, b), **cv_kwargs)
        model = models.fit_lr_l1(Xb, yb, cv.lambda_star)
        return model.coef_raw, cv.lambda_star

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run_resample, range(B)))
    else:
        results = [run_resample(b) for b in range(B)]

    raw = np.stack([r[0] for r in results])
    lambda_stars = np.array([r[1] for r in results])
    if standardize_mode == "divide":
        coefs = raw / full_std
    else:
        coefs = raw * full_std
    freq = (raw != 0.0).mean(axis=0)
    return BootstrapResult(
        feature_names=names,
        coefficients=coefs,
        selection_frequency=freq,
        median=np.percentile(coefs, 50, axis=0),
        q1=np.percentile(coefs, 25, axis=0),
        q3=np.percentile(coefs, 75, axis=0),
        lambda_stars=lambda_stars,
        standardize_mode=standardize_mode,
        selected_mask=freq >= selection_threshold,
    )
