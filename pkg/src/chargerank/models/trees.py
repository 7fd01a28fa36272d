"""Regression trees, bagged forests, and gradient-boosted trees.

Trees are grown best-first (largest MSE reduction first) with an exhaustive
(feature, threshold) search per node; leaves predict the weighted mean of
their members, so a tree's prediction is the Eq-style weighted average of
training responses. Splitting uses the shared kernel, so compiled and pure
backends grow identical trees.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from chargerank._kernels import best_split
from chargerank.models.common import (
    STREAM_FOLD,
    STREAM_TREE,
    ModelError,
    rank_auc,
    rng_stream,
    stratified_kfold,
)


@dataclass(frozen=True)
class ForestHParams:
    n_trees: int = 100
    min_leaf: int = 5
    max_splits: int | None = None  # None: unlimited
    mtry: int | None = None        # None: ceil(p / 3)

    def __post_init__(self):
        if self.n_trees < 1 or self.min_leaf < 1:
            raise ModelError("forest needs n_trees >= 1 and min_leaf >= 1")


@dataclass(frozen=True)
class GbrtHParams:
    n_cycles: int = 100
    learn_rate: float = 0.1
    min_leaf: int = 5
    max_splits: int | None = 10
    stop_threshold: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.learn_rate <= 1.0:
            raise ModelError("learn rate must be in (0, 1]")
        if self.n_cycles < 0 or self.min_leaf < 1:
            raise ModelError("invalid GBRT hyperparameters")


def _seq_sum(v: np.ndarray) -> float:
    """Strictly sequential sum (cumsum order), shared with the kernels."""
    return float(np.cumsum(v)[-1]) if v.shape[0] else 0.0


class RegressionTree:
    """Array-encoded binary regression tree with stored leaf members."""

    __slots__ = ("feature", "threshold", "left", "right", "value", "leaf_rows",
                 "leaf_counts", "n_splits")

    def __init__(self, feature, threshold, left, right, value, leaf_rows,
                 leaf_counts, n_splits):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.leaf_rows = leaf_rows      # node id -> row indices (leaves only)
        self.leaf_counts = leaf_counts  # node id -> per-row weights
        self.n_splits = n_splits

    def leaf_ids(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                return node
            safe_feat = np.where(internal, feat, 0)
            go_left = X[rows, safe_feat] <= self.threshold[node]
            node = np.where(internal,
                            np.where(go_left, self.left[node], self.right[node]),
                            node)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.leaf_ids(X)]

    def leaf_weights(self, x: np.ndarray):
        """Training-row weights realizing the prediction at ``x``.

        Returns (row_indices, weights); weights sum to 1 and the weighted
        response mean equals ``predict(x)``.
        """
        leaf = int(self.leaf_ids(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])
        rows = self.leaf_rows[leaf]
        counts = self.leaf_counts[leaf]
        return rows, counts / counts.sum()


def grow_tree(X: np.ndarray, y: np.ndarray, counts: np.ndarray,
              min_leaf: float, max_splits: int | None,
              mtry: int | None = None, rng: np.random.Generator | None = None,
              sort_idx: np.ndarray | None = None) -> RegressionTree:
    """Best-first CART growth: apply the largest-gain split available until
    the split budget is exhausted or no admissible split improves the fit."""
    Xf = np.asfortranarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    counts = np.ascontiguousarray(counts, dtype=np.float64)
    n, p = Xf.shape
    if sort_idx is None:
        sort_idx = np.asfortranarray(np.argsort(Xf, axis=0, kind="stable"),
                                     dtype=np.int32)
    all_feats = np.arange(p, dtype=np.int64)
    if max_splits is None:
        max_splits = n  # a tree cannot exceed n-1 splits anyway

    feature: list = []
    threshold: list = []
    left: list = []
    right: list = []
    value: list = []
    masks: dict = {}

    def new_node(mask: np.ndarray) -> int:
        node_id = len(feature)
        rows = np.nonzero(mask & (counts > 0.0))[0]
        cnt = counts[rows]
        total = _seq_sum(cnt)
        total_sum = _seq_sum(cnt * y[rows])
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(total_sum / total if total > 0 else 0.0)
        masks[node_id] = (mask, total, total_sum)
        return node_id

    def candidate(node_id: int):
        mask, total, total_sum = masks[node_id]
        if total < 2 * min_leaf:
            return None
        if mtry is not None and mtry < p:
            feats = np.sort(rng.choice(p, size=mtry, replace=False)).astype(np.int64)
        else:
            feats = all_feats
        parent_score = total_sum * total_sum / total
        f, thr, gain = best_split(Xf, sort_idx, mask.astype(np.uint8), y, counts,
                                  feats, total, total_sum, parent_score, min_leaf)
        if f < 0 or gain <= 0.0:
            return None
        return f, thr, gain

    root_mask = np.ones(n, dtype=bool)
    root = new_node(root_mask)
    heap: list = []
    cand = candidate(root)
    if cand is not None:
        heapq.heappush(heap, (-cand[2], root, cand))
    n_splits = 0
    while heap and n_splits < max_splits:
        _negg, node_id, (f, thr, _gain) = heapq.heappop(heap)
        mask, _total, _tsum = masks[node_id]
        left_mask = mask & (Xf[:, f] <= thr)
        right_mask = mask & ~(Xf[:, f] <= thr)
        left_id = new_node(left_mask)
        right_id = new_node(right_mask)
        feature[node_id] = int(f)
        threshold[node_id] = float(thr)
        left[node_id] = left_id
        right[node_id] = right_id
        n_splits += 1
        for child in (left_id, right_id):
            c = candidate(child)
            if c is not None:
                heapq.heappush(heap, (-c[2], child, c))

    leaf_rows: dict = {}
    leaf_counts: dict = {}
    for node_id in range(len(feature)):
        if feature[node_id] == -1:
            mask, _t, _s = masks[node_id]
            rows = np.nonzero(mask & (counts > 0.0))[0]
            leaf_rows[node_id] = rows
            leaf_counts[node_id] = counts[rows].copy()
    return RegressionTree(feature, threshold, left, right, value, leaf_rows,
                          leaf_counts, n_splits)


@dataclass
class ForestModel:
    """Bagged regression trees; prediction is the mean over trees."""

    trees: list
    bootstrap_counts: list
    hparams: ForestHParams
    feature_names: list | None = None

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)


def fit_forest(X, y, hparams: ForestHParams = ForestHParams(),
               master_seed: int = 0, key: tuple = (0,),
               feature_names: list | None = None) -> ForestModel:
    """Train ``n_trees`` CART trees on independent bootstrap resamples,
    each split searched over a fresh random feature subset."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < 2 * hparams.min_leaf:
        raise ModelError(f"need at least {2 * hparams.min_leaf} rows to split")
    mtry = hparams.mtry if hparams.mtry is not None else math.ceil(p / 3)
    Xf = np.asfortranarray(X)
    sort_idx = np.asfortranarray(np.argsort(Xf, axis=0, kind="stable"), dtype=np.int32)
    trees = []
    counts_used = []
    for t in range(hparams.n_trees):
        rng = rng_stream(master_seed, STREAM_TREE, *key, t)
        counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        tree = grow_tree(Xf, y, counts, float(hparams.min_leaf), hparams.max_splits,
                         mtry=mtry, rng=rng, sort_idx=sort_idx)
        trees.append(tree)
        counts_used.append(counts)
    return ForestModel(trees, counts_used, hparams,
                       list(feature_names) if feature_names is not None else None)


@dataclass
class GbrtModel:
    """Boosted regression trees: F_m = F_{m-1} + rate * tree_m(residuals)."""

    f0: float
    trees: list
    learn_rate: float
    hparams: GbrtHParams
    train_mse: list = field(default_factory=list)
    feature_names: list | None = None

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        acc = np.full(X.shape[0], self.f0)
        for tree in self.trees:
            acc += self.learn_rate * tree.predict(X)
        return acc

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.clip(self.predict_raw(X), 0.0, 1.0)


def fit_gbrt(X, y, hparams: GbrtHParams = GbrtHParams(),
             feature_names: list | None = None) -> GbrtModel:
    """Boost least-squares trees on residuals until the cycle budget or a
    sub-threshold MSE improvement."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    Xf = np.asfortranarray(X)
    sort_idx = np.asfortranarray(np.argsort(Xf, axis=0, kind="stable"), dtype=np.int32)
    counts = np.ones(n)
    f0 = float(y.mean())
    F = np.full(n, f0)
    trees: list = []
    mses: list = [float(np.mean((y - F) ** 2))]
    for _cycle in range(hparams.n_cycles):
        resid = y - F
        tree = grow_tree(Xf, resid, counts, float(hparams.min_leaf),
                         hparams.max_splits, sort_idx=sort_idx)
        if tree.n_splits == 0 and abs(tree.value[0]) == 0.0:
            break  # nothing left to fit
        trees.append(tree)
        F = F + hparams.learn_rate * tree.predict(Xf)
        mse = float(np.mean((y - F) ** 2))
        improvement = mses[-1] - mse
        mses.append(mse)
        if improvement < hparams.stop_threshold:
            break
    model = GbrtModel(f0, trees, hparams.learn_rate, hparams,
                      train_mse=mses,
                      feature_names=list(feature_names) if feature_names is not None else None)
    return model


def expand_grid(grid: dict) -> list:
    """Cross product of per-parameter value lists, in declaration order."""
    combos = [{}]
    for key, values in grid.items():
        combos = [dict(c, **{key: v}) for c in combos for v in values]
    return combos


def tune_tree_hparams(X, y, method: str, grid: list, k: int = 10,
                      master_seed: int = 0, cv_key: tuple = (0,)) -> dict:
    """Grid search over hyperparameter combos by mean out-of-fold AUC.

    Uses the same stratified fold stream as ``cv_lambda`` for the same
    ``cv_key``; ties keep the earliest combo in grid order.
    """
    if not grid:
        raise ModelError("empty hyperparameter grid")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rng = rng_stream(master_seed, STREAM_FOLD, *cv_key)
    folds = stratified_kfold(y, k, rng)
    best_combo = None
    best_auc = -np.inf
    for ci, combo in enumerate(grid):
        total = 0.0
        for fi, (train_idx, val_idx) in enumerate(folds):
            if method == "rf":
                model = fit_forest(X[train_idx], y[train_idx],
                                   ForestHParams(**combo),
                                   master_seed=master_seed,
                                   key=(*cv_key, ci, fi))
            elif method == "gbrt":
                model = fit_gbrt(X[train_idx], y[train_idx], GbrtHParams(**combo))
            else:
                raise ModelError(f"unknown tree method {method!r}")
            total += rank_auc(y[val_idx], model.predict_proba(X[val_idx]))
        mean_auc = total / len(folds)
        if mean_auc > best_auc:
            best_auc = mean_auc
            best_combo = combo
    return dict(best_combo)
