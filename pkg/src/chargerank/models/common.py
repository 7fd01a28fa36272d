"""Shared model utilities: seeded streams, stratified sampling, rank AUC."""

from __future__ import annotations

import numpy as np


class ModelError(ValueError):
    pass


# Stream tags for the master-seed split scheme: every consumer of
# randomness derives its generator as rng_stream(master, TAG, index...),
# which makes parallel work reproducible regardless of scheduling.
STREAM_SPLIT = 1
STREAM_FOLD = 2
STREAM_BOOTSTRAP = 3
STREAM_TREE = 4
STREAM_SCENARIO = 5
STREAM_NULL = 6


def rng_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (master seed, stream key)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((master_seed,) + key)))


def stratified_split(y: np.ndarray, test_fraction: float, rng: np.random.Generator):
    """Class-preserving train/test split; returns (train_idx, test_idx).

    Each class contributes round(fraction * class size) rows to the test
    set, so the test prevalence matches the full data within one sample.
    """
    y = np.asarray(y)
    test_parts = []
    train_parts = []
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.permutation(idx.shape[0])]
        n_test = int(np.floor(test_fraction * idx.shape[0] + 0.5))
        test_parts.append(idx[:n_test])
        train_parts.append(idx[n_test:])
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))
    return train, test


def stratified_kfold(y: np.ndarray, k: int, rng: np.random.Generator):
    """k folds preserving class proportions; every fold sees both classes.

    Returns a list of (train_idx, val_idx) pairs.
    """
    y = np.asarray(y)
    classes = np.unique(y)
    fold_members: list = [[] for _ in range(k)]
    for cls in classes:
        idx = np.nonzero(y == cls)[0]
        if idx.shape[0] < k:
            raise ModelError(
                f"class {cls!r} has {idx.shape[0]} rows, fewer than k={k} folds")
        idx = idx[rng.permutation(idx.shape[0])]
        for i, row in enumerate(idx):
            fold_members[i % k].append(int(row))
    folds = []
    all_rows = np.arange(y.shape[0])
    for f in range(k):
        val = np.sort(np.array(fold_members[f], dtype=np.int64))
        mask = np.ones(y.shape[0], dtype=bool)
        mask[val] = False
        train = all_rows[mask]
        if np.unique(y[val]).shape[0] < classes.shape[0]:
            raise ModelError(f"fold {f} lost a class; re-stratify")
        folds.append((train, val))
    return folds


def stratified_bootstrap(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bootstrap resample drawn within each class, preserving class counts."""
    y = np.asarray(y)
    parts = []
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        parts.append(idx[rng.integers(0, idx.shape[0], idx.shape[0])])
    return np.sort(np.concatenate(parts))


def rank_auc(y: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    y = np.asarray(y)
    scores = np.asarray(scores, dtype=np.float64)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ModelError("AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(y.shape[0])
    sv = scores[order]
    i = 0
    n = y.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def rank_auc_columns(y: np.ndarray, score_matrix: np.ndarray) -> np.ndarray:
    """rank_auc applied to each column of an (n, m) score matrix."""
    return np.array([rank_auc(y, score_matrix[:, j])
                     for j in range(score_matrix.shape[1])])
