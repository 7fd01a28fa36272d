"""Versioned JSON serialization for the three model kinds.

JSON float round-tripping is exact for doubles, so a saved model reproduces
its predictions bit-for-bit. Loading refuses unknown format/version tags.
"""

from __future__ import annotations

import json

import numpy as np

from chargerank.models.common import ModelError
from chargerank.models.linear import LrModel
from chargerank.models.trees import (
    ForestHParams,
    ForestModel,
    GbrtHParams,
    GbrtModel,
    RegressionTree,
)

MODEL_FORMAT = "chargerank-model"
MODEL_VERSION = 1


def _tree_to_dict(tree: RegressionTree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
        "n_splits": tree.n_splits,
        "leaf_rows": {str(k): v.tolist() for k, v in tree.leaf_rows.items()},
        "leaf_counts": {str(k): v.tolist() for k, v in tree.leaf_counts.items()},
    }


def _tree_from_dict(d: dict) -> RegressionTree:
    return RegressionTree(
        d["feature"], d["threshold"], d["left"], d["right"], d["value"],
        {int(k): np.asarray(v, dtype=np.int64) for k, v in d["leaf_rows"].items()},
        {int(k): np.asarray(v, dtype=np.float64) for k, v in d["leaf_counts"].items()},
        d["n_splits"],
    )


def model_to_dict(model) -> dict:
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION}
    if isinstance(model, LrModel):
        doc.update({
            "kind": "lr_l1",
            "beta0": model.beta0,
            "beta": model.beta.tolist(),
            "lambda": model.lambda_,
            "mean": model.mean.tolist(),
            "std": model.std.tolist(),
            "capped": model.capped,
            "n_sweeps": model.n_sweeps,
            "feature_names": model.feature_names,
        })
    elif isinstance(model, ForestModel):
        doc.update({
            "kind": "rf",
            "hparams": {
                "n_trees": model.hparams.n_trees,
                "min_leaf": model.hparams.min_leaf,
                "max_splits": model.hparams.max_splits,
                "mtry": model.hparams.mtry,
            },
            "trees": [_tree_to_dict(t) for t in model.trees],
            "bootstrap_counts": [c.tolist() for c in model.bootstrap_counts],
            "feature_names": model.feature_names,
        })
    elif isinstance(model, GbrtModel):
        doc.update({
            "kind": "gbrt",
            "f0": model.f0,
            "learn_rate": model.learn_rate,
            "hparams": {
                "n_cycles": model.hparams.n_cycles,
                "learn_rate": model.hparams.learn_rate,
                "min_leaf": model.hparams.min_leaf,
                "max_splits": model.hparams.max_splits,
                "stop_threshold": model.hparams.stop_threshold,
            },
            "trees": [_tree_to_dict(t) for t in model.trees],
            "train_mse": model.train_mse,
            "feature_names": model.feature_names,
        })
    else:
        raise ModelError(f"cannot serialize {type(model)!r}")
    return doc


def model_from_dict(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise ModelError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelError(
            f"model version {doc.get('version')!r} not supported "
            f"(expected {MODEL_VERSION})")
    kind = doc.get("kind")
    if kind == "lr_l1":
        return LrModel(
            beta0=doc["beta0"],
            beta=np.asarray(doc["beta"], dtype=np.float64),
            lambda_=doc["lambda"],
            mean=np.asarray(doc["mean"], dtype=np.float64),
            std=np.asarray(doc["std"], dtype=np.float64),
            capped=doc["capped"],
            n_sweeps=doc["n_sweeps"],
            feature_names=doc.get("feature_names"),
        )
    if kind == "rf":
        return ForestModel(
            trees=[_tree_from_dict(t) for t in doc["trees"]],
            bootstrap_counts=[np.asarray(c, dtype=np.float64)
                              for c in doc["bootstrap_counts"]],
            hparams=ForestHParams(**doc["hparams"]),
            feature_names=doc.get("feature_names"),
        )
    if kind == "gbrt":
        hp = GbrtHParams(**doc["hparams"])
        return GbrtModel(
            f0=doc["f0"],
            trees=[_tree_from_dict(t) for t in doc["trees"]],
            learn_rate=doc["learn_rate"],
            hparams=hp,
            train_mse=doc["train_mse"],
            feature_names=doc.get("feature_names"),
        )
    raise ModelError(f"unknown model kind {kind!r}")


def save_model(path, model) -> None:
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f)
        f.write("\n")


def load_model(path):
    with open(path) as f:
        return model_from_dict(json.load(f))
