"""The three classifiers, OLS screening, CV selection, and serialization."""

from chargerank.models.common import (
    ModelError,
    rank_auc,
    rng_stream,
    stratified_bootstrap,
    stratified_kfold,
    stratified_split,
)
from chargerank.models.linear import (
    CvLambdaResult,
    LrModel,
    cv_lambda,
    fit_lr_l1,
    lambda_grid,
    lambda_max,
    ols_r2,
    standardize_columns,
)
from chargerank.models.serialize import (
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)
from chargerank.models.trees import (
    ForestHParams,
    ForestModel,
    GbrtHParams,
    GbrtModel,
    RegressionTree,
    expand_grid,
    fit_forest,
    fit_gbrt,
    grow_tree,
    tune_tree_hparams,
)

import numpy as np


def classify(scores, theta: float):
    """Binary prediction: 1 iff score >= theta (boundary inclusive)."""
    if not 0.0 <= theta < 1.0:
        raise ModelError(f"theta={theta} must be in [0, 1)")
    scores = np.asarray(scores)
    return (scores >= theta).astype(np.int64)


def predict_proba(model, X):
    """Scores in [0, 1] from any of the three model kinds."""
    return model.predict_proba(X)


__all__ = [
    "ModelError", "rank_auc", "rng_stream", "stratified_bootstrap",
    "stratified_kfold", "stratified_split", "CvLambdaResult", "LrModel",
    "cv_lambda", "fit_lr_l1", "lambda_grid", "lambda_max", "ols_r2",
    "standardize_columns", "load_model", "model_from_dict", "model_to_dict",
    "save_model", "ForestHParams", "ForestModel", "GbrtHParams", "GbrtModel",
    "RegressionTree", "expand_grid", "fit_forest", "fit_gbrt", "grow_tree",
    "tune_tree_hparams", "classify", "predict_proba",
]
