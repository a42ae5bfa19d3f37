"""Explaining lesion uncertainty with sparse linear models."""
from .elasticnet import ElasticNetModel, fit_elasticnet, objective
from .matrix import TARGET_COLUMNS, FeatureMatrix
from .selection import (
    Choice,
    Grid,
    PipelineFit,
    Standardizer,
    cv_select,
    fit_pipeline,
    fit_report,
    group_folds,
    per_patient_r2,
    r2,
    repeat_seeds,
    standardize,
)
from .tree import RegressionTree, elimination_order, fit_tree, rfe

__all__ = [
    "TARGET_COLUMNS",
    "Choice",
    "ElasticNetModel",
    "FeatureMatrix",
    "Grid",
    "PipelineFit",
    "RegressionTree",
    "Standardizer",
    "cv_select",
    "elimination_order",
    "fit_elasticnet",
    "fit_pipeline",
    "fit_report",
    "fit_tree",
    "group_folds",
    "objective",
    "per_patient_r2",
    "r2",
    "repeat_seeds",
    "rfe",
    "standardize",
]
