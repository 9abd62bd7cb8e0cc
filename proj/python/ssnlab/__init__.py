"""Python bindings for the stochastic segmentation toolkit."""

from ._core import (
    Error,
    LabelMap,
    LowRankGaussian,
    ValidationError,
    apply_deviation_scale,
    dense_covariance,
    dense_log_prob,
    dsc,
    evaluate_toy,
    ged_squared,
    gradient_check,
    iou_distance,
    load_ssnt,
    log_prob,
    marginal_variance,
    most_likely_prediction,
    sample,
    sample_diversity,
    save_ssnt,
    ssn_mc_loss,
    ssn_mc_loss_and_grad,
    train_toy,
)

__all__ = [
    "Error",
    "LabelMap",
    "LowRankGaussian",
    "ValidationError",
    "apply_deviation_scale",
    "dense_covariance",
    "dense_log_prob",
    "dsc",
    "evaluate_toy",
    "ged_squared",
    "gradient_check",
    "iou_distance",
    "load_ssnt",
    "log_prob",
    "marginal_variance",
    "most_likely_prediction",
    "sample",
    "sample_diversity",
    "save_ssnt",
    "ssn_mc_loss",
    "ssn_mc_loss_and_grad",
    "train_toy",
]
