"""Online balanced k-means with centroid-based inference of a point's last coordinate."""
from obkm.model import (
    AssignmentResult,
    ClusterModel,
    Hyperparams,
    assign,
    fit_stream,
    init_model,
    point_loss,
    step,
    update_balance_weights,
    update_centroid,
)
from obkm.inference import METHODS, InferenceEstimate, InferenceParams, infer_all

__version__ = "0.1.0"

__all__ = [
    "AssignmentResult",
    "ClusterModel",
    "Hyperparams",
    "InferenceEstimate",
    "InferenceParams",
    "METHODS",
    "assign",
    "fit_stream",
    "infer_all",
    "init_model",
    "point_loss",
    "step",
    "update_balance_weights",
    "update_centroid",
]
