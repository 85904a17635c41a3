"""Predict the last coordinate of a point from its first ``d - 1`` coordinates.

Every estimator only looks at the trained centroids and cluster counts.
Distances are Euclidean and are taken between the query and the first
``d - 1`` coordinates of each centroid (the *projection*); the value that
gets averaged is each centroid's last coordinate.

Each method has a batch form (``*_batch``, taking an ``(m, d-1)`` array and
returning ``(m,)`` estimates) used by the evaluation loop, and a single
query form returning an :class:`InferenceEstimate`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from obkm.model import ClusterModel

METHODS = (
    "euclid",
    "norm_weights",
    "cluster_size",
    "mean_merge",
    "nwcs_merge",
    "nwed_merge",
    "cs_exp",
)


class InsufficientClustersError(ValueError):
    """Raised when a neighbour-based method asks for more clusters than exist."""


@dataclass(frozen=True)
class InferenceParams:
    """Knobs shared by the estimators.

    ``temperature`` scales distances inside the softmax of ``norm_weights``;
    ``neighbor_count`` is how many nearest clusters ``cluster_size`` and
    ``cs_exp`` use; ``merge_alpha`` mixes the two halves of the merged
    methods; ``cs_beta`` is the exponent scale of ``cs_exp``, whose weights
    are renormalised to sum to one unless ``normalize_cs_exp`` is off.
    """

    temperature: float = 1.0
    neighbor_count: int = 5
    merge_alpha: float = 0.5
    cs_beta: float = 1.0
    normalize_cs_exp: bool = True

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature!r}")
        if isinstance(self.neighbor_count, bool) or int(self.neighbor_count) != self.neighbor_count \
                or self.neighbor_count < 1:
            raise ValueError(f"neighbor_count must be a positive integer, got {self.neighbor_count!r}")
        if not 0.0 <= self.merge_alpha <= 1.0:
            raise ValueError(f"merge_alpha must lie in [0, 1], got {self.merge_alpha!r}")
        if not np.isfinite(self.cs_beta):
            raise ValueError("cs_beta must be finite")

    def check_model(self, model: ClusterModel) -> None:
        if self.neighbor_count > model.k:
            raise InsufficientClustersError(
                f"neighbor_count={self.neighbor_count} exceeds the number of clusters k={model.k}"
            )


@dataclass(frozen=True)
class InferenceEstimate:
    method: str
    value: float


@dataclass(frozen=True)
class NeighborSet:
    indices: np.ndarray
    sizes: np.ndarray
    distances: np.ndarray


def _queries(model: ClusterModel, known) -> np.ndarray:
    q = np.asarray(known, dtype=float)
    if q.ndim == 1:
        q = q[None, :]
    if q.ndim != 2 or q.shape[1] != model.dim - 1:
        raise ValueError(f"queries must have {model.dim - 1} known coordinates, got shape {q.shape}")
    return q


def projected_distances(model: ClusterModel, known) -> np.ndarray:
    """``(m, k)`` Euclidean distances between queries and centroid projections."""
    q = _queries(model, known)
    proj = model.centroids[:, :-1]
    diff = q[:, None, :] - proj[None, :, :]
    return np.sqrt(np.einsum("mkj,mkj->mk", diff, diff))


def _targets(model: ClusterModel) -> np.ndarray:
    return model.centroids[:, -1]


def softmax_weights(dist: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise ``exp(-t*d) / sum exp(-t*d)``, shifted by the row max for stability."""
    z = -temperature * np.asarray(dist, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def nearest_neighbors(model: ClusterModel, known, count: int) -> list[NeighborSet]:
    dist = projected_distances(model, known)
    if count > model.k:
        raise InsufficientClustersError(f"asked for {count} neighbours but k={model.k}")
    order = np.argsort(dist, axis=1, kind="stable")[:, :count]
    return [
        NeighborSet(idx, model.counts[idx].copy(), row[idx])
        for idx, row in zip(order, dist)
    ]


def _neighbor_arrays(model: ClusterModel, dist: np.ndarray, count: int):
    if count > model.k:
        raise InsufficientClustersError(f"asked for {count} neighbours but k={model.k}")
    order = np.argsort(dist, axis=1, kind="stable")[:, :count]
    return model.counts[order].astype(float), _targets(model)[order]


def cluster_size_weights(sizes: np.ndarray) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=float)
    return sizes / sizes.sum(axis=-1, keepdims=True)


def cs_exp_weights(sizes: np.ndarray, cs_beta: float, normalize: bool = True) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=float)
    w = np.exp(-cs_beta * sizes / sizes.sum(axis=-1, keepdims=True))
    if normalize:
        w = w / w.sum(axis=-1, keepdims=True)
    return w


# -- batch estimators ----------------------------------------------------------

def euclid_batch(model: ClusterModel, known, dist=None) -> np.ndarray:
    if dist is None:
        dist = projected_distances(model, known)
    return _targets(model)[np.argmin(dist, axis=1)]


def norm_weights_batch(model: ClusterModel, known, p: InferenceParams, dist=None) -> np.ndarray:
    if dist is None:
        dist = projected_distances(model, known)
    return softmax_weights(dist, p.temperature) @ _targets(model)


def cluster_size_batch(model: ClusterModel, known, p: InferenceParams, dist=None) -> np.ndarray:
    if dist is None:
        dist = projected_distances(model, known)
    sizes, targets = _neighbor_arrays(model, dist, p.neighbor_count)
    return np.sum(cluster_size_weights(sizes) * targets, axis=1)


def cs_exp_batch(model: ClusterModel, known, p: InferenceParams, dist=None) -> np.ndarray:
    if dist is None:
        dist = projected_distances(model, known)
    sizes, targets = _neighbor_arrays(model, dist, p.neighbor_count)
    w = cs_exp_weights(sizes, p.cs_beta, p.normalize_cs_exp)
    return np.sum(w * targets, axis=1)


def merge(alpha: float, first, second):
    """``alpha * first + (1 - alpha) * second``."""
    return alpha * first + (1.0 - alpha) * second


def all_batch(model: ClusterModel, known, p: InferenceParams, overall_mean: float) -> dict[str, np.ndarray]:
    """Estimates of all seven methods for a batch of queries, keyed by method name."""
    p.check_model(model)
    dist = projected_distances(model, known)
    eu = euclid_batch(model, None, dist)
    nw = norm_weights_batch(model, None, p, dist)
    cs = cluster_size_batch(model, None, p, dist)
    a = p.merge_alpha
    return {
        "euclid": eu,
        "norm_weights": nw,
        "cluster_size": cs,
        "mean_merge": merge(a, overall_mean, nw),
        "nwcs_merge": merge(a, nw, cs),
        "nwed_merge": merge(a, nw, eu),
        "cs_exp": cs_exp_batch(model, None, p, dist),
    }


def method_batch(model: ClusterModel, known, method: str, p: InferenceParams,
                 overall_mean: float = 0.0) -> np.ndarray:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "euclid":
        return euclid_batch(model, known)
    if method == "norm_weights":
        return norm_weights_batch(model, known, p)
    if method == "cluster_size":
        return cluster_size_batch(model, known, p)
    if method == "cs_exp":
        return cs_exp_batch(model, known, p)
    return all_batch(model, known, p, overall_mean)[method]


# -- single query ------------------------------------------------------------------

def _one(method: str, values: np.ndarray) -> InferenceEstimate:
    return InferenceEstimate(method, float(values[0]))


def _single(model, known):
    known = np.asarray(known, dtype=float)
    if known.ndim != 1:
        raise ValueError("a single query is a 1-D vector of known coordinates")
    return known


def infer_euclid(model: ClusterModel, known) -> InferenceEstimate:
    """Last coordinate of the centroid whose projection is nearest (lowest index on ties)."""
    return _one("euclid", euclid_batch(model, _single(model, known)))


def infer_norm_weights(model: ClusterModel, known, p: InferenceParams) -> InferenceEstimate:
    return _one("norm_weights", norm_weights_batch(model, _single(model, known), p))


def infer_cluster_size(model: ClusterModel, known, p: InferenceParams) -> InferenceEstimate:
    """Count-weighted mean of the ``neighbor_count`` nearest centroids' last coordinates."""
    return _one("cluster_size", cluster_size_batch(model, _single(model, known), p))


def infer_mean_merge(model: ClusterModel, known, p: InferenceParams, overall_mean: float) -> InferenceEstimate:
    nw = infer_norm_weights(model, known, p).value
    return InferenceEstimate("mean_merge", float(merge(p.merge_alpha, overall_mean, nw)))


def infer_nwcs_merge(model: ClusterModel, known, p: InferenceParams) -> InferenceEstimate:
    nw = infer_norm_weights(model, known, p).value
    cs = infer_cluster_size(model, known, p).value
    return InferenceEstimate("nwcs_merge", float(merge(p.merge_alpha, nw, cs)))


def infer_nwed_merge(model: ClusterModel, known, p: InferenceParams) -> InferenceEstimate:
    nw = infer_norm_weights(model, known, p).value
    eu = infer_euclid(model, known).value
    return InferenceEstimate("nwed_merge", float(merge(p.merge_alpha, nw, eu)))


def infer_cs_exp(model: ClusterModel, known, p: InferenceParams) -> InferenceEstimate:
    return _one("cs_exp", cs_exp_batch(model, _single(model, known), p))


def infer_all(model: ClusterModel, known, p: InferenceParams, overall_mean: float) -> list[InferenceEstimate]:
    values = all_batch(model, _single(model, known), p, overall_mean)
    return [InferenceEstimate(m, float(values[m][0])) for m in METHODS]
