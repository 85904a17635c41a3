"""Online balanced k-means.

Each streamed point goes through the same four-step cycle: assign it to the
cluster with the smallest penalized distance, pull that centroid toward the
point, bump the count, then recompute every cluster's balance weight from
the count statistics.

Two balance rules are supported:

``"zscore"`` (default)
    ``w_i = beta * (n_i - E[n]) / sqrt(V[n])`` and the assignment score is
    ``d(x, mu_i) + w_i``.  Over-full clusters (positive ``w_i``) become less
    attractive, so for ``beta > 0`` cluster sizes are pulled together.

``"literal"``
    ``w_i = beta * (n_i - E[n]) / V[n]`` and the score is ``d(x, mu_i) - w_i``,
    exactly as the update is usually written.  For ``beta > 0`` this favours
    clusters that are already large, and because ``V[n]`` grows roughly
    quadratically with the stream length the weights fade out over time.

In both rules the weights are a ``beta``-scaled, mean-centred function of the
counts, so they sum to zero, and they are all zero while the counts are
perfectly balanced (``V[n] < VARIANCE_EPS``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

VARIANCE_EPS = 1e-12

DISTANCE_MODES = ("euclidean", "squared_euclidean")
BALANCE_RULES = ("zscore", "literal")


@dataclass(frozen=True)
class Hyperparams:
    """Hyperparameters of the online balanced k-means.

    Attributes:
        k: Number of clusters.
        alpha: Learning rate in ``(0, 1]``; the fraction of the way each
            assigned centroid moves toward the new point.
        beta: Balancing scale. ``0`` gives plain online k-means.
        distance_mode: ``"euclidean"`` or ``"squared_euclidean"``.
        balance_rule: ``"zscore"`` or ``"literal"`` (see module docstring).
    """

    k: int = 300
    alpha: float = 0.6
    beta: float = 0.07
    distance_mode: str = "euclidean"
    balance_rule: str = "zscore"

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not np.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta!r}")
        if self.distance_mode not in DISTANCE_MODES:
            raise ValueError(f"unknown distance_mode {self.distance_mode!r}")
        if self.balance_rule not in BALANCE_RULES:
            raise ValueError(f"unknown balance_rule {self.balance_rule!r}")


@dataclass
class ClusterModel:
    """Complete state of the online algorithm.

    ``centroids`` is a ``(k, dim)`` float array, ``counts`` a ``(k,)`` int
    array and ``balance_weights`` a ``(k,)`` float array.  The model is
    mutated in place by :func:`update_centroid`, :func:`update_balance_weights`
    and :func:`step`.
    """

    dim: int
    centroids: np.ndarray
    counts: np.ndarray
    balance_weights: np.ndarray
    mean_count: float
    var_count: float
    distance_mode: str = "euclidean"
    balance_rule: str = "zscore"

    @property
    def k(self) -> int:
        return len(self.counts)

    def copy(self) -> "ClusterModel":
        return ClusterModel(
            dim=self.dim,
            centroids=self.centroids.copy(),
            counts=self.counts.copy(),
            balance_weights=self.balance_weights.copy(),
            mean_count=self.mean_count,
            var_count=self.var_count,
            distance_mode=self.distance_mode,
            balance_rule=self.balance_rule,
        )


@dataclass(frozen=True)
class AssignmentResult:
    cluster_index: int
    penalized_distance: float
    raw_distance: float


def distances(centroids: np.ndarray, x: np.ndarray, mode: str = "euclidean") -> np.ndarray:
    """Distance from ``x`` to every row of ``centroids``."""
    sq = np.sum((centroids - x) ** 2, axis=-1)
    if mode == "squared_euclidean":
        return sq
    return np.sqrt(sq)


def _check_point(model: ClusterModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"expected a point of dimension {model.dim}, got shape {x.shape}")
    return x


def init_model(hp: Hyperparams, seed_points) -> ClusterModel:
    """Seed the ``k`` centroids with the first ``k`` stream points, one count each."""
    pts = np.array(seed_points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("seed_points must be a list of equal-length vectors")
    if len(pts) < hp.k:
        raise ValueError(f"need {hp.k} seed points, got {len(pts)}")
    if len(pts) > hp.k:
        raise ValueError(f"expected exactly {hp.k} seed points, got {len(pts)}")
    if pts.shape[1] < 2:
        raise ValueError("points must have dimension >= 2")
    return ClusterModel(
        dim=pts.shape[1],
        centroids=pts,
        counts=np.ones(hp.k, dtype=np.int64),
        balance_weights=np.zeros(hp.k),
        mean_count=1.0,
        var_count=0.0,
        distance_mode=hp.distance_mode,
        balance_rule=hp.balance_rule,
    )


def penalized_scores(model: ClusterModel, raw: np.ndarray) -> np.ndarray:
    if model.balance_rule == "literal":
        return raw - model.balance_weights
    return raw + model.balance_weights


def assign(model: ClusterModel, x) -> AssignmentResult:
    """Pick the cluster with the lowest penalized distance (ties go to the lowest index)."""
    x = _check_point(model, x)
    raw = distances(model.centroids, x, model.distance_mode)
    scores = penalized_scores(model, raw)
    i = int(np.argmin(scores))
    return AssignmentResult(i, float(scores[i]), float(raw[i]))


def update_centroid(model: ClusterModel, i: int, x, alpha: float) -> ClusterModel:
    if not 0 <= i < model.k:
        raise IndexError(f"cluster index {i} out of range for k={model.k}")
    x = _check_point(model, x)
    model.centroids[i] = alpha * x + (1.0 - alpha) * model.centroids[i]
    model.counts[i] += 1
    return model


def balance_weights_for(counts: np.ndarray, beta: float, rule: str = "zscore"):
    """Return ``(weights, mean, population_variance)`` for a count vector."""
    n = np.asarray(counts, dtype=float)
    mean = float(n.mean())
    var = float(n.var())
    if var < VARIANCE_EPS:
        return np.zeros(len(n)), mean, var
    scale = var if rule == "literal" else np.sqrt(var)
    return beta * (n - mean) / scale, mean, var


def update_balance_weights(model: ClusterModel, beta: float) -> ClusterModel:
    w, mean, var = balance_weights_for(model.counts, beta, model.balance_rule)
    model.balance_weights = w
    model.mean_count = mean
    model.var_count = var
    return model


def step(model: ClusterModel, x, hp: Hyperparams) -> tuple[ClusterModel, AssignmentResult]:
    """Run one assign / update / reweight cycle for the point ``x``."""
    result = assign(model, x)
    update_centroid(model, result.cluster_index, x, hp.alpha)
    update_balance_weights(model, hp.beta)
    return model, result


def point_loss(model: ClusterModel, x) -> float:
    """Unpenalized distance from ``x`` to its nearest centroid."""
    x = _check_point(model, x)
    return float(distances(model.centroids, x, model.distance_mode).min())


def fit_stream(hp: Hyperparams, points) -> ClusterModel:
    """Seed from the first ``k`` rows of ``points`` and stream the rest."""
    pts = np.asarray(points, dtype=float)
    model = init_model(hp, pts[: hp.k])
    for x in pts[hp.k:]:
        step(model, x, hp)
    return model


# -- snapshots ---------------------------------------------------------------

def to_snapshot(model: ClusterModel, hp: Hyperparams, **extra: Any) -> dict:
    """Flatten a model into a JSON-compatible dict.

    Keys: ``dim, k, alpha, beta, distance_mode, balance_rule, centroids``
    (row-major flat list), ``counts, weights`` plus any ``extra`` entries
    (the trainer stores ``overall_mean`` this way).
    """
    snap = {
        "dim": int(model.dim),
        "k": int(model.k),
        "alpha": float(hp.alpha),
        "beta": float(hp.beta),
        "distance_mode": model.distance_mode,
        "balance_rule": model.balance_rule,
        "centroids": [float(v) for v in model.centroids.ravel()],
        "counts": [int(c) for c in model.counts],
        "weights": [float(w) for w in model.balance_weights],
    }
    snap.update(extra)
    return snap


def from_snapshot(snap: dict) -> tuple[ClusterModel, Hyperparams]:
    try:
        dim, k = int(snap["dim"]), int(snap["k"])
        hp = Hyperparams(
            k=k,
            alpha=float(snap["alpha"]),
            beta=float(snap["beta"]),
            distance_mode=snap.get("distance_mode", "euclidean"),
            balance_rule=snap.get("balance_rule", "zscore"),
        )
        centroids = np.array(snap["centroids"], dtype=float).reshape(k, dim)
        counts = np.array(snap["counts"], dtype=np.int64)
        weights = np.array(snap["weights"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model snapshot: {exc}") from exc
    if counts.shape != (k,) or weights.shape != (k,):
        raise ValueError("snapshot counts/weights do not match k")
    n = counts.astype(float)
    model = ClusterModel(
        dim=dim,
        centroids=centroids,
        counts=counts,
        balance_weights=weights,
        mean_count=float(n.mean()),
        var_count=float(n.var()),
        distance_mode=hp.distance_mode,
        balance_rule=hp.balance_rule,
    )
    return model, hp
