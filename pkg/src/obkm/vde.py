"""Voronoi density estimation with Monte Carlo cell volumes.

The density at ``x`` is ``1 / (m * Vol(c(x)))`` where ``c(x)`` is the Voronoi
cell of the site nearest to ``x`` and ``m`` is the number of sites.  Cells
are clipped to an axis-aligned bounding box and their volumes estimated by
throwing uniform points into the box and counting which site each lands
nearest to.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_CHUNK = 65536


@dataclass(frozen=True)
class VoronoiEstimate:
    sites: np.ndarray
    cell_volumes: np.ndarray
    bounding_box: np.ndarray
    mc_samples: int
    hits: np.ndarray

    @property
    def empty_cells(self) -> np.ndarray:
        """Indices of cells that received no Monte Carlo hits."""
        return np.flatnonzero(self.hits == 0)

    @property
    def box_volume(self) -> float:
        return float(np.prod(self.bounding_box[:, 1] - self.bounding_box[:, 0]))

    def densities(self) -> np.ndarray:
        """Per-cell density ``1 / (m * Vol(c_i))``; ``inf`` for empty cells."""
        with np.errstate(divide="ignore"):
            return 1.0 / (len(self.sites) * self.cell_volumes)


def default_box(points, margin: float = 0.1) -> np.ndarray:
    """Per-axis data range widened by ``margin`` of the span on each side.

    A zero-width axis is padded by ``margin`` instead so the box never
    collapses.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = np.where(hi > lo, margin * (hi - lo), margin)
    return np.column_stack([lo - pad, hi + pad])


def _nearest(sites: np.ndarray, x: np.ndarray) -> np.ndarray:
    d = np.sum((x[:, None, :] - sites[None, :, :]) ** 2, axis=2)
    return np.argmin(d, axis=1)


def estimate_volumes(sites, box=None, mc_samples: int = 100_000, seed: int = 0) -> VoronoiEstimate:
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    if mc_samples < 1:
        raise ValueError("mc_samples must be at least 1")
    if len(np.unique(sites, axis=0)) != len(sites):
        raise ValueError("sites must be distinct")
    box = default_box(sites) if box is None else np.asarray(box, dtype=float)
    if box.shape != (sites.shape[1], 2):
        raise ValueError(f"box must be {sites.shape[1]} (lo, hi) pairs")
    if np.any(box[:, 0] >= box[:, 1]):
        raise ValueError("degenerate bounding box: need lo < hi on every axis")

    rng = np.random.default_rng(seed)
    hits = np.zeros(len(sites), dtype=np.int64)
    remaining = mc_samples
    while remaining:
        n = min(remaining, _CHUNK)
        u = rng.uniform(box[:, 0], box[:, 1], size=(n, len(box)))
        hits += np.bincount(_nearest(sites, u), minlength=len(sites))
        remaining -= n
    vol = float(np.prod(box[:, 1] - box[:, 0]))
    return VoronoiEstimate(sites, vol * hits / mc_samples, box, mc_samples, hits)


def density_at(est: VoronoiEstimate, x) -> float:
    x = np.asarray(x, dtype=float)
    box = est.bounding_box
    if x.shape != (len(box),):
        raise ValueError(f"expected a point of dimension {len(box)}")
    if np.any(x < box[:, 0]) or np.any(x > box[:, 1]):
        raise ValueError("point lies outside the bounding box")
    i = int(_nearest(est.sites, x[None, :])[0])
    vol = est.cell_volumes[i]
    if vol <= 0:
        raise ValueError(f"cell {i} has zero estimated volume; increase mc_samples")
    return 1.0 / (len(est.sites) * vol)


def total_probability(est: VoronoiEstimate) -> float:
    """Sum of ``density_i * Vol(c_i)`` over non-empty cells."""
    keep = est.cell_volumes > 0
    return float(np.sum(est.densities()[keep] * est.cell_volumes[keep]))
