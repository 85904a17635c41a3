"""Seeded synthetic datasets.

All randomness comes from ``numpy.random.Generator`` over the PCG64 bit
generator (``numpy.random.default_rng(seed)``).  The samplers are numpy's:
uniform by scaling the 53-bit double draw, normal by the ziggurat method
and gamma by Marsaglia-Tsang (with the ``U**(1/shape)`` boost for
``shape < 1``).  For a fixed numpy version a seed therefore pins every
generated value.

A dataset has ``dim`` columns.  The first ``dim - 1`` are drawn from the
component's distribution; the last column is either drawn the same way
(``independent``) or computed row-wise from the others as a sum of
squares or a sum of cubes.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from obkm.io import atomic_write_text

RELATIONS = ("independent", "sum_of_squares", "sum_of_cubes")


@dataclass(frozen=True)
class DistributionSpec:
    family: str
    params: tuple[float, float]

    def __post_init__(self):
        a, b = self.params
        if self.family == "uniform":
            if not a < b:
                raise ValueError(f"uniform needs lo < hi, got {self.params}")
        elif self.family == "normal":
            if not b > 0:
                raise ValueError(f"normal needs std > 0, got {self.params}")
        elif self.family == "gamma":
            if not (a > 0 and b > 0):
                raise ValueError(f"gamma needs shape > 0 and scale > 0, got {self.params}")
        else:
            raise ValueError(f"unknown distribution family {self.family!r}")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        a, b = self.params
        if self.family == "uniform":
            return rng.uniform(a, b, size)
        if self.family == "normal":
            return rng.normal(a, b, size)
        return rng.gamma(a, b, size)

    def mean(self) -> float:
        a, b = self.params
        if self.family == "uniform":
            return (a + b) / 2
        if self.family == "normal":
            return a
        return a * b

    def variance(self) -> float:
        a, b = self.params
        if self.family == "uniform":
            return (b - a) ** 2 / 12
        if self.family == "normal":
            return b * b
        return a * b * b


def uniform(lo: float = -1.0, hi: float = 1.0) -> DistributionSpec:
    return DistributionSpec("uniform", (lo, hi))


def normal(mean: float = 0.0, std: float = 1.0) -> DistributionSpec:
    return DistributionSpec("normal", (mean, std))


def gamma(shape: float = 1.0, scale: float = 1.0) -> DistributionSpec:
    return DistributionSpec("gamma", (shape, scale))


@dataclass(frozen=True)
class Component:
    dist: DistributionSpec
    relation: str = "independent"
    weight: float = 1.0

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        if not self.weight > 0:
            raise ValueError("component weight must be positive")


@dataclass(frozen=True)
class DataSpec:
    dim: int
    components: tuple[Component, ...]
    n_points: int
    seed: int = 0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if not 1 <= len(self.components) <= 3:
            raise ValueError("a dataset has between 1 and 3 components")
        total = math.fsum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component weights must sum to 1, got {total}")
        if self.n_points < len(self.components):
            raise ValueError("n_points must be at least the number of components")


def allocate(n: int, fractions) -> list[int]:
    """Split ``n`` rows by ``fractions`` using largest remainders.

    Every share differs from ``fraction * n`` by less than 1; leftover rows
    go to the largest fractional parts, lowest index first on ties.
    """
    exact = [f * n for f in fractions]
    sizes = [math.floor(e + 1e-9) for e in exact]
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def _relate(features: np.ndarray, relation: str, dist: DistributionSpec, rng) -> np.ndarray:
    if relation == "sum_of_squares":
        return np.sum(features ** 2, axis=1)
    if relation == "sum_of_cubes":
        return np.sum(features ** 3, axis=1)
    return dist.sample(rng, len(features))


def generate(spec: DataSpec) -> np.ndarray:
    """Draw ``spec.n_points`` rows; components are stacked then shuffled."""
    rng = np.random.default_rng(spec.seed)
    sizes = allocate(spec.n_points, [c.weight for c in spec.components])
    blocks = []
    for comp, size in zip(spec.components, sizes):
        feats = comp.dist.sample(rng, (size, spec.dim - 1))
        last = _relate(feats, comp.relation, comp.dist, rng)
        blocks.append(np.column_stack([feats, last]))
    data = np.vstack(blocks)
    rng.shuffle(data)
    return data


def _single(dist, relation):
    return (Component(dist, relation, 1.0),)


def _mixture(*dists):
    w = 1.0 / len(dists)
    return tuple(Component(d, "independent", w) for d in dists)


# Gap of ~6 between the modes follows the two-cluster recipes; the
# parameters of the 3-cluster and two-gamma mixtures are our own choice.
_CATALOG = {
    "uniform": _single(uniform(), "independent"),
    "uniform_squared": _single(uniform(), "sum_of_squares"),
    "uniform_cube": _single(uniform(), "sum_of_cubes"),
    "normal": _single(normal(), "independent"),
    "normal_squared": _single(normal(), "sum_of_squares"),
    "normal_cube": _single(normal(), "sum_of_cubes"),
    "gamma": _single(gamma(), "independent"),
    "gamma_squared": _single(gamma(), "sum_of_squares"),
    "gamma_cube": _single(gamma(), "sum_of_cubes"),
    "uniform_2clust": _mixture(uniform(-1, 1), uniform(5, 7)),
    "normal_2clust": _mixture(normal(0, 1), normal(6, 1)),
    "gamma_2clust": _mixture(gamma(1, 1), gamma(9, 1)),
    "uniform_3clust": _mixture(uniform(-1, 1), uniform(5, 7), uniform(11, 13)),
    "normal_3clust": _mixture(normal(0, 1), normal(6, 1), normal(12, 1)),
    "gamma_normal_3clust": _mixture(gamma(1, 1), gamma(9, 1), normal(20, 1)),
}


def thesis_presets(dim: int = 2, n_points: int = 11000, seed: int = 0) -> dict[str, DataSpec]:
    """All named dataset recipes, keyed by preset name."""
    return {
        name: DataSpec(dim, comps, n_points, seed, name=name)
        for name, comps in _CATALOG.items()
    }


def preset(name: str, dim: int = 2, n_points: int = 11000, seed: int = 0) -> DataSpec:
    try:
        comps = _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(_CATALOG)}") from None
    return DataSpec(dim, comps, n_points, seed, name=name)


def preset_names() -> list[str]:
    return list(_CATALOG)


def with_seed(spec: DataSpec, seed: int) -> DataSpec:
    return replace(spec, seed=seed)


def split(data: np.ndarray, train_fraction: float, seed: int = 0):
    """Shuffle rows with ``seed`` and cut into ``floor(n * f)`` train rows and the rest."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    data = np.asarray(data)
    n = len(data)
    n_train = math.floor(n * train_fraction + 1e-9)
    if n_train == 0 or n_train == n:
        raise ValueError(f"split of {n} rows at {train_fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return data[perm[:n_train]], data[perm[n_train:]]


# -- CSV ---------------------------------------------------------------------

def to_csv_text(data: np.ndarray, prefix: str = "x") -> str:
    data = np.asarray(data, dtype=float)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"{prefix}{j}" for j in range(data.shape[1])])
    for row in data:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def read_csv(path) -> np.ndarray:
    """Load a dataset CSV with an ``x0,...`` header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def write_csv(path, data: np.ndarray) -> Path:
    return atomic_write_text(path, to_csv_text(data))
