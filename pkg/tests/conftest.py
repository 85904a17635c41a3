import math

import numpy as np
import pytest

from obkm.model import ClusterModel


def make_model(centroids, counts=None, weights=None, balance_rule="zscore",
               distance_mode="euclidean") -> ClusterModel:
    c = np.array(centroids, dtype=float)
    n = np.ones(len(c), dtype=np.int64) if counts is None else np.array(counts, dtype=np.int64)
    w = np.zeros(len(c)) if weights is None else np.array(weights, dtype=float)
    return ClusterModel(
        dim=c.shape[1],
        centroids=c,
        counts=n,
        balance_weights=w,
        mean_count=float(n.mean()),
        var_count=float(n.var()),
        distance_mode=distance_mode,
        balance_rule=balance_rule,
    )


def brute_nearest(points, x, dist=None) -> int:
    """Plain-Python nearest scan; the first strictly smaller distance wins."""
    if dist is None:
        dist = lambda a, b: math.sqrt(sum((ai - bi) ** 2 for ai, bi in zip(a, b)))  # noqa: E731
    best, best_d = 0, dist(points[0], x)
    for i in range(1, len(points)):
        d = dist(points[i], x)
        if d < best_d:
            best, best_d = i, d
    return best


def random_model(rng, k_max=10, d_max=4, **kw) -> ClusterModel:
    k = int(rng.integers(1, k_max + 1))
    d = int(rng.integers(2, d_max + 1))
    return make_model(rng.normal(0, 3, (k, d)), rng.integers(1, 50, k), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(label, ok, detail)`` returns ``ok``."""
    def record(label: str, ok: bool, detail: str = "") -> bool:
        _ACCEPTANCE.append((label, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {label} {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
