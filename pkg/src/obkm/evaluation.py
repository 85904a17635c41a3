"""Prequential training runs, inference errors and hyperparameter sweeps."""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from obkm import datagen
from obkm.inference import METHODS, InferenceParams, all_batch, method_batch
from obkm.model import ClusterModel, Hyperparams, init_model, point_loss, step

log = logging.getLogger(__name__)

AXES = ("k", "alpha", "beta")

RUN_COLUMNS = ("run_id", "preset", "k", "alpha", "beta", "seed", "window", "loss",
               "method", "error", "count_var")
SUMMARY_COLUMNS = ("preset", "axis", "value", "final_loss", "mean_error_last3", "best_method")


class StabilityWarning(UserWarning):
    pass


class SweepError(RuntimeError):
    """Some runs of a sweep failed; the rest completed and are in ``records``."""

    def __init__(self, failures, records):
        self.failures = failures
        self.records = records
        detail = "; ".join(f"{label}: {err}" for label, err in failures)
        super().__init__(f"{len(failures)} sweep run(s) failed: {detail}")


@dataclass
class WindowStats:
    window_index: int
    window_size: int
    cumulative_loss: float
    per_method_error: dict[str, float]
    count_var: float = 0.0


@dataclass
class RunRecord:
    hp: Hyperparams
    inference_params: InferenceParams
    data_preset: str
    seed: int
    windows: list[WindowStats] = field(default_factory=list)
    final_counts: list[int] = field(default_factory=list)

    @property
    def run_id(self) -> str:
        return (f"{self.data_preset or 'data'}_k{self.hp.k}_a{self.hp.alpha!r}"
                f"_b{self.hp.beta!r}_s{self.seed}")

    def losses(self) -> np.ndarray:
        return np.array([w.cumulative_loss for w in self.windows])

    def errors(self, method: str) -> np.ndarray:
        return np.array([w.per_method_error[method] for w in self.windows])


def squared_error(truth, estimates) -> float:
    r = np.asarray(truth, dtype=float) - np.asarray(estimates, dtype=float)
    return float(np.dot(r, r))


def inference_error(model: ClusterModel, test_points, method: str, p: InferenceParams,
                    overall_mean: float = 0.0) -> float:
    """Sum over test points of the squared residual on the last coordinate."""
    test = np.atleast_2d(np.asarray(test_points, dtype=float))
    if test.size == 0 or len(test) == 0:
        raise ValueError("test set is empty")
    if test.shape[1] != model.dim:
        raise ValueError(f"test points must have dimension {model.dim}")
    est = method_batch(model, test[:, :-1], method, p, overall_mean)
    return squared_error(test[:, -1], est)


def all_inference_errors(model: ClusterModel, test, p: InferenceParams, overall_mean: float) -> dict[str, float]:
    est = all_batch(model, test[:, :-1], p, overall_mean)
    return {m: squared_error(test[:, -1], est[m]) for m in METHODS}


def run_training(train, test, hp: Hyperparams, p: InferenceParams = InferenceParams(),
                 window_size: int = 1000, data_preset: str = "", seed: int = 0,
                 return_model: bool = False):
    """Stream ``train`` through a fresh model and record one row per full window.

    The first ``hp.k`` rows seed the centroids.  Every later point's loss is
    measured against the model *before* it is updated.  When a window fills,
    its losses are summed and all seven estimators are scored on the whole
    test set against the current model.  A trailing partial window is
    dropped.

    ``overall_mean`` for the mean-merge method is the running mean of the
    last coordinate over every training row consumed so far, seed rows
    included.
    """
    train = np.asarray(train, dtype=float)
    test = np.asarray(test, dtype=float)
    if window_size < 1:
        raise ValueError("window_size must be positive")
    if len(train) < hp.k + window_size:
        raise ValueError(f"need at least k + window_size = {hp.k + window_size} training rows, "
                         f"got {len(train)}")
    if len(test) == 0:
        raise ValueError("test set is empty")
    if test.shape[1] != train.shape[1]:
        raise ValueError("train and test dimensions differ")

    model = init_model(hp, train[: hp.k])
    p.check_model(model)
    target_sum = math.fsum(train[: hp.k, -1])
    seen = hp.k
    record = RunRecord(hp, p, data_preset, seed)
    window_loss = 0.0
    filled = 0
    for x in train[hp.k:]:
        window_loss += point_loss(model, x)
        step(model, x, hp)
        target_sum += x[-1]
        seen += 1
        filled += 1
        if filled == window_size:
            overall_mean = target_sum / seen
            record.windows.append(WindowStats(
                window_index=len(record.windows),
                window_size=window_size,
                cumulative_loss=window_loss,
                per_method_error=all_inference_errors(model, test, p, overall_mean),
                count_var=model.var_count,
            ))
            window_loss = 0.0
            filled = 0
    record.final_counts = [int(c) for c in model.counts]
    if return_model:
        return record, model, target_sum / seen
    return record


def stability_report(record: RunRecord, first: int = 3, last: int = 9, rel: float = 0.25) -> dict[str, bool]:
    """Per method, whether the errors of windows ``first..last-1`` stay within ``rel`` of their mean.

    Window indices are zero-based, so the defaults cover the 4th to 9th
    windows.
    """
    out = {}
    for m in METHODS:
        errs = record.errors(m)[first:last]
        if len(errs) == 0:
            out[m] = False
            continue
        mean = errs.mean()
        out[m] = bool(np.all(np.abs(errs - mean) <= rel * abs(mean)))
    return out


def check_stability(record: RunRecord, rel: float = 0.25) -> bool:
    """Warn (not raise) when any method's error spread exceeds ``rel`` of its mean."""
    ok = True
    for m in METHODS:
        errs = record.errors(m)[3:9]
        if len(errs) < 2:
            continue
        if errs.std() >= rel * abs(errs.mean()):
            ok = False
            warnings.warn(f"{record.run_id}: {m} errors are not stable "
                          f"(std {errs.std():.4g} vs mean {errs.mean():.4g})", StabilityWarning)
    return ok


# -- sweeps --------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    hp: Hyperparams = Hyperparams()
    params: InferenceParams = InferenceParams()
    data_preset: str = "normal"
    seeds: tuple[int, ...] = (0,)
    dim: int = 2
    n_train: int = 10_000
    n_test: int = 1_000
    window_size: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.values:
            raise ValueError("sweep values must be nonempty")
        if len(set(self.values)) != len(self.values):
            raise ValueError("sweep values must be distinct")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        for v in self.values:
            self.hp_for(v)

    def hp_for(self, value) -> Hyperparams:
        if self.axis == "k":
            value = int(value)
        return replace(self.hp, **{self.axis: value})

    def jobs(self) -> list[tuple]:
        return [(v, s) for v in self.values for s in self.seeds]


def make_dataset(preset: str, seed: int, dim: int = 2, n_train: int = 10_000, n_test: int = 1_000):
    """Generate ``n_train + n_test`` rows of a preset and split them with the same seed."""
    n = n_train + n_test
    data = datagen.generate(datagen.preset(preset, dim=dim, n_points=n, seed=seed))
    return datagen.split(data, n_train / n, seed=seed)


def _run_one(spec: SweepSpec, value, seed: int) -> RunRecord:
    train, test = make_dataset(spec.data_preset, seed, spec.dim, spec.n_train, spec.n_test)
    return run_training(train, test, spec.hp_for(value), spec.params, spec.window_size,
                        data_preset=spec.data_preset, seed=seed)


def sweep(spec: SweepSpec, jobs: int = 1) -> list[RunRecord]:
    """One run per ``(value, seed)``, returned in that order.

    A failing run does not stop the others; once all have finished a
    :class:`SweepError` carrying the failures and the completed records is
    raised.
    """
    pairs = spec.jobs()
    results: list = [None] * len(pairs)
    failures = []
    if jobs > 1 and len(pairs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, spec, v, s) for v, s in pairs]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except Exception as exc:  # noqa: BLE001 - isolate per-run failures
                    failures.append((f"{spec.axis}={pairs[i][0]} seed={pairs[i][1]}", exc))
    else:
        for i, (v, s) in enumerate(pairs):
            log.info("sweep %s=%s seed=%s", spec.axis, v, s)
            try:
                results[i] = _run_one(spec, v, s)
            except Exception as exc:  # noqa: BLE001
                failures.append((f"{spec.axis}={v} seed={s}", exc))
    records = [r for r in results if r is not None]
    if failures:
        raise SweepError(failures, records)
    return records


# -- summaries -----------------------------------------------------------------

@dataclass
class SummaryRow:
    preset: str
    axis: str
    value: object
    final_loss: float
    mean_error_last3: dict[str, float]
    count_var: float
    n_seeds: int

    @property
    def best_method(self) -> str:
        return min(METHODS, key=lambda m: (self.mean_error_last3[m], METHODS.index(m)))

    @property
    def best_error(self) -> float:
        return self.mean_error_last3[self.best_method]


@dataclass
class Summary:
    rows: list[SummaryRow]

    @property
    def argmin_error(self) -> SummaryRow:
        """Row whose best method has the lowest last-3-window error (first row on ties)."""
        return min(self.rows, key=lambda r: r.best_error)

    @property
    def argmin_loss(self) -> SummaryRow:
        return min(self.rows, key=lambda r: r.final_loss)

    def argmin_by_method(self) -> dict[str, SummaryRow]:
        return {m: min(self.rows, key=lambda r: r.mean_error_last3[m]) for m in METHODS}


def _axis_value(record: RunRecord, axis: str):
    return getattr(record.hp, axis)


def summarize(records: list[RunRecord], axis: str = "k") -> Summary:
    """Aggregate runs per swept value, averaging over seeds."""
    if not records:
        raise ValueError("nothing to summarize")
    groups: dict = {}
    for r in records:
        groups.setdefault(_axis_value(r, axis), []).append(r)
    rows = []
    for value, group in groups.items():
        last3 = {m: float(np.mean([r.errors(m)[-3:].mean() for r in group])) for m in METHODS}
        rows.append(SummaryRow(
            preset=group[0].data_preset,
            axis=axis,
            value=value,
            final_loss=float(np.mean([r.windows[-1].cumulative_loss for r in group])),
            mean_error_last3=last3,
            count_var=float(np.mean([np.var(r.final_counts) for r in group])),
            n_seeds=len(group),
        ))
    return Summary(rows)


# -- CSV ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def record_to_csv(record: RunRecord, header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(RUN_COLUMNS)
    hp = record.hp
    for win in record.windows:
        for m in METHODS:
            w.writerow([record.run_id, record.data_preset, hp.k, _fmt(float(hp.alpha)),
                        _fmt(float(hp.beta)), record.seed, win.window_index,
                        _fmt(float(win.cumulative_loss)), m,
                        _fmt(float(win.per_method_error[m])), _fmt(float(win.count_var))])
    return buf.getvalue()


def records_to_csv(records: list[RunRecord]) -> str:
    return "".join(record_to_csv(r, header=(i == 0)) for i, r in enumerate(records))


def summary_to_csv(summary: Summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in summary.rows:
        value = float(row.value) if row.axis != "k" else int(row.value)
        w.writerow([row.preset, row.axis, _fmt(value), _fmt(float(row.final_loss)),
                    _fmt(float(row.best_error)), row.best_method])
    return buf.getvalue()
