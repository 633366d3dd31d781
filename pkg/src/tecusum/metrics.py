"""Run records, detection-rate curves, delays, and shared-noise method comparison."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .methods import BatchRunner, Method
from .scenarios import ScenarioSpec, generate_batch


class CurveMode(str, Enum):
    INCLUDE = "include-pre-change"
    EXCLUDE = "exclude-pre-change"


class ConfigError(ValueError):
    pass


class UndefinedDelayError(ValueError):
    """No run alarmed after the exposure started."""


@dataclass(frozen=True)
class RunRecord:
    alarm_time: int | None
    exposure_start: int
    exposure_end: int
    nu_hat: int | None = None
    seed: int = 0
    replica: int = 0

    @property
    def pre_change(self) -> bool:
        return self.alarm_time is not None and self.alarm_time < self.exposure_start


@dataclass
class CurveSet:
    """Named series over a common time axis (samples relative to exposure start)."""

    t: np.ndarray
    series: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def value_at(self, name: str, t: int) -> float:
        idx = int(np.searchsorted(self.t, t, side="right")) - 1
        if idx < 0:
            return 0.0
        return float(self.series[name][idx])

    def merge(self, other: CurveSet) -> CurveSet:
        if not np.array_equal(self.t, other.t):
            raise ValueError("curves have different time axes")
        return CurveSet(self.t, {**self.series, **other.series}, {**self.metadata, **other.metadata})

    def to_csv(self, path: str | Path) -> None:
        names = list(self.series)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", *names])
            for i, t in enumerate(self.t):
                wr.writerow([int(t), *(f"{self.series[n][i]:.6f}" for n in names)])

    @classmethod
    def from_csv(cls, path: str | Path) -> CurveSet:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        arr = np.array(body, dtype=float).reshape(len(body), len(header))
        return cls(arr[:, 0].astype(int), {n: arr[:, i + 1] for i, n in enumerate(header[1:])})


def detection_rate_curve(
    records: Sequence[RunRecord],
    horizon: int,
    mode: CurveMode | str = CurveMode.INCLUDE,
    name: str = "rate",
) -> CurveSet:
    """Fraction of runs that alarmed by ``exposure_start + t`` for ``t = 0..horizon``.

    In exclude mode, runs that alarmed before the exposure are removed from
    both numerator and denominator.
    """
    if not records:
        raise ValueError("no run records")
    mode = CurveMode(mode)
    t = np.arange(horizon + 1)
    kept = [r for r in records if not (mode is CurveMode.EXCLUDE and r.pre_change)]
    rate = np.zeros(horizon + 1)
    if kept:
        rel = np.array(
            [r.alarm_time - r.exposure_start if r.alarm_time is not None else horizon + 1 for r in kept]
        )
        rel = np.clip(rel, 0, horizon + 1)
        counts = np.bincount(rel, minlength=horizon + 2)[: horizon + 1]
        rate = np.cumsum(counts) / len(kept)
    return CurveSet(t, {name: rate}, {"runs": len(records), "mode": mode.value})


@dataclass(frozen=True)
class DelayStats:
    mean: float
    standard_error: float
    detecting: int
    censored: int  # runs without any alarm
    pre_change: int  # runs whose alarm preceded the exposure


def average_delay(records: Iterable[RunRecord]) -> DelayStats:
    """Mean ``alarm_time - exposure_start`` over runs alarming at or after the
    exposure start. Runs that never alarm are counted, not imputed."""
    delays, censored, pre = [], 0, 0
    for r in records:
        if r.alarm_time is None:
            censored += 1
        elif r.alarm_time < r.exposure_start:
            pre += 1
        else:
            delays.append(r.alarm_time - r.exposure_start)
    if not delays:
        raise UndefinedDelayError("no run detected the change after it started")
    d = np.asarray(delays, dtype=float)
    se = float(d.std(ddof=1) / math.sqrt(len(d))) if len(d) > 1 else 0.0
    return DelayStats(float(d.mean()), se, len(d), censored, pre)


@dataclass
class SpecComparison:
    spec: ScenarioSpec
    records: dict[str, list[RunRecord]]
    thresholds: dict[str, float]

    def curves(self, mode: CurveMode | str = CurveMode.INCLUDE) -> CurveSet:
        horizon = self.spec.horizon - self.spec.exposure_start
        out = None
        for name, recs in self.records.items():
            c = detection_rate_curve(recs, horizon, mode, name=name)
            out = c if out is None else out.merge(c)
        out.metadata = {"spec": self.spec.name, "mode": CurveMode(mode).value,
                        "runs": len(next(iter(self.records.values())))}
        return out

    def rate_at_end_of_exposure(self, name: str, mode: CurveMode | str = CurveMode.INCLUDE) -> float:
        horizon = self.spec.horizon - self.spec.exposure_start
        curve = detection_rate_curve(self.records[name], horizon, mode, name=name)
        return curve.value_at(name, self.spec.exposure_end - self.spec.exposure_start)

    def delay(self, name: str) -> DelayStats | None:
        try:
            return average_delay(self.records[name])
        except UndefinedDelayError:
            return None


def run_records(
    spec: ScenarioSpec,
    runner: BatchRunner,
    batch: np.ndarray,
    replicas: Sequence[int],
    seed: int,
) -> list[RunRecord]:
    alarms, nus = runner.first_alarms(batch)
    return [
        RunRecord(
            alarm_time=int(a) if a else None,
            exposure_start=spec.exposure_start,
            exposure_end=spec.exposure_end,
            nu_hat=int(v) if a else None,
            seed=seed,
            replica=int(r),
        )
        for a, v, r in zip(alarms, nus, replicas)
    ]


def compare_methods(
    specs: Sequence[ScenarioSpec],
    methods: Sequence[tuple[Method, float | None]],
    runs: int,
    seed: int,
    batch_size: int = 64,
) -> list[SpecComparison]:
    """Run every method on the same observation matrices for each spec.

    ``methods`` pairs each method with its calibrated threshold; replica ``r``
    of a spec sees the same noise whichever methods are compared.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    for m, h in methods:
        if h is None:
            raise ConfigError(f"method {m.name!r} has no calibrated threshold")
    names = [m.name for m, _ in methods]
    if len(set(names)) != len(names):
        raise ConfigError("method names must be unique")
    out = []
    for spec in specs:
        runners = [BatchRunner(m, h, spec.num_sensors) for m, h in methods]
        records: dict[str, list[RunRecord]] = {n: [] for n in names}
        for start in range(0, runs, batch_size):
            reps = list(range(start, min(runs, start + batch_size)))
            batch = generate_batch(spec, seed, reps)
            for name, runner in zip(names, runners):
                records[name].extend(run_records(spec, runner, batch, reps, seed))
        out.append(SpecComparison(spec, records, {m.name: float(h) for m, h in methods}))
    return out
