"""Aggregation of per-stream statistics into one global test statistic.

Censored rules average only the streams whose statistic reaches a cut-off
(``>=``, used uniformly so that the adaptive rule with ``alpha=1`` is exactly
the max rule). When nothing survives the cut-off the fused value falls back
to ``max(values)``. That only happens when every value is below the cut-off
and, for the adaptive rule, when the max itself is negative; since alarms
require ``T > h > 0`` the fallback never creates or suppresses an alarm.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

from .local import (
    ChangePointEstimate,
    CusumState,
    FmaState,
    TeCusumState,
    estimate_change_point,
)
from .models import GaussianMeanShiftModel


class RuleKind(str, Enum):
    SUM = "sum"
    MAX = "max"
    CENSORED_FIXED = "censored-fixed"
    CENSORED_ADAPTIVE = "censored-adaptive"


class LocalStatistic(str, Enum):
    CUSUM = "cusum"
    TECUSUM = "te-cusum"
    FMA = "fma"


@dataclass(frozen=True)
class FusionRule:
    """How local statistics are combined.

    ``c_fraction`` expresses a fixed cut-off relative to the detection
    threshold (``c = c_fraction * h``); exactly one of ``c`` and
    ``c_fraction`` is given for the fixed-censoring rule.
    """

    kind: RuleKind = RuleKind.SUM
    statistic: LocalStatistic = LocalStatistic.CUSUM
    alpha: float | None = None
    c: float | None = None
    c_fraction: float | None = None
    window: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RuleKind(self.kind))
        object.__setattr__(self, "statistic", LocalStatistic(self.statistic))
        if self.kind is RuleKind.CENSORED_ADAPTIVE:
            if self.alpha is None:
                raise ValueError("censored-adaptive rule requires alpha")
            if not 0.0 <= self.alpha <= 1.0:
                raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        elif self.alpha is not None:
            raise ValueError(f"alpha is only meaningful for censored-adaptive, not {self.kind.value}")
        if self.kind is RuleKind.CENSORED_FIXED:
            if (self.c is None) == (self.c_fraction is None):
                raise ValueError("censored-fixed rule requires exactly one of c or c_fraction")
        elif self.c is not None or self.c_fraction is not None:
            raise ValueError(f"c is only meaningful for censored-fixed, not {self.kind.value}")
        if self.statistic is LocalStatistic.FMA:
            if self.window is None or int(self.window) != self.window or self.window < 1:
                raise ValueError("fma statistic requires a positive integer window")
            object.__setattr__(self, "window", int(self.window))
        elif self.window is not None:
            raise ValueError("window is only meaningful for the fma statistic")

    def cutoff(self, threshold: float | None = None) -> float | None:
        """Absolute fixed cut-off, resolving ``c_fraction`` against ``threshold``."""
        if self.kind is not RuleKind.CENSORED_FIXED:
            return None
        if self.c is not None:
            return self.c
        if threshold is None:
            raise ValueError("c_fraction needs the detection threshold to resolve c")
        return self.c_fraction * threshold

    def make_state(self) -> CusumState | TeCusumState | FmaState:
        if self.statistic is LocalStatistic.CUSUM:
            return CusumState()
        if self.statistic is LocalStatistic.TECUSUM:
            return TeCusumState()
        return FmaState(self.window)


@dataclass(frozen=True)
class FusedStatistic:
    value: float
    active_set: frozenset[int]


def _check(values: Sequence[float]) -> list[float]:
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("cannot fuse an empty list of statistics")
    return vals


def _censored(vals: list[float], cut: float) -> FusedStatistic:
    total = 0.0
    active = []
    for i, v in enumerate(vals):
        if v >= cut:
            total += v
            active.append(i)
    if not active:
        return fuse_max(vals)
    return FusedStatistic(total / len(active), frozenset(active))


def fuse_sum(values: Sequence[float], num_streams: int | None = None) -> FusedStatistic:
    """Mean of all local statistics, normalised by the stream count."""
    vals = _check(values)
    if num_streams is not None and num_streams != len(vals):
        raise ValueError(f"expected {num_streams} values, got {len(vals)}")
    total = 0.0
    for v in vals:
        total += v
    return FusedStatistic(total / len(vals), frozenset(range(len(vals))))


def fuse_max(values: Sequence[float]) -> FusedStatistic:
    vals = _check(values)
    best = 0
    for i, v in enumerate(vals):
        if v > vals[best]:
            best = i
    return FusedStatistic(vals[best], frozenset([best]))


def fuse_censored_fixed(values: Sequence[float], c: float) -> FusedStatistic:
    """Average of the statistics ``>= c``."""
    return _censored(_check(values), c)


def fuse_censored_adaptive(values: Sequence[float], alpha: float) -> FusedStatistic:
    """Average of the statistics ``>= alpha * max(values)``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    vals = _check(values)
    return _censored(vals, alpha * max(vals))


def fuse(values: Sequence[float], rule: FusionRule, threshold: float | None = None) -> FusedStatistic:
    if rule.kind is RuleKind.SUM:
        return fuse_sum(values)
    if rule.kind is RuleKind.MAX:
        return fuse_max(values)
    if rule.kind is RuleKind.CENSORED_FIXED:
        return fuse_censored_fixed(values, rule.cutoff(threshold))
    return fuse_censored_adaptive(values, rule.alpha)


@dataclass(frozen=True)
class StepResult:
    n: int
    fused: FusedStatistic
    alarm: bool
    # absolute per-stream change-point estimates, filled only on an alarm
    change_points: tuple[ChangePointEstimate | None, ...] | None = None


@dataclass
class GlobalDetector:
    """Streaming multi-sensor detector: local updates, fusion, threshold test.

    In one-shot mode the detector refuses further samples once it alarmed.
    In cyclical mode every alarm resets all local states and monitoring
    continues; alarm indices accumulate in ``alarms``.
    """

    rule: FusionRule
    threshold: float
    models: Sequence[GaussianMeanShiftModel]
    cyclical: bool = False
    n: int = 0
    alarm: int | None = None
    alarms: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if isinstance(self.models, GaussianMeanShiftModel):
            raise TypeError("pass one model per stream (e.g. [model] * num_streams)")
        self.models = list(self.models)
        if not self.models:
            raise ValueError("at least one stream is required")
        if math.isnan(self.threshold):
            raise ValueError("threshold must be a number")
        self.states = [self.rule.make_state() for _ in self.models]
        # FMA keeps no cumulative sum, so the change-point estimate needs a
        # side tracker; CUSUM-family states carry their own.
        self._trackers = (
            [CusumState() for _ in self.models]
            if self.rule.statistic is LocalStatistic.FMA
            else None
        )
        self._origin = 0  # global index of the last reset

    @property
    def num_streams(self) -> int:
        return len(self.models)

    def values(self) -> list[float]:
        return [s.value for s in self.states]

    def fused(self) -> FusedStatistic:
        return fuse(self.values(), self.rule, self.threshold)

    def step(self, observations: Sequence[float]) -> StepResult:
        if len(observations) != len(self.models):
            raise ValueError(f"expected {len(self.models)} observations, got {len(observations)}")
        if self.alarm is not None and not self.cyclical:
            raise RuntimeError(f"detector already alarmed at sample {self.alarm}")
        incs = [m.llr(float(x)) for m, x in zip(self.models, observations)]
        for st, inc in zip(self.states, incs):
            st.update(inc)
        if self._trackers is not None:
            for tr, inc in zip(self._trackers, incs):
                tr.update(inc)
        self.n += 1
        fused = self.fused()
        if not fused.value > self.threshold:
            return StepResult(self.n, fused, False)
        if self.alarm is None:
            self.alarm = self.n
        self.alarms.append(self.n)
        cps = tuple(self.change_points())
        if self.cyclical:
            self.reset()
        return StepResult(self.n, fused, True, cps)

    def change_points(self) -> list[ChangePointEstimate | None]:
        """Per-stream change-point estimates, as absolute sample indices."""
        src = self._trackers if self._trackers is not None else self.states
        out: list[ChangePointEstimate | None] = []
        for st in src:
            inner = st.cusum if isinstance(st, TeCusumState) else st
            if inner.n == 0:
                out.append(None)
                continue
            est = estimate_change_point(st)
            n_hat = None if est.n_hat is None else est.n_hat + self._origin
            out.append(ChangePointEstimate(est.nu_hat + self._origin, n_hat))
        return out

    def reset(self) -> GlobalDetector:
        """Reset local statistics; the global sample counter keeps running."""
        for st in self.states:
            st.reset()
        if self._trackers is not None:
            for tr in self._trackers:
                tr.reset()
        self._origin = self.n
        return self
