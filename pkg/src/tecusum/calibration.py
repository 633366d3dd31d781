"""Monte Carlo ARL2FA estimation and threshold search.

ARL2FA is measured with the cyclical scheme: one long pure-noise stream is
monitored, every alarm resets all local states, and the run length is the
mean gap between consecutive alarms. The first gap is discarded as burn-in.
The reset is mandatory for TE-CUSUM, whose ``G`` never decreases.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .methods import BatchRunner, Method
from .metrics import CurveSet
from .scenarios import CALIBRATION_STREAM, FA_CURVE_STREAM, derive_rng

log = logging.getLogger(__name__)

CHUNK_ROWS = 1 << 15
DEFAULT_MIN_INTERVALS = 200
DEFAULT_REL_TOL = 0.05
DEFAULT_MAX_SAMPLES = 50_000_000


class BudgetExceededError(RuntimeError):
    def __init__(self, samples: int, alarms: int) -> None:
        self.samples = samples
        self.alarms = alarms
        # at most `alarms` completed runs fit in `samples`
        self.lower_bound = samples / (alarms + 1)
        super().__init__(
            f"only {alarms} alarms in {samples} samples; ARL2FA is at least ~{self.lower_bound:.0f}"
        )


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ArlEstimate:
    mean_run_length: float
    standard_error: float
    intervals_observed: int
    samples: int = 0

    @staticmethod
    def merge(estimates: Iterable[ArlEstimate]) -> ArlEstimate:
        """Pool estimates from independent replicas (count-weighted)."""
        ests = list(estimates)
        n = sum(e.intervals_observed for e in ests)
        if n < 2:
            raise ValueError("need at least two intervals to pool")
        mean = sum(e.mean_run_length * e.intervals_observed for e in ests) / n
        ss = 0.0
        for e in ests:
            var = e.standard_error**2 * e.intervals_observed
            ss += (e.intervals_observed - 1) * var + e.intervals_observed * (e.mean_run_length - mean) ** 2
        se = math.sqrt(ss / (n - 1) / n)
        return ArlEstimate(mean, se, n, sum(e.samples for e in ests))


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    achieved_arl: ArlEstimate
    target_arl: float
    iterations: int
    converged: bool = True

    @property
    def relative_error(self) -> float:
        return abs(self.achieved_arl.mean_run_length - self.target_arl) / self.target_arl


def _noise_blocks(method: Method, num_sensors: int, seed: int, key: int):
    rng = derive_rng(seed, key)
    mu0, sigma = method.model.mu0, method.model.sigma
    while True:
        block = rng.standard_normal((CHUNK_ROWS, num_sensors))
        if sigma != 1.0:
            block *= sigma
        if mu0 != 0.0:
            block += mu0
        yield block


def estimate_arl(
    method: Method,
    threshold: float,
    num_sensors: int,
    seed: int,
    min_intervals: int = DEFAULT_MIN_INTERVALS,
    max_samples: int = DEFAULT_MAX_SAMPLES,
) -> ArlEstimate:
    """Cyclical steady-state ARL2FA under the no-change hypothesis.

    The noise stream depends only on ``(seed, num_sensors)``, so estimates at
    different thresholds use common random numbers.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    if min_intervals < 30:
        raise ValueError("min_intervals must be >= 30")
    runner = BatchRunner(method, threshold, num_sensors)
    alarms: list[np.ndarray] = []
    n_alarms = 0
    samples = 0
    for block in _noise_blocks(method, num_sensors, seed, CALIBRATION_STREAM):
        pos = 0
        while pos < len(block):
            found, used = runner.run_cyclical(block[pos:], max_alarms=CHUNK_ROWS)
            alarms.append(found)
            n_alarms += len(found)
            pos += used
        samples += len(block)
        # +1 for the discarded burn-in interval
        if n_alarms >= min_intervals + 1:
            break
        if samples >= max_samples:
            raise BudgetExceededError(samples, n_alarms)
    idx = np.concatenate(alarms)
    gaps = np.diff(np.concatenate(([0], idx)))[1:].astype(float)
    mean = float(gaps.mean())
    se = float(gaps.std(ddof=1) / math.sqrt(len(gaps)))
    return ArlEstimate(mean, se, len(gaps), samples)


def _search_point(lo, hi, log_lo, log_hi, log_target, bisect):
    if bisect or log_lo is None or log_hi is None or log_hi <= log_lo:
        return 0.5 * (lo + hi)
    # log ARL is close to linear in h for CUSUM-type statistics; interpolate,
    # but stay away from the bracket ends
    frac = (log_target - log_lo) / (log_hi - log_lo)
    frac = min(max(frac, 0.1), 0.9)
    return lo + frac * (hi - lo)


def calibrate_threshold(
    method: Method,
    num_sensors: int,
    target_arl: float,
    seed: int,
    rel_tol: float = DEFAULT_REL_TOL,
    min_intervals: int = DEFAULT_MIN_INTERVALS,
    initial_threshold: float = 1.0,
    growth: float = 2.0,
    max_iterations: int = 40,
    max_expansions: int = 30,
) -> CalibrationResult:
    """Find ``h`` whose cyclical ARL2FA is within ``rel_tol`` of ``target_arl``.

    A geometric expansion brackets the target, then the bracket is narrowed
    by interpolating log ARL (every third step is a plain midpoint split). All
    evaluations share one noise stream. An estimate that runs out of budget
    (``2 * min_intervals * target_arl`` samples) lies above the target.
    A ``growth`` close to 1 suits refining a threshold already known roughly.
    """
    if target_arl <= 0:
        raise ValueError("target_arl must be positive")
    if growth <= 1:
        raise ValueError("growth must exceed 1")
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    budget = int(2 * min_intervals * target_arl) + CHUNK_ROWS
    log_target = math.log(target_arl)
    evaluations = 0

    def evaluate(h: float) -> tuple[ArlEstimate | None, float]:
        nonlocal evaluations
        evaluations += 1
        try:
            est = estimate_arl(method, h, num_sensors, seed, min_intervals, budget)
        except BudgetExceededError as exc:
            log.debug("%s h=%.4g: budget exceeded (ARL >= %.0f)", method.name, h, exc.lower_bound)
            return None, math.log(max(exc.lower_bound, target_arl))
        log.debug("%s h=%.4g: ARL %.1f +- %.1f", method.name, h, est.mean_run_length, est.standard_error)
        return est, math.log(est.mean_run_length)

    def accept(est: ArlEstimate | None) -> bool:
        return est is not None and abs(est.mean_run_length - target_arl) <= rel_tol * target_arl

    h = float(initial_threshold)
    if h <= 0:
        raise ValueError("initial_threshold must be positive")
    est, log_arl = evaluate(h)
    if accept(est):
        return CalibrationResult(h, est, target_arl, evaluations)
    best = (h, est)
    lo = hi = None
    log_lo = log_hi = None
    if log_arl < log_target:
        lo, log_lo = h, log_arl
        for _ in range(max_expansions):
            h *= growth
            est, log_arl = evaluate(h)
            if accept(est):
                return CalibrationResult(h, est, target_arl, evaluations)
            if log_arl >= log_target:
                hi, log_hi = h, log_arl
                break
            lo, log_lo = h, log_arl
    else:
        hi, log_hi = h, log_arl
        for _ in range(max_expansions):
            h /= growth
            est, log_arl = evaluate(h)
            if accept(est):
                return CalibrationResult(h, est, target_arl, evaluations)
            if log_arl < log_target:
                lo, log_lo = h, log_arl
                break
            hi, log_hi = h, log_arl
    if lo is None or hi is None:
        raise CalibrationError(f"could not bracket ARL2FA {target_arl} for method {method.name!r}")

    for i in range(max_iterations):
        h = _search_point(lo, hi, log_lo, log_hi, log_target, bisect=(i % 3 == 2))
        est, log_arl = evaluate(h)
        if est is not None:
            best = (h, est)
        if accept(est):
            return CalibrationResult(h, est, target_arl, evaluations)
        if log_arl < log_target:
            lo, log_lo = h, log_arl
        else:
            hi, log_hi = h, log_arl
        if hi - lo <= 1e-9 * hi:
            break
    h = 0.5 * (lo + hi)
    log.warning("calibration of %s stopped without reaching rel_tol=%g", method.name, rel_tol)
    est = best[1] if best[1] is not None else evaluate(h)[0]
    if est is None:
        raise CalibrationError(f"ARL2FA estimate for {method.name!r} never completed within budget")
    return CalibrationResult(h, est, target_arl, evaluations, converged=False)


def false_alarm_curve(
    method: Method,
    threshold: float,
    num_sensors: int,
    horizon: int,
    runs: int,
    seed: int,
    batch_size: int = 256,
) -> CurveSet:
    """Fraction of fresh no-change runs that alarmed at or before each ``t``."""
    if runs < 100:
        raise ValueError("runs must be >= 100")
    runner = BatchRunner(method, threshold, num_sensors)
    rng = derive_rng(seed, FA_CURVE_STREAM)
    first = []
    for start in range(0, runs, batch_size):
        n = min(batch_size, runs - start)
        batch = rng.standard_normal((n, horizon, num_sensors))
        if method.model.sigma != 1.0:
            batch *= method.model.sigma
        if method.model.mu0 != 0.0:
            batch += method.model.mu0
        alarms, _ = runner.first_alarms(batch)
        first.append(alarms)
    alarms = np.concatenate(first)
    counts = np.bincount(np.where(alarms > 0, alarms, horizon + 1), minlength=horizon + 2)
    t = np.arange(horizon + 1)
    rate = np.cumsum(counts[: horizon + 1]) / runs
    return CurveSet(t, {method.name: rate}, {"threshold": threshold, "runs": runs, "horizon": horizon})


def max_statistic_samples(
    method: Method,
    num_sensors: int,
    batches: Iterable[np.ndarray],
) -> np.ndarray:
    """Maximum of the fused statistic over each run of the given matrices."""
    runner = BatchRunner(method, np.inf, num_sensors)
    return np.array([runner.trajectory(x).max() for batch in batches for x in batch])


def threshold_for_fa_probability(
    method: Method,
    num_sensors: int,
    horizon: int,
    fa_probability: float,
    runs: int,
    seed: int,
) -> float:
    """Threshold giving a one-shot false-alarm probability over ``horizon`` samples.

    Taken as the empirical ``1 - fa_probability`` quantile of the per-run
    maximum of the fused statistic under no change.
    """
    if not 0 < fa_probability < 1:
        raise ValueError("fa_probability must lie in (0, 1)")
    rng = derive_rng(seed, FA_CURVE_STREAM, horizon)

    def batches():
        for start in range(0, runs, 256):
            n = min(256, runs - start)
            yield method.model.mu0 + method.model.sigma * rng.standard_normal((n, horizon, num_sensors))

    peaks = max_statistic_samples(method, num_sensors, batches())
    return float(np.quantile(peaks, 1.0 - fa_probability, method="higher"))


def tune_alpha(
    method: Method,
    alphas: Sequence[float],
    num_sensors: int,
    target_arl: float,
    delay_fn,
    seed: int,
    **calibrate_kw,
) -> tuple[float, dict[float, float]]:
    """Grid search over the censoring factor.

    Each candidate is calibrated to ``target_arl`` and scored by
    ``delay_fn(method, threshold)`` (lower is better).
    """
    from dataclasses import replace

    scores = {}
    for a in alphas:
        m = replace(method, rule=replace(method.rule, alpha=float(a)))
        cal = calibrate_threshold(m, num_sensors, target_arl, seed, **calibrate_kw)
        scores[float(a)] = float(delay_fn(m, cal.threshold))
    best = min(scores, key=scores.get)
    return best, scores
