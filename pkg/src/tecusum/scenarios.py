"""Synthetic multi-sensor streams: Gaussian noise plus temporary mean offsets.

Sample indices are 1-based throughout. Affected sensor of rank ``r`` carries
the offset on samples ``nu_r + 1 .. N_r`` where
``nu_r = onset + r * stagger - 1`` and ``N_r = nu_r + exposure_len``.
"""

from __future__ import annotations

import csv
import zlib
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

# spawn-key namespaces for seed derivation
SCENARIO_STREAM = 1
CALIBRATION_STREAM = 2
FA_CURVE_STREAM = 3


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for one (namespace, ...) cell of an experiment.

    Children are ``SeedSequence(seed, spawn_key=key)``, so any cell can be
    regenerated on its own and the result does not depend on run order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    num_sensors: int
    affected: tuple[int, ...]
    amplitude: float
    exposure_len: int
    onset: int
    stagger: int = 0
    horizon: int = 3000
    sigma: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "affected", tuple(int(a) for a in self.affected))
        if self.num_sensors < 1:
            raise ScenarioError("num_sensors must be >= 1")
        if len(set(self.affected)) != len(self.affected):
            raise ScenarioError("affected sensors must be distinct")
        if any(not 0 <= a < self.num_sensors for a in self.affected):
            raise ScenarioError(f"affected indices must lie in [0, {self.num_sensors})")
        if self.sigma <= 0:
            raise ScenarioError("sigma must be positive")
        if self.exposure_len < 1 or self.onset < 1 or self.stagger < 0:
            raise ScenarioError("exposure_len and onset must be >= 1, stagger >= 0")
        if self.affected and self.exposure_end > self.horizon:
            raise ScenarioError(
                f"{self.name}: exposure ends at sample {self.exposure_end}, past horizon {self.horizon}"
            )

    @property
    def exposure_start(self) -> int:
        """First sample (1-based) carrying the offset on any sensor."""
        return self.onset

    @property
    def exposure_end(self) -> int:
        """Last sample (1-based) at which at least one sensor is still exposed."""
        if not self.affected:
            return self.onset - 1
        return max(n for _, n in self.windows().values())

    def windows(self) -> dict[int, tuple[int, int]]:
        """``sensor -> (nu, N)``: exposed samples are ``nu+1 .. N``."""
        out = {}
        for rank, sensor in enumerate(self.affected):
            nu = self.onset + rank * self.stagger - 1
            out[sensor] = (nu, nu + self.exposure_len)
        return out

    def exposed_sensor_samples(self) -> int:
        return len(self.affected) * self.exposure_len

    def column_order(self) -> list[int]:
        """Sensor label of each canonical noise column: affected by rank, then the rest."""
        rest = [s for s in range(self.num_sensors) if s not in self.affected]
        return list(self.affected) + rest

    def signal(self) -> np.ndarray:
        """Noise-free mean matrix, shape ``(horizon, num_sensors)``."""
        mean = np.zeros((self.horizon, self.num_sensors))
        for sensor, (nu, n_end) in self.windows().items():
            mean[nu:n_end, sensor] = self.amplitude
        return mean

    def to_dict(self) -> dict:
        d = asdict(self)
        d["affected"] = list(self.affected)
        return d


@dataclass
class ObservationMatrix:
    spec: ScenarioSpec
    data: np.ndarray  # (horizon, num_sensors)
    windows: dict[int, tuple[int, int]] = field(default_factory=dict)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"s{i}" for i in range(self.spec.num_sensors)])
            for row in self.data:
                wr.writerow([repr(float(v)) for v in row])


def _fill(spec: ScenarioSpec, rng: np.random.Generator, out: np.ndarray) -> None:
    noise = rng.standard_normal((spec.horizon, spec.num_sensors))
    out[:, spec.column_order()] = noise
    if spec.sigma != 1.0:
        out *= spec.sigma
    for sensor, (nu, n_end) in spec.windows().items():
        out[nu:n_end, sensor] += spec.amplitude


def generate(spec: ScenarioSpec, seed: int, replica: int = 0) -> ObservationMatrix:
    """Observation matrix for one replica; a pure function of (spec, seed, replica)."""
    data = np.empty((spec.horizon, spec.num_sensors))
    _fill(spec, derive_rng(seed, SCENARIO_STREAM, name_key(spec.name), replica), data)
    return ObservationMatrix(spec, data, spec.windows())


def generate_batch(spec: ScenarioSpec, seed: int, replicas: Sequence[int]) -> np.ndarray:
    """Stack of replica matrices, shape ``(len(replicas), horizon, num_sensors)``."""
    out = np.empty((len(replicas), spec.horizon, spec.num_sensors))
    key = name_key(spec.name)
    for i, r in enumerate(replicas):
        _fill(spec, derive_rng(seed, SCENARIO_STREAM, key, r), out[i])
    return out


STAGGER_LABELS = ("Sync", "OSync", "FSync", "OOOSync")
# multiples of exposure_len between consecutive onsets: 0, 1/2, 1, 3/2
_STAGGER_HALVES = (0, 1, 2, 3)

PRESETS = {
    # amplitude, exposure, horizon, name suffix
    "scenario-1": (0.4, 100, 3000, "04"),
    "scenario-2": (0.2, 200, 4000, "02"),
}


def scenario_matrix(
    preset: str,
    num_sensors: int = 10,
    affected_counts: Sequence[int] = (3, 5, 7),
    onset: int = 1500,
) -> list[ScenarioSpec]:
    """The 3 (subset size) x 4 (stagger) grid for one SNR preset.

    Scenario-2 staggers are 0/100/200/300 for 200-sample exposures, i.e. the
    same multiples of the exposure length as scenario-1.
    """
    try:
        amplitude, exposure, horizon, suffix = PRESETS[preset]
    except KeyError:
        raise ScenarioError(f"unknown scenario preset {preset!r}; known: {sorted(PRESETS)}") from None
    specs = []
    for label, halves in zip(STAGGER_LABELS, _STAGGER_HALVES):
        for k in affected_counts:
            specs.append(
                ScenarioSpec(
                    name=f"{label}{k}_{suffix}",
                    num_sensors=num_sensors,
                    affected=tuple(range(k)),
                    amplitude=amplitude,
                    exposure_len=exposure,
                    onset=onset,
                    stagger=halves * exposure // 2,
                    horizon=horizon,
                )
            )
    return specs


def permanent_change(
    name: str,
    num_sensors: int,
    affected_count: int,
    amplitude: float,
    onset: int,
    horizon: int,
    sigma: float = 1.0,
) -> ScenarioSpec:
    """Synchronous change on the first ``affected_count`` sensors lasting to the horizon."""
    return ScenarioSpec(
        name=name,
        num_sensors=num_sensors,
        affected=tuple(range(affected_count)),
        amplitude=amplitude,
        exposure_len=horizon - onset + 1,
        onset=onset,
        horizon=horizon,
        sigma=sigma,
    )
