"""Observation models and log-likelihood-ratio increments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GaussianMeanShiftModel:
    """Gaussian pre/post-change pair sharing one standard deviation.

    Pre-change samples follow N(mu0, sigma^2); post-change samples follow
    N(mu1, sigma^2). ``mu1`` is the *expected* post-change mean used by the
    detectors, which need not match the amplitude actually simulated.
    """

    mu0: float = 0.0
    mu1: float = 0.4
    sigma: float = 1.0
    # llr(x) = slope * (x - midpoint); both cached so every code path
    # evaluates the increment with identical rounding.
    slope: float = field(init=False, repr=False, compare=False)
    midpoint: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("mu0", "mu1", "sigma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite, got {getattr(self, name)!r}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.delta == 0:
            raise ValueError("mu1 == mu0 gives a degenerate model (every increment is 0)")
        object.__setattr__(self, "slope", self.delta / self.sigma**2)
        object.__setattr__(self, "midpoint", self.mu0 + self.delta / 2)

    @property
    def delta(self) -> float:
        return self.mu1 - self.mu0

    def llr(self, x: float) -> float:
        """log f1(x)/f0(x) for a single sample."""
        if not math.isfinite(x):
            raise ValueError(f"observation must be finite, got {x!r}")
        return self.slope * (x - self.midpoint)

    def llr_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("observations must be finite")
        return self.slope * (x - self.midpoint)

    def expected_increment(self, post_change: bool) -> float:
        """Mean llr increment under f1 (``post_change``) or f0."""
        drift = self.delta**2 / (2 * self.sigma**2)
        return drift if post_change else -drift


def llr(model: GaussianMeanShiftModel, x: float) -> float:
    return model.llr(x)


def snr_db(model: GaussianMeanShiftModel, true_amplitude: float) -> float:
    """Signal-to-noise ratio 10*log10(A^2 / sigma^2) in decibels."""
    if true_amplitude == 0:
        raise ValueError("SNR is undefined for a zero amplitude")
    return 10.0 * math.log10(true_amplitude**2 / model.sigma**2)


def amplitude_for_snr(snr: float, sigma: float = 1.0) -> float:
    """Positive amplitude A giving ``snr`` dB for noise level ``sigma``."""
    return sigma * 10.0 ** (snr / 20.0)
