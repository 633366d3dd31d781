"""Per-stream recursive statistics.

Three local statistics are maintained from the stream of llr increments:

* ``W`` (CUSUM): ``W_n = max(0, W_{n-1}) + inc_n``. The clamp applies to the
  previous value, so ``W_n`` itself may be negative. ``max(0, W_n)`` is the
  textbook clamped recursion and crosses any positive threshold at the same
  sample.
* ``G`` (TE-CUSUM): running maximum of ``W``. It equals the best llr sum over
  any finite window ``(nu, N]`` seen so far, which makes it robust to changes
  that end.
* ``Z`` (FMA): moving sum of the last ``w_len`` increments.

The cumulative sum ``S_n`` is tracked alongside ``W`` to estimate the change
point as the latest minimiser of ``S_k`` over ``0 <= k < n``. With that range
the identity ``W_n = S_n - min_{k<n} S_k`` holds exactly at every step.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field


class EmptyStateError(RuntimeError):
    """Raised when an estimate is requested before any sample was consumed."""


def _check_increment(inc: float) -> float:
    inc = float(inc)
    if not math.isfinite(inc):
        raise ValueError(f"llr increment must be finite, got {inc!r}")
    return inc


@dataclass
class CusumState:
    w: float = 0.0
    s: float = 0.0
    s_min: float = math.inf  # min of S_k over 0 <= k < n
    s_argmin: int = 0  # latest k attaining s_min
    n: int = 0

    # reals held: w, s, s_min
    stored_reals = 3

    def update(self, inc: float) -> CusumState:
        inc = _check_increment(inc)
        # S_{n} becomes part of the history before S_{n+1} is formed; "<=" keeps
        # the latest minimiser on ties.
        if self.s <= self.s_min:
            self.s_min = self.s
            self.s_argmin = self.n
        self.w = max(0.0, self.w) + inc
        self.s += inc
        self.n += 1
        return self

    def reset(self) -> CusumState:
        self.w = 0.0
        self.s = 0.0
        self.s_min = math.inf
        self.s_argmin = 0
        self.n = 0
        return self

    @property
    def value(self) -> float:
        return self.w


@dataclass
class TeCusumState:
    cusum: CusumState = field(default_factory=CusumState)
    g: float = 0.0
    g_argmax: int = 0  # first sample index at which the current g was reached

    stored_reals = CusumState.stored_reals + 1

    def update(self, inc: float) -> TeCusumState:
        self.cusum.update(inc)
        if self.cusum.w > self.g:
            self.g = self.cusum.w
            self.g_argmax = self.cusum.n
        return self

    def reset(self) -> TeCusumState:
        self.cusum.reset()
        self.g = 0.0
        self.g_argmax = 0
        return self

    @property
    def w(self) -> float:
        return self.cusum.w

    @property
    def n(self) -> int:
        return self.cusum.n

    @property
    def value(self) -> float:
        return self.g


class FmaState:
    """Moving sum of the last ``w_len`` llr increments, updated in O(1)."""

    def __init__(self, w_len: int) -> None:
        if int(w_len) != w_len or w_len < 1:
            raise ValueError(f"window length must be a positive integer, got {w_len!r}")
        self.w_len = int(w_len)
        self.window: deque[float] = deque(maxlen=self.w_len)
        self.z = 0.0
        self.n = 0

    @property
    def capacity(self) -> int:
        return self.window.maxlen  # type: ignore[return-value]

    @property
    def stored_reals(self) -> int:
        # ring slots plus the running sum
        return self.capacity + 1

    @property
    def value(self) -> float:
        return self.z

    def update(self, inc: float) -> FmaState:
        inc = _check_increment(inc)
        self.z += inc
        if len(self.window) == self.w_len:
            self.z -= self.window[0]
        self.window.append(inc)
        self.n += 1
        return self

    def reset(self) -> FmaState:
        self.window.clear()
        self.z = 0.0
        self.n = 0
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FmaState):
            return NotImplemented
        return (
            self.w_len == other.w_len
            and self.z == other.z
            and self.n == other.n
            and list(self.window) == list(other.window)
        )

    def __repr__(self) -> str:
        return f"FmaState(w_len={self.w_len}, z={self.z!r}, n={self.n})"


LocalState = CusumState | TeCusumState | FmaState


@dataclass(frozen=True)
class ChangePointEstimate:
    nu_hat: int
    # Index where G was last raised. A convenience output, not a validated
    # estimator of the change end.
    n_hat: int | None = None


def cusum_update(state: CusumState, inc: float) -> CusumState:
    return state.update(inc)


def tecusum_update(state: TeCusumState, inc: float) -> TeCusumState:
    return state.update(inc)


def fma_update(state: FmaState, inc: float) -> FmaState:
    return state.update(inc)


def reset(state: LocalState) -> LocalState:
    return state.reset()


def estimate_change_point(state: CusumState | TeCusumState) -> ChangePointEstimate:
    """Latest minimiser of ``S_k`` over ``0 <= k < n``.

    For a TE-CUSUM state the index at which ``G`` reached its current value
    is also reported as ``n_hat``.
    """
    if isinstance(state, TeCusumState):
        inner = state.cusum
        n_hat = state.g_argmax if state.g > 0 else None
    else:
        inner, n_hat = state, None
    if inner.n == 0:
        raise EmptyStateError("no samples consumed yet")
    return ChangePointEstimate(nu_hat=inner.s_argmin, n_hat=n_hat)
