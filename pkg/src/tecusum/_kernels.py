"""Compiled inner loop shared by calibration and Monte Carlo runs.

Mirrors ``GlobalDetector.step`` operation for operation (same increment
formula, same summation order) so both paths agree bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STAT_CUSUM = 0
STAT_TECUSUM = 1
STAT_FMA = 2

RULE_SUM = 0
RULE_MAX = 1
RULE_CFIXED = 2
RULE_CADAPT = 3

# istate slots
POS, FILLED, ORIGIN, COUNT = 0, 1, 2, 3


@njit(cache=True)
def _reset(w, g, s, smin, sarg, z, istate):
    n = istate[COUNT]
    for l in range(w.shape[0]):
        w[l] = 0.0
        g[l] = 0.0
        s[l] = 0.0
        smin[l] = np.inf
        sarg[l] = n
        z[l] = 0.0
    istate[POS] = 0
    istate[FILLED] = 0
    istate[ORIGIN] = n


@njit(cache=True)
def run_block(
    x, slope, mid, stat, rule, param, h, window,
    w, g, s, smin, sarg, z, ring, vals, istate,
    cyclical, alarms, nu_hat, traj,
):
    """Feed rows of ``x`` through the detector.

    Returns ``(n_alarms, rows_consumed)``. Stops early after the first alarm
    in one-shot mode, or once ``alarms`` is full in cyclical mode.
    """
    T, L = x.shape
    n_al = 0
    keep_traj = traj.shape[0] > 0
    for t in range(T):
        n = istate[COUNT] + 1
        istate[COUNT] = n
        pos = istate[POS]
        full = istate[FILLED] == window
        for l in range(L):
            inc = slope[l] * (x[t, l] - mid[l])
            if s[l] <= smin[l]:
                smin[l] = s[l]
                sarg[l] = n - 1
            wl = w[l]
            if wl < 0.0:
                wl = 0.0
            wl = wl + inc
            w[l] = wl
            s[l] += inc
            if wl > g[l]:
                g[l] = wl
            if stat == STAT_FMA:
                zl = z[l] + inc
                if full:
                    zl -= ring[l, pos]
                ring[l, pos] = inc
                z[l] = zl
                vals[l] = zl
            elif stat == STAT_TECUSUM:
                vals[l] = g[l]
            else:
                vals[l] = wl
        if stat == STAT_FMA:
            istate[POS] = (pos + 1) % window
            if not full:
                istate[FILLED] += 1

        best = vals[0]
        ibest = 0
        for l in range(1, L):
            if vals[l] > best:
                best = vals[l]
                ibest = l
        if rule == RULE_SUM:
            total = 0.0
            for l in range(L):
                total += vals[l]
            fused = total / L
        elif rule == RULE_MAX:
            fused = best
        else:
            cut = param if rule == RULE_CFIXED else param * best
            total = 0.0
            k = 0
            for l in range(L):
                if vals[l] >= cut:
                    total += vals[l]
                    k += 1
            fused = total / k if k > 0 else best
        if keep_traj:
            traj[t] = fused

        if fused > h:
            alarms[n_al] = n
            nu_hat[n_al] = sarg[ibest]
            n_al += 1
            if not cyclical:
                return n_al, t + 1
            _reset(w, g, s, smin, sarg, z, istate)
            if n_al == alarms.shape[0]:
                return n_al, t + 1
    return n_al, T


@njit(cache=True)
def first_alarms(x_batch, slope, mid, stat, rule, param, h, window):
    """One-shot first-alarm index (1-based, 0 if none) for each matrix in a
    ``(runs, T, L)`` batch; also returns the change-point estimate at alarm."""
    R, T, L = x_batch.shape
    out = np.zeros(R, dtype=np.int64)
    nus = np.full(R, -1, dtype=np.int64)
    w = np.zeros(L)
    g = np.zeros(L)
    s = np.zeros(L)
    smin = np.zeros(L)
    sarg = np.zeros(L, dtype=np.int64)
    z = np.zeros(L)
    ring = np.zeros((L, max(window, 1)))
    vals = np.zeros(L)
    istate = np.zeros(4, dtype=np.int64)
    alarms = np.zeros(1, dtype=np.int64)
    nu_hat = np.zeros(1, dtype=np.int64)
    traj = np.zeros(0)
    for r in range(R):
        istate[COUNT] = 0
        _reset(w, g, s, smin, sarg, z, istate)
        n_al, _ = run_block(
            x_batch[r], slope, mid, stat, rule, param, h, window,
            w, g, s, smin, sarg, z, ring, vals, istate,
            False, alarms, nu_hat, traj,
        )
        if n_al > 0:
            out[r] = alarms[0]
            nus[r] = nu_hat[0]
    return out, nus
