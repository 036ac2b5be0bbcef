"""Hot inner loops with interchangeable numba and numpy backends.

The kernels do only table lookups, linear interpolation, and elementwise
comparisons — no transcendentals and no reductions — so both backends
produce bitwise-identical arrays (IEEE +,-,*,/ round identically
everywhere; exp/log and summation order would not).  Reductions happen
in the callers, shared by both paths.

EDP_NUMBA=0 forces the numpy path; EDP_NUMBA=1 requires numba; unset
tries numba and quietly falls back.
"""

from __future__ import annotations

import os

import numpy as np


def _quantile_lookup_np(u: np.ndarray, table: np.ndarray) -> np.ndarray:
    pos = u * (len(table) - 1)
    idx = np.minimum(pos.astype(np.int64), len(table) - 2)
    frac = pos - idx
    return table[idx] + (table[idx + 1] - table[idx]) * frac


def _exceed_log_weights_np(sums: np.ndarray, t: float,
                           na: float) -> np.ndarray:
    # log importance weight -t (s - na) where s >= na, else -inf marker;
    # the caller exponentiates (shared code, so backends stay identical).
    out = -t * (sums - na)
    return np.where(sums >= na, out, -np.inf)


def _inside_window_np(samples: np.ndarray, lo: float,
                      hi: float) -> np.ndarray:
    flags = (samples > lo) & (samples < hi)
    return flags.all(axis=1).astype(np.uint8)


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def quantile_lookup(u, table):
        m = len(table)
        out = np.empty(len(u), dtype=np.float64)
        for i in range(len(u)):
            pos = u[i] * (m - 1)
            idx = int(pos)
            if idx > m - 2:
                idx = m - 2
            frac = pos - idx
            out[i] = table[idx] + (table[idx + 1] - table[idx]) * frac
        return out

    @njit(cache=True)
    def exceed_log_weights(sums, t, na):
        out = np.empty(len(sums), dtype=np.float64)
        for i in range(len(sums)):
            if sums[i] >= na:
                out[i] = -t * (sums[i] - na)
            else:
                out[i] = -np.inf
        return out

    @njit(cache=True)
    def inside_window(samples, lo, hi):
        rows = samples.shape[0]
        out = np.empty(rows, dtype=np.uint8)
        for i in range(rows):
            good = True
            for j in range(samples.shape[1]):
                v = samples[i, j]
                if not (lo < v < hi):
                    good = False
                    break
            out[i] = 1 if good else 0
        return out

    return quantile_lookup, exceed_log_weights, inside_window


_FLAG = os.environ.get("EDP_NUMBA", "").strip()
if _FLAG == "0":
    BACKEND = "numpy"
elif _FLAG == "1":
    _build = _build_numba()
    BACKEND = "numba"
else:
    try:
        _build = _build_numba()
        BACKEND = "numba"
    except Exception:
        BACKEND = "numpy"

if BACKEND == "numba":
    quantile_lookup, exceed_log_weights, inside_window = _build
else:
    quantile_lookup = _quantile_lookup_np
    exceed_log_weights = _exceed_log_weights_np
    inside_window = _inside_window_np
