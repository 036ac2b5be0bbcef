"""Seeded samplers: tilted draws, point-conditional vectors, exceedance
vectors, and the all-coordinates-localized demonstration.

Draw pipelines split into two stages so the numba/numpy kernel backends
stay bitwise-identical: streams produce uniforms (rng module), kernels
do table lookups and elementwise arithmetic (_kernels module), and all
reductions run in shared numpy code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import _kernels
from .conditional import ConvolutionLadder
from .densities import DensitySpec
from .errors import AcceptanceStarvationError, PreconditionError
from .rng import SHARD_SIZE, sharded_uniforms
from .tilting import moments, solve_tilt, tilted_log_density

_TABLE_POINTS = (1 << 16) + 1
_CDF_POINTS = 1 << 13


def quantile_table(spec: DensitySpec, t: float) -> np.ndarray:
    """Inverse CDF of pi^t tabulated on a uniform probability grid.

    The CDF is integrated on the Laplace window of the tilt (extended
    until the edge density is negligible), inverted by monotone cubic
    interpolation, and evaluated once on the table grid; draws then cost
    one linear interpolation each.
    """
    cache = spec.cache("quantile_table")
    key = round(float(t), 12)
    if key in cache:
        return cache[key]
    rec = moments(spec, t)
    w = rec.window
    left = spec.support_left
    floor_x = left + 1e-9 * max(1.0, abs(left)) if math.isfinite(left) \
        else -math.inf
    lo, hi = max(w.lo, floor_x), w.hi
    peak = float(tilted_log_density(spec, t, w.x_hat)) if w.interior else \
        float(tilted_log_density(spec, t, lo + 1e-12 * max(1.0, abs(lo))))
    step = 6.0 * w.sigma
    for _ in range(60):
        if float(tilted_log_density(spec, t, hi)) < peak - 60.0:
            break
        hi += step
    for _ in range(60):
        if lo <= floor_x or \
                float(tilted_log_density(spec, t, lo)) < peak - 60.0:
            break
        lo = max(floor_x, lo - step)
    x = np.linspace(lo, hi, _CDF_POINTS)
    with np.errstate(over="ignore"):
        pdf = np.exp(tilted_log_density(spec, t, x) - peak)
    inc = 0.5 * (pdf[1:] + pdf[:-1]) * (x[1] - x[0])
    cdf = np.concatenate(([0.0], np.cumsum(inc)))
    cdf /= cdf[-1]
    keep = np.concatenate(([True], np.diff(cdf) > 0))
    inverse = PchipInterpolator(cdf[keep], x[keep])
    u = np.linspace(0.0, 1.0, _TABLE_POINTS)
    table = inverse(np.clip(u, cdf[keep][0], cdf[keep][-1]))
    cache[key] = np.asarray(table, dtype=np.float64)
    return cache[key]


def sample_tilted(spec: DensitySpec, t: float, count: int, seed: int,
                  experiment: str = "tilt") -> np.ndarray:
    """count draws from pi^t by table inversion of sharded uniforms."""
    if int(count) < 1:
        raise PreconditionError(f"need count >= 1, got {count}")
    table = quantile_table(spec, t)
    u = sharded_uniforms(seed, experiment, int(count))
    return _kernels.quantile_lookup(u, table)


def _batch_tilted(spec: DensitySpec, t: float, rows: int, cols: int,
                  seed: int, experiment: str) -> np.ndarray:
    table = quantile_table(spec, t)
    u = sharded_uniforms(seed, experiment, rows, columns=cols)
    flat = _kernels.quantile_lookup(np.ascontiguousarray(u).ravel(), table)
    return flat.reshape(rows, cols)


def _tilted_rows_with_uniform(spec: DensitySpec, t: float, rows: int,
                              n: int, seed: int,
                              experiment: str) -> tuple[np.ndarray,
                                                        np.ndarray]:
    """(rows x n) tilted draws plus one untransformed uniform per row."""
    table = quantile_table(spec, t)
    u = sharded_uniforms(seed, experiment, rows, columns=n + 1)
    x = _kernels.quantile_lookup(
        np.ascontiguousarray(u[:, :n]).ravel(), table).reshape(rows, n)
    return x, u[:, n]


# ---------------------------------------------------------------------------
# Exact sequential sampling under the point condition S_n = n a_n
# ---------------------------------------------------------------------------

_LOG_FLOOR = -1.0e4


def sample_conditional_point(spec: DensitySpec, n: int, a_n: float,
                             count: int, seed: int,
                             points: int = 1 << 11) -> np.ndarray:
    """count exact draws of (X_1..X_n) given S_n = n a_n, for n <= 16.

    Coordinate i+1 is drawn from its exact conditional given the running
    residual sum, read off the convolution ladder; the final coordinate
    is the residual itself, so the constraint holds to rounding.
    """
    n, count = int(n), int(count)
    if n > 16:
        raise PreconditionError(
            f"sequential exact sampler capped at n=16, got {n}")
    if n < 2:
        raise PreconditionError(f"need n >= 2, got {n}")
    if count < 1:
        raise PreconditionError(f"need count >= 1, got {count}")
    ladder = ConvolutionLadder(spec, n, a_n, points=points)
    u = sharded_uniforms(seed, f"conditional-point-{n}", count,
                         columns=n - 1)
    if n == 2:
        u = u[:, None]
    x_grid = ladder.base_x
    dx = ladder.dx
    with np.errstate(divide="ignore"):
        log_base = np.where(ladder.base > 0.0,
                            np.log(np.maximum(ladder.base, 1e-320)),
                            _LOG_FLOOR)
    out = np.empty((count, n), dtype=np.float64)
    rest = np.full(count, n * a_n, dtype=np.float64)
    chunk = 2048
    log_folds = {}
    for j in range(1, n):
        vals = ladder.fold(j)
        with np.errstate(divide="ignore"):
            log_folds[j] = np.where(vals > 0.0,
                                    np.log(np.maximum(vals, 1e-320)),
                                    _LOG_FLOOR)
    # The slice density base(x) * fold_j(rest - x) puts essentially all
    # of its mass within a tilted standard deviation of rest / (j + 1)
    # (the remaining coordinates share the surplus evenly), so each draw
    # only needs the grid inside a +-12 sigma window around that center.
    sd = moments(spec, ladder.tau).s
    half = 12.0 * sd
    width = min(points, int(2.0 * half / dx) + 3)
    offs = np.arange(width)
    for i in range(n - 1):
        j = n - i - 1
        logf = log_folds[j]
        f_lo = j * ladder.x0
        f_len = len(logf)
        for c0 in range(0, count, chunk):
            c1 = min(c0 + chunk, count)
            r = rest[c0:c1]
            start = np.clip(
                np.floor((r / (j + 1) - half - x_grid[0]) / dx),
                0, len(x_grid) - width).astype(np.int64)
            cols = start[:, None] + offs[None, :]
            xv = x_grid[0] + cols * dx
            pos = (r[:, None] - xv - f_lo) / dx
            ok = (pos >= 0.0) & (pos <= f_len - 1)
            pos = np.clip(pos, 0.0, f_len - 1.0)
            i0 = np.minimum(pos.astype(np.int64), f_len - 2)
            frac = pos - i0
            interp = (1.0 - frac) * logf[i0] + frac * logf[i0 + 1]
            logd = np.where(ok, log_base[cols] + interp, _LOG_FLOOR)
            shift = np.max(logd, axis=1, keepdims=True)
            dens = np.exp(logd - shift)
            inc = 0.5 * (dens[:, 1:] + dens[:, :-1]) * dx
            cdf = np.concatenate(
                (np.zeros((c1 - c0, 1)), np.cumsum(inc, axis=1)), axis=1)
            target = u[c0:c1, i] * cdf[:, -1]
            idx = np.minimum((cdf < target[:, None]).sum(axis=1) - 1,
                             width - 2)
            idx = np.maximum(idx, 0)
            rows = np.arange(c1 - c0)
            seg = cdf[rows, idx + 1] - cdf[rows, idx]
            w = np.where(seg > 0.0, (target - cdf[rows, idx])
                         / np.where(seg > 0.0, seg, 1.0), 0.0)
            draw = xv[rows, idx] + np.clip(w, 0.0, 1.0) * dx
            out[c0:c1, i] = draw
        rest -= out[:, i]
    out[:, n - 1] = rest
    return out


# ---------------------------------------------------------------------------
# Exceedance conditioning by exact rejection under the tilted proposal
# ---------------------------------------------------------------------------

def sample_conditional_exceedance(spec: DensitySpec, n: int, a_n: float,
                                  count: int, seed: int) -> np.ndarray:
    """count draws of (X_1..X_n) given S_n >= n a_n.

    Proposal: i.i.d. pi^{t_n} coordinates.  A draw with sum s >= n a_n
    is accepted with probability exp(-t_n (s - n a_n)), which makes the
    accepted law exactly the conditional law of p given the exceedance
    (the tilt factor cancels against the proposal).
    """
    n, count = int(n), int(count)
    if n < 1 or count < 1:
        raise PreconditionError("need n >= 1 and count >= 1")
    rec = solve_tilt(spec, float(a_n))
    t, na = rec.t, n * float(a_n)
    pilot_rows = 4096
    pilot, pilot_u = _tilted_rows_with_uniform(spec, t, pilot_rows, n,
                                               seed, f"exceed-pilot-{n}")
    accepted = _accept(pilot, pilot_u, t, na)
    rate = max(len(accepted), 1) / pilot_rows
    if len(accepted) / pilot_rows < 1e-4:
        raise AcceptanceStarvationError(
            f"acceptance rate below 1e-4 under the tilted proposal "
            f"(pilot {len(accepted)}/{pilot_rows}); lower a_n or n, or "
            f"sample the point condition instead")
    collected = [accepted]
    have = len(accepted)
    batch = 0
    max_batches = int(4 * count / (rate * SHARD_SIZE)) + 8
    while have < count:
        if batch >= max_batches:
            raise AcceptanceStarvationError(
                f"exceedance sampler starved after {batch} batches "
                f"({have}/{count} accepted); lower a_n or n")
        rows = min(SHARD_SIZE, max(1024, int((count - have) / rate) + 64))
        block, block_u = _tilted_rows_with_uniform(spec, t, rows, n, seed,
                                                   f"exceed-{n}-{batch}")
        collected.append(_accept(block, block_u, t, na))
        have += len(collected[-1])
        batch += 1
    return np.concatenate(collected, axis=0)[:count]


def _accept(x: np.ndarray, u: np.ndarray, t: float,
            na: float) -> np.ndarray:
    sums = np.sum(x, axis=1)
    logw = _kernels.exceed_log_weights(sums, t, na)
    with np.errstate(over="ignore"):
        keep = u < np.exp(logw)
    return x[keep]


@dataclass(frozen=True)
class DemocracyEstimate:
    n: int
    a_n: float
    epsilon: float
    fraction: float
    std_err: float
    count: int


def democracy_demo(spec: DensitySpec, n: int, a_n: float, epsilon: float,
                   count: int, seed: int) -> DemocracyEstimate:
    """P(all coordinates within epsilon of a_n | S_n >= n a_n), estimated
    from exceedance-conditional samples with a binomial standard error."""
    if float(epsilon) < 0.0:
        raise PreconditionError(f"need epsilon >= 0, got {epsilon}")
    draws = sample_conditional_exceedance(spec, n, a_n, count, seed)
    flags = _kernels.inside_window(draws, float(a_n) - float(epsilon),
                                   float(a_n) + float(epsilon))
    frac = float(np.sum(flags)) / len(flags)
    err = math.sqrt(max(frac * (1.0 - frac), 0.0) / len(flags))
    return DemocracyEstimate(n=int(n), a_n=float(a_n),
                             epsilon=float(epsilon), fraction=frac,
                             std_err=err, count=len(flags))
