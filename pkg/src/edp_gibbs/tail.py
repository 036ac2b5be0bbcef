"""Rate function, sharp exceedance tail asymptotics, and the exceedance
conditional density, cross-checked by importance-sampling Monte Carlo.

Everything stays in log scale end to end: exp(n I(a_n)) is never
materialized, and the Monte Carlo estimator works with weights
exp(-t (s - n a_n)) <= 1 whose scale factor exp(-n I) is reattached
symbolically.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import logsumexp

from . import _kernels
from .conditional import growth_condition
from .densities import DensitySpec
from .errors import DegenerateEstimateError, PreconditionError
from .rng import SHARD_SIZE, sharded_uniforms, worker_count
from .sampling import quantile_table
from .tilting import solve_tilt, tilted_log_density

logger = logging.getLogger(__name__)

_DEGENERATE_TILT = 1e-10


@dataclass(frozen=True)
class RatePoint:
    x: float
    t_x: float
    I: float
    I_prime: float
    s_tx: float


@dataclass(frozen=True)
class TailEstimate:
    n: int
    a_n: float
    log_p_analytic: float
    log_p_mc: float
    mc_std_err: float
    mc_samples: int


def rate_I(spec: DensitySpec, x: float) -> RatePoint:
    """Legendre transform I(x) = x t_x - log Phi(t_x) with m(t_x) = x."""
    rec = solve_tilt(spec, float(x))
    value = float(x) * rec.t - rec.log_phi
    return RatePoint(x=float(x), t_x=rec.t, I=value, I_prime=rec.t,
                     s_tx=rec.s)


def tail_prob_approx(spec: DensitySpec, n: int, a_n: float) -> float:
    """log P(S_n >= n a_n) ~ -n I(a_n) - log(sqrt(2 pi n) t_n s(t_n))."""
    n = int(n)
    if n < 1:
        raise PreconditionError(f"need n >= 1, got {n}")
    rp = rate_I(spec, a_n)
    if not rp.t_x > _DEGENERATE_TILT:
        raise DegenerateEstimateError(
            f"degenerate saddlepoint: the level {a_n} gives tilt "
            f"{rp.t_x:.3g}; the tail formula needs t_n > 0")
    if growth_condition(spec, n, a_n) > 1.0:
        logger.warning(
            "tail approximation at n=%d, a_n=%g sits outside the "
            "growth-admissible regime (psi^2/sqrt(n psi') > 1)", n, a_n)
    return (-n * rp.I
            - math.log(math.sqrt(2.0 * math.pi * n) * rp.t_x * rp.s_tx))


def point_density_H(spec: DensitySpec, n: int, u: float) -> float:
    """log H_n(u) = log[ sqrt(n) exp(-n I(u)) / (sqrt(2 pi) s(t_u)) ]."""
    n = int(n)
    if n < 1:
        raise PreconditionError(f"need n >= 1, got {n}")
    rp = rate_I(spec, u)
    return (0.5 * math.log(n) - n * rp.I
            - 0.5 * math.log(2.0 * math.pi) - math.log(rp.s_tx))


def eta_schedule(spec: DensitySpec, n: int, a_n: float) -> float:
    """Width of the exceedance mixing window: (log n)^2 / (n h(a_n)).

    Vanishes while n h(a_n) eta_n / log n = log n grows, which is the
    direction the tail decomposition needs: the mass beyond a_n + eta_n
    is then exp(-(log n)^2) = n^(-log n) of the leading term.
    """
    n = int(n)
    if n < 2:
        raise PreconditionError(f"need n >= 2, got {n}")
    h_val = float(spec.h(np.asarray(float(a_n))))
    if h_val <= 0.0:
        raise PreconditionError(f"need h(a_n) > 0, got {h_val}")
    return math.log(n) ** 2 / (n * h_val)


# ---------------------------------------------------------------------------
# Exceedance conditional density: the tilted-mixture form
# ---------------------------------------------------------------------------

def _exceedance_nodes(spec: DensitySpec, n: int, a_n: float,
                      eta: float | None, nodes: int):
    if nodes < 4:
        raise PreconditionError(f"need at least 4 nodes, got {nodes}")
    rp = rate_I(spec, a_n)
    if not rp.t_x > _DEGENERATE_TILT:
        raise DegenerateEstimateError(
            f"degenerate saddlepoint at level {a_n}")
    width = eta_schedule(spec, n, a_n) if eta is None else float(eta)
    gl_x, gl_w = np.polynomial.legendre.leggauss(nodes)
    tau = a_n + 0.5 * width * (gl_x + 1.0)
    w = 0.5 * width * gl_w
    recs = [solve_tilt(spec, float(tv)) for tv in tau]
    log_coeff = np.array([
        math.log(wv) - n * (tv * r.t - r.log_phi) - math.log(r.s)
        for wv, tv, r in zip(w, tau, recs)])
    # The stated prefactor n t_n s(t_n) e^{n I(a_n)}, kept symbolic.
    log_prefactor = (math.log(n) + math.log(rp.t_x) + math.log(rp.s_tx)
                     + n * rp.I)
    return tau, recs, log_coeff, log_prefactor


def exceedance_density(spec: DensitySpec, n: int, a_n: float, y,
                       eta: float | None = None,
                       nodes: int = 64) -> np.ndarray:
    """log g_{A_n}(y): the tilted-mixture density of X_1 given the
    exceedance S_n >= n a_n, normalized over the mixing weights.

    The raw (unnormalized) form carries the prefactor
    n t_n s(t_n) e^{n I(a_n)}; its integral is reported separately by
    exceedance_raw_log_integral and tends to 1.
    """
    tau, recs, log_coeff, _ = _exceedance_nodes(spec, n, a_n, eta, nodes)
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    ys = np.atleast_1d(y)
    comp = np.empty((len(tau), len(ys)))
    for i, r in enumerate(recs):
        comp[i] = tilted_log_density(spec, r.t, ys)
    out = logsumexp(comp + log_coeff[:, None], axis=0) \
        - logsumexp(log_coeff)
    return float(out[0]) if scalar else out


def exceedance_raw_log_integral(spec: DensitySpec, n: int, a_n: float,
                                eta: float | None = None,
                                nodes: int = 64) -> float:
    """log of the integral of the as-stated (prefactored) mixture over y.

    Diagnostic: the stated normalization is only asymptotic; this value
    reports how far from 0 (log 1) it sits at finite n.
    """
    _, _, log_coeff, log_prefactor = _exceedance_nodes(spec, n, a_n, eta,
                                                       nodes)
    return float(log_prefactor + logsumexp(log_coeff))


def split_mass_ratio(spec: DensitySpec, n: int, a_n: float) -> float:
    """Mass of [a_n + eta_n, inf) under H_n relative to [a_n, a_n + eta_n].

    The exceedance mixture keeps only the first eta_n of the tail; this
    ratio bounds what the truncation discards.  Each piece is integrated
    with its own log shift so the e^{-n I} scale never materializes.
    """
    eta = eta_schedule(spec, n, a_n)
    a_n = float(a_n)
    t_a = rate_I(spec, a_n).t_x
    shift1 = point_density_H(spec, n, a_n)
    p1, _ = quad(lambda u: math.exp(point_density_H(spec, n, u) - shift1),
                 a_n, a_n + eta, limit=200)
    shift2 = point_density_H(spec, n, a_n + eta)
    p2, _ = quad(lambda u: math.exp(point_density_H(spec, n, u) - shift2),
                 a_n + eta, a_n + eta + 60.0 / (n * t_a), limit=200)
    return math.exp(shift2 + math.log(max(p2, 1e-300))
                    - shift1 - math.log(p1))


def exceedance_grid(spec: DensitySpec, n: int, a_n: float,
                    eta: float | None = None, nodes: int = 64,
                    points: int = 1 << 14):
    """Normalized exceedance density sampled on the standard level grid.

    Returns (x, log_values); the grid spans the tilted window at a_n,
    wide enough that the omitted tail mass is negligible.
    """
    rec = solve_tilt(spec, float(a_n))
    hi = float(a_n) + 40.0 * rec.s
    x = np.linspace(spec.support_left + 1e-12, hi, int(points))
    return x, exceedance_density(spec, n, a_n, x, eta=eta, nodes=nodes)


# ---------------------------------------------------------------------------
# Importance-sampling Monte Carlo oracle
# ---------------------------------------------------------------------------

def mc_tail_estimate(spec: DensitySpec, n: int, a_n: float, samples: int,
                     seed: int) -> TailEstimate:
    """Unbiased IS estimate of P(S_n >= n a_n) from the tilted proposal.

    Per draw: exp(n log Phi(t) - t Sum X) 1{Sum X >= n a_n}
            = e^{-n I(a_n)} exp(-t (Sum X - n a_n)) 1{...},
    so the bracketed weight lies in [0, 1] and the scale factor is
    reattached in log space.
    """
    n, samples = int(n), int(samples)
    if samples < 10_000:
        raise PreconditionError(
            f"need at least 1e4 samples for a stable band, got {samples}")
    rec = solve_tilt(spec, float(a_n))
    t, na = rec.t, n * float(a_n)
    table = quantile_table(spec, t)
    shards = (samples + SHARD_SIZE - 1) // SHARD_SIZE

    def one(shard: int):
        rows = min(SHARD_SIZE, samples - shard * SHARD_SIZE)
        u = sharded_uniforms(seed, f"mc-tail-{n}-{shard}", rows, columns=n)
        x = _kernels.quantile_lookup(np.ascontiguousarray(u).ravel(),
                                     table).reshape(rows, n)
        sums = np.sum(x, axis=1)
        logw = _kernels.exceed_log_weights(sums, t, na)
        with np.errstate(over="ignore"):
            w = np.exp(logw)
        return float(np.sum(w)), float(np.sum(w * w)), int(np.sum(w > 0.0))

    if shards == 1:
        parts = [one(0)]
    else:
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            parts = list(pool.map(one, range(shards)))
    sum_w = 0.0
    sum_w2 = 0.0
    hits = 0
    for sw, sw2, nz in parts:
        sum_w += sw
        sum_w2 += sw2
        hits += nz
    if hits == 0:
        raise DegenerateEstimateError(
            f"no draw reached the exceedance region in {samples} samples; "
            f"increase samples")
    mean_w = sum_w / samples
    var_w = max(sum_w2 / samples - mean_w * mean_w, 0.0)
    rel_err = math.sqrt(var_w / samples) / mean_w
    log_scale = n * rec.log_phi - t * na  # = -n I(a_n)
    return TailEstimate(n=n, a_n=float(a_n),
                        log_p_analytic=tail_prob_approx(spec, n, a_n),
                        log_p_mc=log_scale + math.log(mean_w),
                        mc_std_err=rel_err,
                        mc_samples=samples)
