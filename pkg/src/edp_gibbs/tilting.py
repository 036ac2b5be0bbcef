"""Exponential tilting calculus for light-tailed densities.

The tilted family is pi_t(x) = e^(t x) p(x) / Phi(t) with Phi the moment
generating function.  All Phi evaluations happen in log domain through a
saddle-centered window: the exponent K(x, t) = t x - g(x) is maximized at
x_hat = psi(t) (clamped to the boundary when the tilt is below the hazard
floor), the window is x_hat +/- 12 sigma with sigma = h'(x_hat)^(-1/2),
and panels are extended outward until the marginal mass they add is below
1e-15 of the running total.  Moments come from the same window, so m(t),
s^2(t) and mu3(t) are consistent with log Phi to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .densities import DensitySpec, hazard_floor, local_scale, psi_inverse
from .errors import (
    EvaluationOverflowError,
    SubMeanTargetError,
    UnreachableTargetError,
)
from .quadrature import panel_nodes

#: Sixth moment of the standard normal; drives the mu3 expansion factor
#: (M6 - 3) / 2 = 6.  A unit test re-derives it from the moment recursion
#: M_{2k} = (2k - 1) M_{2k-2}.
M6 = 15.0

_WINDOW_WIDTH = 12.0
_EXT_BLOCK = 6.0
_EXT_REL_TOL = 1e-15
_PANELS_PER_SIGMA = 2


@dataclass
class Window:
    """Saddle-centered integration window for one tilt."""
    x_hat: float
    sigma: float
    lo: float
    hi: float
    interior: bool


@dataclass
class TiltRecord:
    t: float
    log_phi: float
    m: float
    s2: float
    mu3: float
    method: str
    window: Window

    @property
    def s(self) -> float:
        return math.sqrt(self.s2)


@dataclass
class MomentComparison:
    t: float
    quadrature: tuple
    order1: tuple
    refined: tuple
    ratios: tuple
    ratios_refined: tuple


@dataclass
class PsiExpansion:
    t: float
    alpha: int
    sign_exact: float
    log_abs_exact: float
    sign_expansion: float
    log_abs_expansion: float
    ratio: float


def saddle_window(spec: DensitySpec, t: float, width: float = _WINDOW_WIDTH) -> Window:
    """Locate the maximizer of K(x, t) = t x - g(x) and its local scale."""
    t = float(t)
    floor = hazard_floor(spec)
    left = spec.support_left
    if t > floor:
        x_hat = psi_inverse(spec, t)
        sigma = local_scale(spec, x_hat)
        interior = True
    else:
        # K is decreasing on the whole support: mass piles at the boundary.
        x_hat = left
        probe = left + 1e-9 * max(1.0, abs(left) + 1.0)
        d = float(spec.h1(np.asarray(probe)))
        sigma = d ** -0.5 if d > 0 and np.isfinite(d) else 1.0
        interior = False
    lo = max(left, x_hat - width * sigma)
    hi = x_hat + width * sigma
    return Window(x_hat=x_hat, sigma=sigma, lo=lo, hi=hi, interior=interior)


def _log_weight(spec: DensitySpec, t: float):
    """log integrand x -> t x - g(x) + q(x) (no normalization)."""

    def ell(x):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            val = t * x - spec.g(x) + spec.q(x)
        return np.where(np.isfinite(val), val, -np.inf)

    return ell


def _window_integrals(spec: DensitySpec, t: float, powers, center: float,
                      window: Window) -> tuple[np.ndarray, float, Window]:
    """Integrals of (x-center)^k exp(K+q-shift) with outward extension.

    Returns (values, shift, extended_window); true integrals are
    values * exp(shift).
    """
    ell = _log_weight(spec, t)
    lo, hi, sigma = window.lo, window.hi, window.sigma

    probe = np.linspace(lo, hi, 257)
    shift = float(np.max(ell(probe)))
    if not np.isfinite(shift):
        raise EvaluationOverflowError(f"tilted exponent degenerate at t={t}")

    def block(a, b):
        n = max(8, int(math.ceil((b - a) / sigma)) * _PANELS_PER_SIGMA)
        x, w = panel_nodes(a, b, min(n, 4096))
        dens = np.exp(ell(x) - shift)
        return np.array([np.dot(w, (x - center) ** k * dens) for k in powers])

    vals = block(lo, hi)
    total0 = abs(vals[0]) if abs(vals[0]) > 0 else 1.0
    for _ in range(60):  # extend right
        add = block(hi, hi + _EXT_BLOCK * sigma)
        vals = vals + add
        hi += _EXT_BLOCK * sigma
        if abs(add[0]) <= _EXT_REL_TOL * total0:
            break
    for _ in range(60):  # extend left, stopping at the boundary
        if lo <= spec.support_left:
            break
        new_lo = max(spec.support_left, lo - _EXT_BLOCK * sigma)
        add = block(new_lo, lo)
        vals = vals + add
        lo = new_lo
        if abs(add[0]) <= _EXT_REL_TOL * total0:
            break
    return vals, shift, Window(window.x_hat, sigma, lo, hi, window.interior)


def log_mgf(spec: DensitySpec, t: float) -> float:
    """log Phi(t) = log int e^(t x) p(x) dx, computed in log domain."""
    t = float(t)
    cache = spec.cache("log_mgf")
    key = round(t, 12)
    if key in cache:
        return cache[key]
    window = saddle_window(spec, t)
    (z,), shift, _ = _window_integrals(spec, t, (0,), window.x_hat, window)
    if z <= 0:
        raise EvaluationOverflowError(f"vanishing tilted mass at t={t}")
    out = spec.log_c + shift + math.log(z)
    cache[key] = out
    return out


def tilted_log_density(spec: DensitySpec, t: float, x):
    """log pi_t(x) = t x + log p(x) - log Phi(t)."""
    return t * np.asarray(x, dtype=float) + spec.log_density(x) - log_mgf(spec, t)


def moments(spec: DensitySpec, t: float) -> TiltRecord:
    """Quadrature moments (m, s^2, mu3) of pi_t, consistent with log Phi."""
    t = float(t)
    cache = spec.cache("moments")
    key = round(t, 12)
    if key in cache:
        return cache[key]
    window = saddle_window(spec, t)
    (z, m1), shift, wext = _window_integrals(
        spec, t, (0, 1), window.x_hat, window)
    if z <= 0:
        raise EvaluationOverflowError(f"vanishing tilted mass at t={t}")
    m = window.x_hat + m1 / z
    (z2, s2_raw, mu3_raw), _, _ = _window_integrals(
        spec, t, (0, 2, 3), m, wext)
    rec = TiltRecord(
        t=t, log_phi=spec.log_c + shift + math.log(z), m=float(m),
        s2=float(s2_raw / z2), mu3=float(mu3_raw / z2),
        method="quadrature", window=wext)
    cache[key] = rec
    cache_phi = spec.cache("log_mgf")
    cache_phi.setdefault(key, rec.log_phi)
    return rec


def solve_tilt(spec: DensitySpec, a: float) -> TiltRecord:
    """Tilt with mean a: returns the TiltRecord at the root of m(t) = a.

    The target must exceed the untilted mean m(0); the root satisfies
    |m(t) - a| <= 1e-8 * max(1, a).
    """
    a = float(a)
    cache = spec.cache("tilt")
    key = round(a, 12)
    if key in cache:
        return cache[key]
    tol = 1e-8 * max(1.0, abs(a))
    rec0 = moments(spec, 0.0)
    if a <= rec0.m:
        if abs(a - rec0.m) <= tol:
            cache[key] = rec0
            return rec0
        raise SubMeanTargetError(
            f"target mean {a} at or below the untilted mean {rec0.m:.6g}")
    t_lo, t_hi = 0.0, 1.0
    it = 0
    while moments(spec, t_hi).m < a:
        t_lo = t_hi
        t_hi *= 2.0
        it += 1
        if t_hi > 1e9 or it > 64:
            raise UnreachableTargetError(f"mean {a} not reached below t={t_hi:.3g}")
    t_root = brentq(lambda t: moments(spec, t).m - a, t_lo, t_hi,
                    xtol=1e-13, rtol=8.9e-16, maxiter=256)
    rec = moments(spec, t_root)
    for _ in range(8):  # Newton polish using m'(t) = s^2(t)
        if abs(rec.m - a) <= tol:
            break
        rec = moments(spec, rec.t - (rec.m - a) / rec.s2)
    if abs(rec.m - a) > tol:
        raise UnreachableTargetError(f"tilt solve stalled at |m-a|={abs(rec.m - a):.2e}")
    cache[key] = rec
    return rec


def asymptotic_moments(spec: DensitySpec, t: float) -> MomentComparison:
    """Quadrature moments against their saddle expansions.

    order1 is (psi(t), psi'(t), 6 psi''(t)); refined applies the
    next-order corrections driven by h''(x_hat):

        m   ~ x_hat - h'' sigma^4 / 2
        s^2 ~ sigma^2 - (h'' sigma^4)^2 / 4
        mu3 ~ (3 - M6)/2 h'' sigma^6 - (h'' sigma^4)^3 / 4
    """
    rec = moments(spec, t)
    x_hat = psi_inverse(spec, t)
    sigma = local_scale(spec, x_hat)
    h1 = float(spec.h1(np.asarray(x_hat)))
    h2 = float(spec.h2(np.asarray(x_hat)))
    psi1 = 1.0 / h1
    psi2 = -h2 / h1 ** 3
    order1 = (x_hat, psi1, 0.5 * (M6 - 3.0) * psi2)
    refined = (
        x_hat - 0.5 * h2 * sigma ** 4,
        sigma ** 2 - 0.25 * (h2 * sigma ** 4) ** 2,
        0.5 * (3.0 - M6) * h2 * sigma ** 6 - 0.25 * (h2 * sigma ** 4) ** 3,
    )
    quadrature = (rec.m, rec.s2, rec.mu3)
    ratios = tuple(qv / ov for qv, ov in zip(quadrature, order1))
    ratios_refined = tuple(qv / rv for qv, rv in zip(quadrature, refined))
    return MomentComparison(t=float(t), quadrature=quadrature, order1=order1,
                            refined=refined, ratios=ratios,
                            ratios_refined=ratios_refined)


def skewness_ratio(spec: DensitySpec, t: float) -> float:
    """mu3(t) / s(t)^3, the normalized skewness of the tilted density."""
    rec = moments(spec, t)
    return rec.mu3 / rec.s2 ** 1.5


def _gauss_moment(alpha: int, half_width: float) -> float:
    """int_{-L}^{L} y^alpha e^(-y^2/2) dy by the shared panel rule."""
    if alpha % 2 == 1:
        return 0.0
    x, w = panel_nodes(-half_width, half_width, max(8, int(2 * half_width) * 2))
    return float(np.dot(w, x ** alpha * np.exp(-0.5 * x * x)))


def laplace_psi_expansion(spec: DensitySpec, t: float, alpha: int,
                          l=None) -> PsiExpansion:
    """Centered tilted moment integral against its two-term saddle expansion.

    Exact side: Psi(t, alpha) = int (x - x_hat)^alpha e^(t x) p(x) dx in
    signed log representation.  Expansion side:

        c sigma^(alpha+1) e^(K(x_hat, t)) *
            [ int y^alpha e^(-y^2/2) dy  -  (h'' sigma^3 / 6) int y^(alpha+3) e^(-y^2/2) dy ]

    with both truncated integrals over |y| <= l(t)^(1/3) / sqrt(2).
    """
    t = float(t)
    alpha = int(alpha)
    if alpha < 0:
        raise ValueError("alpha must be a nonnegative integer")
    if l is None:
        l = lambda u: np.log1p(u) ** 3
    window = saddle_window(spec, t)
    if not window.interior:
        raise UnreachableTargetError(f"tilt {t} below the hazard floor")
    x_hat, sigma = window.x_hat, window.sigma

    (j,), shift, _ = _window_integrals(spec, t, (alpha,), x_hat, window)
    sign_exact = math.copysign(1.0, j) if j != 0 else 0.0
    log_abs_exact = spec.log_c + shift + (math.log(abs(j)) if j != 0 else -math.inf)

    half_width = float(l(np.asarray(t))) ** (1.0 / 3.0) / math.sqrt(2.0)
    h2 = float(spec.h2(np.asarray(x_hat)))
    t1 = (_gauss_moment(alpha, half_width)
          - h2 * sigma ** 3 / 6.0 * _gauss_moment(alpha + 3, half_width))
    k_hat = t * x_hat - float(spec.g(np.asarray(x_hat)))
    sign_exp = math.copysign(1.0, t1) if t1 != 0 else 0.0
    log_abs_exp = (spec.log_c + k_hat + (alpha + 1) * math.log(sigma)
                   + (math.log(abs(t1)) if t1 != 0 else -math.inf))

    if sign_exact == 0.0 or sign_exp == 0.0:
        ratio = 0.0
    else:
        ratio = sign_exact * sign_exp * math.exp(log_abs_exact - log_abs_exp)
    return PsiExpansion(t=t, alpha=alpha, sign_exact=sign_exact,
                        log_abs_exact=log_abs_exact, sign_expansion=sign_exp,
                        log_abs_expansion=log_abs_exp, ratio=ratio)
