"""Light-tailed density model p(x) = c * exp(-(g(x) - q(x))) on (support_left, inf).

The model is parametrized by a smooth convex-ish potential ``g`` whose
derivative ``h = g'`` grows without bound, plus a small perturbation ``q``
subject to the window bound sup_{|v-x|<theta*x} |q(v)| <= (x*h(x))^(-1/2).
Two regularity classes are supported:

* ``rbeta``    -- h(x) = x^beta * l(x) with l slowly varying (beta > 0);
* ``rinfinity`` -- h increasing so fast that its inverse psi = h^{-1} is
  slowly varying with vanishing relative derivative profile.

Built-in examples: a Weibull-type density (k > 1) in ``rbeta`` with
beta = k - 1, and a double-exponential-potential density exp(-e^(x-1))
in ``rinfinity``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import (
    BoundaryError,
    NonConcaveWindowError,
    PreconditionError,
    UnreachableTargetError,
)
from .quadrature import integrate, panel_nodes

Array = np.ndarray
ScalarFn = Callable[[Array], Array]

_BRACKET_CAP = 1e15
_ROOT_RTOL = 1e-10


@dataclass(eq=False)
class DensitySpec:
    """A density p(x) = exp(log_c - g(x) + q(x)) on (support_left, inf).

    The derivative closures h..h3 are g', g'', g''', g'''' respectively;
    all closures accept numpy arrays.  ``log_c_value`` may be None, in
    which case the normalizing constant is computed once by adaptive
    quadrature on first use and cached (idempotent, so safe under
    concurrent first use).
    """

    name: str
    g: ScalarFn
    h: ScalarFn
    h1: ScalarFn
    h2: ScalarFn
    h3: ScalarFn
    q: ScalarFn
    support_left: float = 0.0
    class_hint: str = "unknown"
    beta: float | None = None
    params: dict = field(default_factory=dict)
    log_c_value: float | None = None
    _caches: dict = field(default_factory=dict, repr=False)

    @property
    def log_c(self) -> float:
        if self.log_c_value is None:
            self.log_c_value = _normalize(self)
        return self.log_c_value

    def log_density(self, x):
        return log_density(self, x)

    def density(self, x):
        return np.exp(log_density(self, x))

    def cache(self, kind: str) -> dict:
        return self._caches.setdefault(kind, {})


def _normalize(spec: DensitySpec) -> float:
    """log of 1 / int exp(-g + q) via adaptive quadrature."""
    lo = spec.support_left

    def integrand(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            val = np.exp(-spec.g(x) + spec.q(x))
        return np.where(np.isfinite(val), val, 0.0)

    # Locate a rough mode and an upper cutoff so quad sees the bump.
    probe = lo + np.logspace(-6, 3, 200)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        lp = -spec.g(probe) + spec.q(probe)
    lp = np.where(np.isfinite(lp), lp, -np.inf)
    x_mode = float(probe[np.argmax(lp)])
    hi = x_mode
    target = float(np.max(lp)) - 60.0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        while hi < 1e6:
            tail_lp = -spec.g(hi) + spec.q(hi)
            if not (np.isfinite(tail_lp) and tail_lp > target):
                break
            hi = 2.0 * hi + 1.0
    total, _ = quad(lambda x: float(integrand(x)), lo, hi,
                    points=[x_mode], limit=200)
    return -math.log(total)


def log_density(spec: DensitySpec, x) -> Array | float:
    """log p(x); raises BoundaryError at or below the support boundary."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= spec.support_left):
        raise BoundaryError(
            f"evaluation at or below the boundary {spec.support_left}")
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = spec.log_c - spec.g(arr) + spec.q(arr)
        out = np.where(np.isfinite(out), out, -np.inf)
    return out if arr.ndim else float(out)


def hazard_and_derivatives(spec: DensitySpec, x):
    """(h, h', h'', h''') of the potential derivative at x."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= spec.support_left):
        raise BoundaryError(
            f"evaluation at or below the boundary {spec.support_left}")
    vals = (spec.h(arr), spec.h1(arr), spec.h2(arr), spec.h3(arr))
    if arr.ndim:
        return vals
    return tuple(float(v) for v in vals)


def hazard_floor(spec: DensitySpec) -> float:
    """h just inside the left boundary (may be -inf-like for Weibull)."""
    x0 = spec.support_left + 1e-9 * max(1.0, abs(spec.support_left) + 1.0)
    return float(spec.h(np.asarray(x0)))


def psi_inverse(spec: DensitySpec, u: float) -> float:
    """Smallest x with h(x) = u, for u above the hazard floor.

    Bisection bracket plus Newton polish; the result satisfies
    |h(x) - u| <= 1e-10 * max(1, |u|).
    """
    u = float(u)
    floor = hazard_floor(spec)
    if u <= floor:
        raise UnreachableTargetError(
            f"level {u} at or below the hazard floor {floor:.6g}")
    lo = spec.support_left + 1e-9 * max(1.0, abs(spec.support_left) + 1.0)
    hi = max(lo * 2, spec.support_left + 1.0)
    it = 0
    while float(spec.h(np.asarray(hi))) < u:
        hi *= 2.0
        it += 1
        if hi > _BRACKET_CAP or it > 200:
            raise UnreachableTargetError(f"level {u} not reached below {hi:.3g}")
    # Bisection until the bracket is narrow, then Newton.
    flo = float(spec.h(np.asarray(lo))) - u
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = float(spec.h(np.asarray(mid))) - u
        if fm == 0.0:
            lo = hi = mid
            break
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, abs(mid)):
            break
    x = 0.5 * (lo + hi)
    tol = _ROOT_RTOL * max(1.0, abs(u))
    for _ in range(50):
        fx = float(spec.h(np.asarray(x))) - u
        if abs(fx) <= tol:
            return x
        d = float(spec.h1(np.asarray(x)))
        if d <= 0:
            break
        step = fx / d
        x_new = x - step
        if not (lo <= x_new <= hi):
            x_new = 0.5 * (lo + hi)
        x = x_new
    if abs(float(spec.h(np.asarray(x))) - u) > tol:
        raise UnreachableTargetError(f"Newton failed to pin h(x) = {u}")
    return x


def local_scale(spec: DensitySpec, x_hat: float) -> float:
    """sigma = h'(x_hat)^(-1/2); errors out if the window is not concave."""
    d = float(spec.h1(np.asarray(x_hat)))
    if d <= 0.0 or not np.isfinite(d):
        raise NonConcaveWindowError(f"h'({x_hat}) = {d} is not positive")
    return d ** -0.5


# ---------------------------------------------------------------------------
# Built-in families and the on-disk document format
# ---------------------------------------------------------------------------

def weibull(k: float = 2.0) -> DensitySpec:
    """Weibull-type density k x^(k-1) exp(-x^k): potential x^k - (k-1) log x."""
    k = float(k)
    if k <= 1.0:
        raise PreconditionError("weibull family needs k > 1")
    km1 = k - 1.0

    def g(x):
        return x ** k - km1 * np.log(x)

    def h(x):
        return k * x ** km1 - km1 / x

    def h1(x):
        return k * km1 * x ** (k - 2.0) + km1 / x ** 2

    def h2(x):
        return k * km1 * (k - 2.0) * x ** (k - 3.0) - 2.0 * km1 / x ** 3

    def h3(x):
        return k * km1 * (k - 2.0) * (k - 3.0) * x ** (k - 4.0) + 6.0 * km1 / x ** 4

    return DensitySpec(
        name="weibull", g=g, h=h, h1=h1, h2=h2, h3=h3, q=_zero,
        support_left=0.0, class_hint="rbeta", beta=km1,
        params={"k": k}, log_c_value=math.log(k))


def double_exp() -> DensitySpec:
    """Density exp(-e^(x-1)) on (0, inf); the potential derivative is e^(x-1)."""

    def g(x):
        # Saturating to inf far in the tail is the intended behaviour;
        # suppress the elementwise overflow warning it would raise.
        with np.errstate(over="ignore"):
            return np.exp(x - 1.0)

    return DensitySpec(
        name="doubleexp", g=g, h=g, h1=g, h2=g, h3=g, q=_zero,
        support_left=0.0, class_hint="rinfinity", beta=None, params={})


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def from_document(doc) -> DensitySpec:
    """Build a spec from a parsed JSON document or a path to one.

    Fields: family (weibull | doubleexp | custom-table), k (weibull),
    log_c (optional), and for custom-table the grid tables x, g and
    optionally q.  Custom potentials are interpolated with a cubic
    spline whose derivatives supply h..h3.
    """
    if isinstance(doc, (str, bytes)):
        with open(doc, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    family = doc.get("family")
    if family == "weibull":
        spec = weibull(float(doc.get("k", 2.0)))
    elif family == "doubleexp":
        spec = double_exp()
    elif family == "custom-table":
        spec = _from_table(doc)
    else:
        raise PreconditionError(f"unknown density family {family!r}")
    if doc.get("log_c") is not None:
        spec.log_c_value = float(doc["log_c"])
    return spec


def _from_table(doc) -> DensitySpec:
    from scipy.interpolate import CubicSpline

    x = np.asarray(doc["x"], dtype=float)
    gv = np.asarray(doc["g"], dtype=float)
    if x.ndim != 1 or x.shape != gv.shape or len(x) < 8:
        raise PreconditionError("custom-table needs matching x/g arrays (>= 8 points)")
    if np.any(np.diff(x) <= 0):
        raise PreconditionError("custom-table x grid must be strictly increasing")
    spline = CubicSpline(x, gv, extrapolate=True)
    derivs = [spline.derivative(i) for i in range(1, 5)]
    if "q" in doc and doc["q"] is not None:
        qv = np.asarray(doc["q"], dtype=float)

        def q(v):
            return np.interp(np.asarray(v, dtype=float), x, qv, left=0.0, right=0.0)
    else:
        q = _zero

    def wrap(f):
        return lambda v: np.asarray(f(np.asarray(v, dtype=float)), dtype=float)

    return DensitySpec(
        name="custom-table", g=wrap(spline), h=wrap(derivs[0]),
        h1=wrap(derivs[1]), h2=wrap(derivs[2]), h3=wrap(derivs[3]), q=q,
        support_left=float(x[0]), class_hint=doc.get("class_hint", "unknown"),
        beta=doc.get("beta"), params={"n_points": len(x)})


def to_document(spec: DensitySpec, n_points: int = 256,
                x_hi: float | None = None) -> dict:
    """Serialize a spec to the JSON document format (tables for customs)."""
    doc = {"family": spec.name, "log_c": spec.log_c}
    if spec.name == "weibull":
        doc["k"] = spec.params["k"]
        return doc
    if spec.name == "doubleexp":
        return doc
    hi = x_hi if x_hi is not None else spec.support_left + 50.0
    x = np.linspace(spec.support_left + 1e-6, hi, n_points)
    doc.update({"family": "custom-table", "x": x.tolist(),
                "g": np.asarray(spec.g(x), dtype=float).tolist(),
                "q": np.asarray(spec.q(x), dtype=float).tolist()})
    return doc


# ---------------------------------------------------------------------------
# Regularity diagnostics
# ---------------------------------------------------------------------------

@dataclass
class QBoundCheck:
    x: float
    theta: float
    bound: float
    q_sup: float
    ok: bool


def check_q_bound(spec: DensitySpec, x: float, theta: float = 0.5) -> QBoundCheck:
    """Window bound sup_{|v-x|<theta*x} |q(v)| <= (x h(x))^(-1/2)."""
    x = float(x)
    if not (0.0 < theta < 1.0):
        raise PreconditionError("theta must lie in (0, 1)")
    hx = float(spec.h(np.asarray(x)))
    if x <= spec.support_left or x * hx <= 0.0:
        raise PreconditionError(f"x h(x) must be positive (got {x * hx:.4g})")
    bound = (x * hx) ** -0.5
    lo = max(x * (1.0 - theta), spec.support_left + 1e-12 * max(1.0, x))
    hi = x * (1.0 + theta)
    v = np.linspace(lo, hi, 401)
    q_sup = float(np.max(np.abs(spec.q(v))))
    return QBoundCheck(x=x, theta=theta, bound=bound, q_sup=q_sup, ok=q_sup <= bound)


def epsilon_profile(spec: DensitySpec, x):
    """Relative-variation profile eps and its scaled derivatives.

    For the rbeta class eps(x) = x h'(x)/h(x) - beta is the slow-variation
    index of l(x) = h(x) x^(-beta).  For the rinfinity class the profile
    is taken on the hazard inverse: eps(x) = x psi'(x)/psi(x).  Returns
    (eps, x*eps', x^2*eps'') evaluated by central differences.
    """
    arr = np.atleast_1d(np.asarray(x, dtype=float))

    if spec.class_hint == "rinfinity":
        def eps_fn(v):
            out = np.empty_like(v)
            for i, xi in enumerate(v):
                root = psi_inverse(spec, xi)
                d = float(spec.h1(np.asarray(root)))
                out[i] = xi / (d * root)
            return out
    else:
        if spec.beta is None:
            raise PreconditionError("epsilon profile needs a class with beta or rinfinity")
        beta = spec.beta

        def eps_fn(v):
            return v * spec.h1(v) / spec.h(v) - beta

    r = 1e-4
    e0 = eps_fn(arr)
    ep = eps_fn(arr * (1.0 + r))
    em = eps_fn(arr * (1.0 - r))
    d1 = (ep - em) / (2.0 * r * arr)
    d2 = (ep - 2.0 * e0 + em) / (r * arr) ** 2
    eps = e0 if np.ndim(x) else float(e0[0])
    return eps, (arr * d1 if np.ndim(x) else float(arr[0] * d1[0])), (
        arr ** 2 * d2 if np.ndim(x) else float(arr[0] ** 2 * d2[0]))


@dataclass
class RegularityReport:
    class_label: str
    beta: float | None
    conditions: dict
    ok: bool


def regularity_report(spec: DensitySpec, x_grid: Array | None = None,
                      eta: float = 0.125) -> RegularityReport:
    """Numeric margins for the class membership conditions.

    The booleans are diagnostic: each checks that the relevant profile
    stays finite and within a generous cap on the supplied grid, with
    tail behaviour (last decade of the grid) matching the class claim.
    """
    if x_grid is None:
        lo = max(1.0, spec.support_left + 1.0)
        x_grid = np.geomspace(lo, lo * 1e3, 160)
    x_grid = np.asarray(x_grid, dtype=float)
    conds: dict[str, tuple[float, bool]] = {}

    gx = spec.g(x_grid)
    growth = gx / x_grid
    conds["potential_superlinear"] = (
        float(growth[-1] / max(growth[0], 1e-300)),
        bool(growth[-1] > 4.0 * growth[0] and growth[-1] > 1.0))

    if spec.class_hint == "rinfinity":
        floor = hazard_floor(spec)
        grid = x_grid[x_grid > max(floor * 1.001, floor + 1e-6)]
        eps, xe1, x2e2 = epsilon_profile(spec, grid)
        tail = slice(int(0.75 * len(grid)), None)
        r1 = np.abs(xe1 / eps)
        r2 = np.abs(x2e2 / eps)
        conds["x_epsp_over_eps_tail"] = (float(np.max(r1[tail])),
                                         bool(np.max(r1[tail]) < 0.5))
        conds["x2_epspp_over_eps_tail"] = (float(np.max(r2[tail])),
                                           bool(np.max(r2[tail]) < 0.5))
        low = np.min(grid[tail] ** eta * eps[tail])
        conds["x_eta_eps_liminf"] = (float(low), bool(low > 1e-3))
        ok = all(flag for _, flag in conds.values())
        return RegularityReport("rinfinity", None, conds, ok)

    if spec.class_hint == "rbeta":
        grid = x_grid[spec.h(x_grid) > 0]
        eps, xe1, x2e2 = epsilon_profile(spec, grid)
        tail = slice(len(grid) // 2, None)
        conds["x_epsp_bounded"] = (float(np.max(np.abs(xe1[tail]))),
                                   bool(np.max(np.abs(xe1[tail])) < 50.0))
        conds["x2_epspp_bounded"] = (float(np.max(np.abs(x2e2[tail]))),
                                     bool(np.max(np.abs(x2e2[tail])) < 50.0))
        conds["beta_positive"] = (float(spec.beta), bool(spec.beta > 0.0))
        ok = all(flag for _, flag in conds.values())
        return RegularityReport("rbeta", spec.beta, conds, ok)

    return RegularityReport("unknown", spec.beta, conds, False)


def appendix_decay_diagnostics(spec: DensitySpec, t_grid,
                               l: Callable[[Array], Array] | None = None,
                               window_cap: float = 0.5) -> dict:
    """Vanishing-rate diagnostics behind the moment expansion window bounds.

    For each t the saddle x_hat = psi(t) and scale sigma = h'(x_hat)^(-1/2)
    are computed, then four sequences are emitted (all o(1) in the theory):

    * ``log_sigma_ratio``  |log sigma| / int_1^t psi(u) du
    * ``cubic_window``     sup |h'''| over the window  *  sigma^4 l^4
    * ``skew_scale``       |h''(x_hat)| sigma^3 l
    * ``xi_ratio``         sup |xi| over the window / (|h''(x_hat)| sigma^3)

    where xi is the exact quartic Taylor remainder of the tilted exponent
    plus the perturbation q.  The sup window is |x - x_hat| <= sigma*l(t),
    capped at window_cap * x_hat so it stays inside the support.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise PreconditionError("t_grid must be strictly increasing")
    if l is None:
        l = lambda t: np.log1p(t) ** 3

    out = {"t": t_grid.copy(), "log_sigma_ratio": [], "cubic_window": [],
           "skew_scale": [], "xi_ratio": []}
    for t in t_grid:
        x_hat = psi_inverse(spec, t)
        sigma = local_scale(spec, x_hat)
        l_val = float(l(np.asarray(t)))
        if l_val <= 0:
            raise PreconditionError("l(t) must be positive")

        psi_int = integrate(
            lambda u: np.array([psi_inverse(spec, ui) for ui in np.atleast_1d(u)]),
            1.0, float(t), n_panels=64)
        out["log_sigma_ratio"].append(abs(math.log(sigma)) / psi_int)

        w = min(sigma * l_val, window_cap * (x_hat - spec.support_left))
        xs = np.linspace(x_hat - w, x_hat + w, 513)
        h3_sup = float(np.max(np.abs(spec.h3(xs))))
        out["cubic_window"].append(h3_sup * sigma ** 4 * l_val ** 4)

        h2_hat = float(spec.h2(np.asarray(x_hat)))
        h1_hat = float(spec.h1(np.asarray(x_hat)))
        out["skew_scale"].append(abs(h2_hat) * sigma ** 3 * l_val)

        # Quartic Taylor remainder of the tilted exponent, in integral form
        # xi = -(Delta^4 / 6) * int_0^1 (1-s)^3 h'''(x_hat + s Delta) ds + q,
        # which avoids the catastrophic cancellation of forming K - K_hat
        # directly when x_hat is large.
        delta = xs - x_hat
        s_nodes, s_weights = panel_nodes(0.0, 1.0, 4)
        h3_path = spec.h3(x_hat + delta[:, None] * s_nodes[None, :])
        remainder = (h3_path * (1.0 - s_nodes) ** 3) @ s_weights
        xi = -(delta ** 4 / 6.0) * remainder + spec.q(xs)
        out["xi_ratio"].append(float(np.max(np.abs(xi))) / (abs(h2_hat) * sigma ** 3))

    for key in ("log_sigma_ratio", "cubic_window", "skew_scale", "xi_ratio"):
        out[key] = np.asarray(out[key])
    return out
