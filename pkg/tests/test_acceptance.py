"""End-to-end acceptance run: eleven ordered checks, one per headline
guarantee, each asserting its stated tolerance and runtime budget.

Checks whose stated form measurement shows cannot hold are kept as
strict expected failures; their reasons record the observed values so
the contradiction stays visible instead of being papered over.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.integrate import quad

from edp_gibbs import (
    appendix_decay_diagnostics,
    asymptotic_moments,
    concentration_check,
    conditioning_point,
    democracy_demo,
    double_exp,
    edgeworth_error_scan,
    exact_conditional_density,
    exceedance_density,
    exceedance_grid,
    log_density,
    mc_tail_estimate,
    n_fold_convolution,
    normalized_tilted_grid,
    skewness_ratio,
    split_mass_ratio,
    tail_prob_approx,
    tv_distance,
    weibull,
)
from test_edgeworth import direct_n_fold
from test_tail import exceedance_marginal_oracle

WB = weibull(2.0)
DE = double_exp()
FAMILIES = [("square-hazard", WB), ("double-exponential", DE)]
T_GRID = (10.0, 100.0, 1000.0, 10000.0)


def strictly_decreasing(seq):
    return all(a > b for a, b in zip(seq, seq[1:]))


def test_01_tilted_moment_ratios_converge():
    start = time.monotonic()
    for label, spec in FAMILIES:
        rows = [asymptotic_moments(spec, t).ratios
                for t in (10.0, 100.0, 1000.0)]
        for idx in (0, 1):  # mean ratio, variance ratio
            series = [r[idx] for r in rows]
            assert 0.9 <= series[-1] <= 1.1, (label, idx, series)
            gaps = [abs(v - 1.0) for v in series]
            assert strictly_decreasing(gaps), (label, idx, series)
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    print(f"check 1 PASS: mean and variance ratios inside [0.9, 1.1] "
          f"at t=1e3 and monotone toward 1, both families "
          f"({elapsed:.2f}s)")


@pytest.mark.xfail(
    strict=True,
    reason="the third-moment ratio converges to 1/6, not 1: measured "
    "0.16660 (square-hazard) and 0.16683 (double-exponential) at "
    "t=1000.  The third tilted cumulant tracks the second derivative "
    "of the inverse hazard directly; the extra 6 belongs to the "
    "series coefficient that consumes it, so a [0.9, 1.1] band around "
    "1 can never contain this ratio.")
def test_01_third_moment_ratio_with_factor_six():
    for label, spec in FAMILIES:
        series = [asymptotic_moments(spec, t).ratios[2]
                  for t in (10.0, 100.0, 1000.0)]
        assert 0.9 <= series[-1] <= 1.1, (label, series)


def test_02_skewness_strictly_decays_square_hazard():
    vals = [abs(skewness_ratio(WB, t)) for t in (1.0, 10.0, 100.0, 1000.0)]
    assert strictly_decreasing(vals), vals
    print(f"check 2 PASS: |skewness| strictly decreasing, "
          f"{vals[0]:.3g} -> {vals[-1]:.3g}")


@pytest.mark.xfail(
    strict=True,
    reason="the double-exponential family's skewness changes sign: "
    "measured 0.3139, -0.3240, -0.1002, -0.0316 over t in "
    "{1, 10, 100, 1000}, so the absolute value rises at the first "
    "step before decaying and strict decrease fails.")
def test_02_skewness_strictly_decays_double_exp():
    vals = [abs(skewness_ratio(DE, t)) for t in (1.0, 10.0, 100.0, 1000.0)]
    assert strictly_decreasing(vals), vals


def test_03_edgeworth_correction_rate():
    start = time.monotonic()
    base = normalized_tilted_grid(WB, 2.0)
    for n in (2, 4):
        fast = n_fold_convolution(base, n)
        gap = float(np.max(np.abs(fast.values - direct_n_fold(base, n))))
        assert gap <= 1e-10, (n, gap)
    reports = edgeworth_error_scan(WB, lambda n: n ** 0.25,
                                   [8, 16, 32, 64])
    scaled = [r.sup_error_times_sqrt_n for r in reports]
    assert strictly_decreasing(scaled), scaled
    elapsed = time.monotonic() - start
    assert elapsed < 300.0
    print(f"check 3 PASS: convolution oracle exact to 1e-10 at n=2,4; "
          f"sqrt(n) * sup-error decreasing {scaled[0]:.4g} -> "
          f"{scaled[-1]:.4g} over n in {{8,16,32,64}} ({elapsed:.2f}s)")


def test_04_conditional_tv_decay():
    start = time.monotonic()
    slack = 1e-3
    tv_in_n = [tv_distance(WB, conditioning_point(WB, n, 3.0)).tv_fixed
               for n in (8, 16, 32)]
    tv_in_a = [tv_distance(WB, conditioning_point(WB, 16, a)).tv_fixed
               for a in (2.0, 3.0, 4.0)]
    for series in (tv_in_n, tv_in_a):
        assert all(b < a + slack for a, b in zip(series, series[1:])), \
            series
    assert strictly_decreasing(tv_in_n), tv_in_n
    elapsed = time.monotonic() - start
    assert elapsed < 300.0
    print(f"check 4 PASS: TV decreasing in n {tv_in_n} and within "
          f"1e-3-slack in a_n {tv_in_a} ({elapsed:.2f}s)")


def test_05_conditional_density_tilt_invariance():
    start = time.monotonic()
    pt = conditioning_point(WB, 8, 3.0)
    worst = 0.0
    for y in (2.2, 2.8, 3.0, 3.3, 4.0):
        under_a = exact_conditional_density(WB, pt, [y], alpha=3.0,
                                            points=1 << 12,
                                            method="direct")
        under_2a = exact_conditional_density(WB, pt, [y], alpha=6.0,
                                             points=1 << 12,
                                             method="direct")
        worst = max(worst, abs(under_a - under_2a))
    assert worst <= 1e-8, worst
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    print(f"check 5 PASS: conditional density invariant to the tilt "
          f"anchor (a vs 2a) to {worst:.2e} ({elapsed:.2f}s)")


def test_06_tail_formula_against_monte_carlo_and_quadrature():
    start = time.monotonic()
    est = mc_tail_estimate(WB, 32, 2.0, 1_000_000, seed=7)
    pull = abs(est.log_p_analytic - est.log_p_mc) / est.mc_std_err
    assert pull <= 3.0, (est.log_p_analytic, est.log_p_mc,
                         est.mc_std_err)
    direct, _ = quad(lambda x: math.exp(log_density(WB, x)), 2.0, np.inf)
    log_ratio = abs(tail_prob_approx(WB, 1, 2.0) - math.log(direct))
    assert log_ratio <= 0.2, log_ratio
    elapsed = time.monotonic() - start
    assert elapsed < 120.0
    print(f"check 6 PASS: analytic tail within {pull:.2f} MC standard "
          f"errors at n=32 (1e6 samples); n=1 log-ratio "
          f"{log_ratio:.3f} <= 0.2 vs quadrature ({elapsed:.2f}s)")


def test_07_exceedance_marginal_density():
    start = time.monotonic()
    x, logg = exceedance_grid(WB, 16, 2.0)
    mass = float(np.trapezoid(np.exp(logg), x))
    assert mass == pytest.approx(1.0, abs=1e-4), mass
    xo, exact = exceedance_marginal_oracle(WB, 16, 2.0)
    approx = np.exp(exceedance_density(WB, 16, 2.0, xo))
    approx /= np.trapezoid(approx, xo)
    tv = 0.5 * float(np.trapezoid(np.abs(exact - approx), xo))
    assert tv <= 0.1, tv
    ratio = split_mass_ratio(WB, 1000, 2.0)
    assert ratio < 1.0 / math.sqrt(1000.0), ratio
    elapsed = time.monotonic() - start
    assert elapsed < 300.0
    print(f"check 7 PASS: grid mass {mass:.6f}; TV to the exact "
          f"exceedance oracle {tv:.4f} <= 0.1; secondary/primary mass "
          f"ratio {ratio:.2e} < 1/sqrt(n) ({elapsed:.2f}s)")


def test_08_tilted_variance_and_shape_concentration():
    start = time.monotonic()
    rows_wb = concentration_check(WB, [2.0, 4.0, 8.0, 16.0])
    for key in ("max_variance_deviation", "sup_gaussian_distance"):
        series = [r[key] for r in rows_wb]
        assert strictly_decreasing(series), (key, series)
    rows_de = concentration_check(DE, [2.0, 4.0, 8.0, 16.0])
    gauss = [r["sup_gaussian_distance"] for r in rows_de]
    assert strictly_decreasing(gauss), gauss
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    print(f"check 8 PASS: variance-window deviation and sup distance "
          f"to the Gaussian shape both decreasing over a_n in "
          f"{{2,4,8,16}} ({elapsed:.2f}s)")


@pytest.mark.xfail(
    strict=True,
    reason="measured max variance deviations 0.674, 2.021, 0.0996, "
    "0.00166 over a_n in {2, 4, 8, 16} for the double-exponential "
    "family: the deviation peaks at a_n=4 before decaying, so strict "
    "decrease fails at the first step.  The +-3/s window at small "
    "levels reaches tilts whose variance differs by a factor e from "
    "the center value.")
def test_08_variance_window_double_exp():
    rows = concentration_check(DE, [2.0, 4.0, 8.0, 16.0])
    series = [r["max_variance_deviation"] for r in rows]
    assert strictly_decreasing(series), series


def test_09_window_diagnostics_decay():
    passing = [
        ("square-hazard", WB, "log_sigma_ratio"),
        ("square-hazard", WB, "cubic_window"),
        ("square-hazard", WB, "skew_scale"),
        ("double-exponential", DE, "log_sigma_ratio"),
    ]
    for label, spec, key in passing:
        series = [float(v)
                  for v in appendix_decay_diagnostics(spec, T_GRID)[key]]
        assert strictly_decreasing(series), (label, key, series)
    print("check 9 PASS: curvature-scale and window diagnostics "
          "strictly decreasing where the cubed-log window is "
          "admissible (see expected failures for the rest)")


@pytest.mark.parametrize(
    "spec,key",
    [
        pytest.param(
            WB, "xi_ratio",
            marks=pytest.mark.xfail(
                strict=True,
                reason="measured 5.1, 4.7e3, 3.4e6, 7.2e6 over t in "
                "{10,...,1e4}: with window l(t) = log(1+t)^3 the "
                "square-hazard xi-ratio grows, because the cubed-log "
                "window widens faster than the curvature scale "
                "shrinks the correction."),
            id="square-hazard-xi"),
        pytest.param(
            DE, "cubic_window",
            marks=pytest.mark.xfail(
                strict=True,
                reason="measured 1.9e4, 1.5e7, 6.2e8, 6.1e9: the "
                "double-exponential third derivative equals the "
                "hazard itself, so h'''(x + window) * sigma^4 l^4 "
                "grows once the cubed-log window outruns the "
                "curvature scale 1/sqrt(t)."),
            id="double-exp-cubic"),
        pytest.param(
            DE, "skew_scale",
            marks=pytest.mark.xfail(
                strict=True,
                reason="measured 4.36, 9.83, 10.43, 7.81: the "
                "double-exponential h''(x) sigma^3 l rises before "
                "decaying because l(t) = log(1+t)^3 grows faster than "
                "sigma^3 = t^{-3/2} shrinks until t is of order 1e4."),
            id="double-exp-skew"),
        pytest.param(
            DE, "xi_ratio",
            marks=pytest.mark.xfail(
                strict=True,
                reason="measured 14.2, 5.1e3, 9.2e5, 1.2e8: the "
                "double-exponential xi-ratio grows with the cubed-log "
                "window for the same reason as its cubic-window "
                "diagnostic."),
            id="double-exp-xi"),
    ])
def test_09_window_diagnostics_claimed_decay(spec, key):
    series = [float(v) for v in appendix_decay_diagnostics(spec, T_GRID)[key]]
    assert strictly_decreasing(series), (key, series)


def test_10_exceedance_democracy_grows_with_level():
    start = time.monotonic()
    fracs = [democracy_demo(DE, 8, a, 1.0, 20_000, seed=101).fraction
             for a in (3.0, 5.0, 8.0)]
    assert fracs[0] == pytest.approx(0.96625, abs=5e-3), fracs
    assert fracs[0] <= fracs[1] <= fracs[2], fracs
    assert fracs[2] > fracs[0], fracs
    elapsed = time.monotonic() - start
    assert elapsed < 120.0
    print(f"check 10 PASS: all-coordinates-within-epsilon fraction "
          f"rises with the level, {fracs} over a_n in {{3,5,8}} "
          f"({elapsed:.2f}s)")


def test_11_thread_count_determinism(tmp_path):
    outs = {}
    for threads in ("1", "2"):
        env = dict(os.environ)
        env["EDP_THREADS"] = threads
        out = tmp_path / threads
        subprocess.run(
            [sys.executable, "-m", "edp_gibbs.cli", "tail",
             "--n", "16", "--a", "2", "--samples", "200000",
             "--seed", "9", "--out", str(out)],
            env=env, check=True, capture_output=True)
        outs[threads] = (out / "tail.csv").read_bytes()
    assert outs["1"] == outs["2"]
    print("check 11 PASS: tail CSV byte-identical under 1 and 2 worker "
          "threads at a fixed seed")
