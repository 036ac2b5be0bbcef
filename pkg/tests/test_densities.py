"""Density model: normalization, hazard geometry, regularity diagnostics."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import exp1, gamma

from edp_gibbs import (
    BoundaryError,
    PreconditionError,
    UnreachableTargetError,
    appendix_decay_diagnostics,
    check_q_bound,
    double_exp,
    epsilon_profile,
    from_document,
    hazard_and_derivatives,
    psi_inverse,
    regularity_report,
    to_document,
    weibull,
)
from edp_gibbs.densities import DensitySpec, hazard_floor


def quad_mass(spec, hi=60.0):
    """Adaptive-quadrature oracle for the total mass of a spec."""
    val, _ = quad(lambda x: math.exp(spec.log_density(x)),
                  spec.support_left + 1e-12, hi, limit=200)
    return val


class TestNormalization:
    @pytest.mark.parametrize("k", [1.5, 2.0, 3.5])
    def test_weibull_mass_is_one(self, k):
        assert quad_mass(weibull(k)) == pytest.approx(1.0, abs=1e-8)

    def test_double_exp_mass_is_one(self):
        assert quad_mass(double_exp(), hi=30.0) == pytest.approx(1.0, abs=1e-8)

    def test_double_exp_log_c_matches_exponential_integral(self):
        # int_0^inf exp(-e^(x-1)) dx = E1(1/e), an independent closed form.
        assert double_exp().log_c == pytest.approx(
            -math.log(exp1(math.exp(-1.0))), abs=1e-9)

    def test_weibull_log_density_closed_form(self):
        spec = weibull(2.0)
        assert spec.log_density(1.0) == pytest.approx(math.log(2.0) - 1.0, abs=1e-12)
        # p(x) = k x^(k-1) exp(-x^k) pointwise
        x = np.array([0.3, 1.0, 2.7])
        expect = np.log(2.0 * x) - x ** 2
        np.testing.assert_allclose(spec.log_density(x), expect, rtol=1e-12)

    def test_boundary_rejected(self):
        with pytest.raises(BoundaryError):
            weibull(2.0).log_density(0.0)
        with pytest.raises(BoundaryError):
            double_exp().log_density(-0.5)


class TestHazard:
    def test_weibull_hazard_values(self):
        h, h1, h2, h3 = hazard_and_derivatives(weibull(2.0), 2.0)
        assert h == pytest.approx(3.5, abs=1e-12)          # 2*2 - 1/2
        assert h1 == pytest.approx(2.25, abs=1e-12)        # 2 + 1/4
        assert h2 == pytest.approx(-0.25, abs=1e-12)       # -2/8
        assert h3 == pytest.approx(0.375, abs=1e-12)       # 6/16

    def test_double_exp_hazard_is_shifted_exponential(self):
        h, h1, h2, h3 = hazard_and_derivatives(double_exp(), 1.0)
        assert h == h1 == h2 == h3 == pytest.approx(1.0, abs=1e-12)

    def test_hazard_derivatives_match_finite_differences(self):
        for spec in (weibull(2.6), double_exp()):
            x = 2.31
            d = 1e-5
            h_p = hazard_and_derivatives(spec, x + d)[0]
            h_m = hazard_and_derivatives(spec, x - d)[0]
            assert hazard_and_derivatives(spec, x)[1] == pytest.approx(
                (h_p - h_m) / (2 * d), rel=1e-6)


class TestPsiInverse:
    def test_weibull_closed_form(self):
        # 2x - 1/x = 4  <=>  x = (4 + sqrt(24)) / 4
        assert psi_inverse(weibull(2.0), 4.0) == pytest.approx(
            (4.0 + math.sqrt(24.0)) / 4.0, abs=1e-10)

    def test_double_exp_closed_form(self):
        spec = double_exp()
        assert psi_inverse(spec, 1.0) == pytest.approx(1.0, abs=1e-10)
        for u in (0.5, 3.0, 1e4):
            assert psi_inverse(spec, u) == pytest.approx(1.0 + math.log(u), rel=1e-10)

    @pytest.mark.parametrize("u", [0.01, 1.0, 7.3, 125.0, 1e6])
    def test_residual_tolerance(self, u):
        spec = weibull(2.0)
        x = psi_inverse(spec, u)
        assert abs(float(spec.h(np.asarray(x))) - u) <= 1e-10 * max(1.0, u)

    def test_below_floor_rejected(self):
        with pytest.raises(UnreachableTargetError):
            psi_inverse(double_exp(), 0.1)  # floor is e^-1


class TestEpsilonProfile:
    def test_weibull_matches_closed_form(self):
        # eps(x) = k(k-1) / (k x^k - (k-1)) for the Weibull family
        for k in (2.0, 3.0):
            spec = weibull(k)
            x = np.array([1.0, 2.0, 5.0, 40.0])
            eps, _, _ = epsilon_profile(spec, x)
            np.testing.assert_allclose(
                eps, k * (k - 1) / (k * x ** k - (k - 1)), rtol=1e-9)
        eps1, _, _ = epsilon_profile(weibull(2.0), 1.0)
        assert eps1 == pytest.approx(2.0, abs=1e-9)

    def test_double_exp_uses_differentiated_form(self):
        # The slow-variation index of psi(x) = 1 + log x is 1/(1 + log x),
        # not log x + 1; at x = e it equals 1/2.
        spec = double_exp()
        eps, _, _ = epsilon_profile(spec, math.e)
        assert eps == pytest.approx(0.5, rel=1e-6)
        x = np.array([1.0, 4.0, 90.0])
        eps, _, _ = epsilon_profile(spec, x)
        np.testing.assert_allclose(eps, 1.0 / (1.0 + np.log(x)), rtol=1e-6)


class TestRegularity:
    def test_weibull_report(self):
        rep = regularity_report(weibull(2.0))
        assert rep.class_label == "rbeta"
        assert rep.beta == pytest.approx(1.0)
        assert rep.ok, rep.conditions

    def test_double_exp_report(self):
        rep = regularity_report(double_exp())
        assert rep.class_label == "rinfinity"
        assert rep.ok, rep.conditions

    def test_superlinear_growth_flag(self):
        rep = regularity_report(weibull(1.5))
        val, ok = rep.conditions["potential_superlinear"]
        assert ok and val > 4.0


class TestQBound:
    def test_zero_perturbation_passes(self):
        chk = check_q_bound(weibull(2.0), 10.0, theta=0.5)
        assert chk.bound == pytest.approx((10.0 * 19.9) ** -0.5, rel=1e-12)
        assert chk.q_sup == 0.0 and chk.ok

    def test_decaying_perturbation_fails_at_moderate_x(self):
        base = weibull(2.0)
        noisy = DensitySpec(
            name="custom-table", g=base.g, h=base.h, h1=base.h1, h2=base.h2,
            h3=base.h3, q=lambda x: 1.0 / np.asarray(x, dtype=float),
            support_left=0.0, class_hint="rbeta", beta=1.0)
        chk = check_q_bound(noisy, 10.0, theta=0.5)
        assert chk.q_sup == pytest.approx(0.2, rel=1e-6)  # sup 1/v on (5, 15)
        assert not chk.ok

    def test_nonpositive_hazard_rejected(self):
        with pytest.raises(PreconditionError):
            check_q_bound(weibull(2.0), 0.5)  # h(0.5) = 1 - 2 < 0


class TestAppendixDiagnostics:
    T_GRID = np.array([10.0, 1e2, 1e3, 1e4])

    @pytest.mark.parametrize("spec", [weibull(2.0), double_exp()],
                             ids=["weibull", "doubleexp"])
    def test_degenerate_l_all_sequences_decay(self, spec):
        out = appendix_decay_diagnostics(spec, self.T_GRID,
                                         l=lambda t: np.ones_like(np.asarray(t)))
        for key in ("log_sigma_ratio", "cubic_window", "skew_scale", "xi_ratio"):
            seq = out[key]
            assert np.all(np.isfinite(seq)), key
            assert np.all(np.diff(seq) < 0), (key, seq)

    def test_weibull_default_l_main_sequences_decay(self):
        out = appendix_decay_diagnostics(weibull(2.0), self.T_GRID)
        for key in ("log_sigma_ratio", "cubic_window", "skew_scale"):
            assert np.all(np.diff(out[key]) < 0), (key, out[key])
        assert np.all(np.isfinite(out["xi_ratio"]))

    def test_double_exp_log_sigma_ratio_decays(self):
        out = appendix_decay_diagnostics(double_exp(), self.T_GRID)
        # |log sigma| / int_1^t psi = 1/(2t) exactly for this family
        np.testing.assert_allclose(out["log_sigma_ratio"],
                                   1.0 / (2.0 * self.T_GRID), rtol=1e-6)

    def test_grid_must_increase(self):
        with pytest.raises(PreconditionError):
            appendix_decay_diagnostics(weibull(2.0), [10.0, 5.0])


class TestDocuments:
    def test_weibull_roundtrip(self, tmp_path):
        doc = to_document(weibull(2.0))
        assert doc["family"] == "weibull" and doc["k"] == 2.0
        path = tmp_path / "spec.json"
        path.write_text(__import__("json").dumps(doc))
        spec = from_document(str(path))
        assert spec.log_density(1.0) == pytest.approx(math.log(2.0) - 1.0, abs=1e-12)

    def test_double_exp_roundtrip(self):
        spec = from_document(to_document(double_exp()))
        assert spec.name == "doubleexp"
        assert spec.log_c == pytest.approx(double_exp().log_c, abs=1e-9)

    def test_custom_table_approximates_source(self):
        x = np.linspace(0.05, 12.0, 1200)
        base = weibull(2.0)
        doc = {"family": "custom-table", "x": x.tolist(),
               "g": np.asarray(base.g(x)).tolist(), "log_c": base.log_c,
               "class_hint": "rbeta", "beta": 1.0}
        spec = from_document(doc)
        probe = np.linspace(0.5, 5.0, 50)
        np.testing.assert_allclose(spec.log_density(probe),
                                   base.log_density(probe), atol=1e-4)
        assert psi_inverse(spec, 4.0) == pytest.approx(
            (4.0 + math.sqrt(24.0)) / 4.0, abs=1e-4)

    def test_bad_documents_rejected(self):
        with pytest.raises(PreconditionError):
            from_document({"family": "lognormal"})
        with pytest.raises(PreconditionError):
            from_document({"family": "custom-table", "x": [1, 2], "g": [1, 2]})
        with pytest.raises(PreconditionError):
            from_document({"family": "custom-table",
                           "x": [3, 2, 1, 4, 5, 6, 7, 8],
                           "g": [1, 2, 3, 4, 5, 6, 7, 8]})


class TestMeanOracle:
    """Closed-form means double-check the density parametrization."""

    @pytest.mark.parametrize("k", [2.0, 3.0])
    def test_weibull_mean_is_gamma(self, k):
        spec = weibull(k)
        mean, _ = quad(lambda x: x * math.exp(spec.log_density(x)),
                       1e-12, 60.0, limit=200)
        assert mean == pytest.approx(gamma(1.0 + 1.0 / k), abs=1e-9)

    def test_hazard_floor_values(self):
        assert hazard_floor(weibull(2.0)) < -1e6
        assert hazard_floor(double_exp()) == pytest.approx(math.exp(-1.0), rel=1e-6)
