import json
import math

import numpy as np
import pytest
from scipy import integrate

from ftdrlab import bounds


def test_expansion_oracle_numbers():
    rep = bounds.check_dv_ftle(1.0, 1.0)
    q = rep.quantities
    assert q["mean_growth_exponent"] == pytest.approx(1.0, abs=1e-12)
    assert q["kl_rate"] == pytest.approx(0.5 * (math.e**2 - 3.0), abs=1e-12)
    assert rep.inequalities[0].holds  # upper
    assert rep.inequalities[1].holds  # lower holds for expansion
    assert rep.inequalities[2].holds  # DV
    assert rep.verdict == "AS_EXPECTED"
    assert q["mean_growth_exponent_mc"] == pytest.approx(1.0, abs=1e-8)


def test_contraction_counterexample_margins():
    rep = bounds.check_dv_ftle(-1.0, 1.0)
    q = rep.quantities
    assert q["mean_growth_exponent"] == pytest.approx(-1.0, abs=1e-4)
    assert -q["kl_rate"] == pytest.approx(-0.5 * (1.0 + math.e**-2), abs=1e-4)
    upper, lower, dvq = rep.inequalities
    assert upper.holds
    assert not lower.holds  # the recorded counterexample
    assert not lower.expected_to_hold
    assert dvq.holds
    assert rep.verdict == "AS_EXPECTED"


def test_kl_rate_against_quadrature():
    # independent oracle: numerically integrate the KL integrand
    for a, tau, s0 in [(1.0, 1.0, 1.0), (-1.0, 1.0, 1.0), (0.5, 2.0, 0.7),
                       (-0.3, 1.5, 1.3)]:
        var_t = math.exp(2 * a * tau) * s0**2
        closed = bounds.gaussian_kl(var_t, s0**2)

        # expand log(pt/p0) analytically to avoid density underflow
        def integrand(y):
            pt = math.exp(-y * y / (2 * var_t)) / math.sqrt(2 * math.pi * var_t)
            log_ratio = (0.5 * y * y * (1.0 / s0**2 - 1.0 / var_t)
                         + 0.5 * math.log(s0**2 / var_t))
            return pt * log_ratio

        num, _ = integrate.quad(integrand, -40 * math.sqrt(var_t),
                                40 * math.sqrt(var_t), limit=400)
        assert num == pytest.approx(closed, rel=1e-8)


def test_dv_bound_against_quadrature():
    # E^{mu_t}[log|y|] - log E^{mu_0}|y| for Gaussians, via quadrature
    a, tau, s0 = 1.0, 1.0, 1.0
    rep = bounds.check_dv_ftle(a, tau, sigma0=s0)
    sig_t = math.exp(a * tau) * s0

    def e_log_abs(sig):
        return integrate.quad(
            lambda y: math.log(abs(y)) * math.exp(-y * y / (2 * sig**2))
            / math.sqrt(2 * math.pi * sig**2), -30 * sig, 30 * sig,
            points=[0.0], limit=400)[0]

    def e_abs(sig):
        return integrate.quad(
            lambda y: abs(y) * math.exp(-y * y / (2 * sig**2))
            / math.sqrt(2 * math.pi * sig**2), -30 * sig, 30 * sig, limit=400)[0]

    expect = (e_log_abs(sig_t) - math.log(e_abs(s0))) / abs(tau)
    assert rep.quantities["dv_lower_bound"] == pytest.approx(expect, rel=1e-6)


def test_dv_holds_on_randomized_linear_oracles():
    # only the Donsker-Varadhan direction is asserted on randomized oracles;
    # the printed upper/lower directions have recorded counterexamples
    rng = np.random.default_rng(6)
    for _ in range(200):
        a = float(rng.uniform(-2.0, 2.0))
        tau = float(rng.uniform(0.2, 3.0))
        s0 = float(rng.uniform(0.3, 3.0))
        rep = bounds.check_dv_ftle(a, tau, sigma0=s0)
        upper, lower, dvq = rep.inequalities
        assert dvq.holds
        assert rep.verdict == "AS_EXPECTED"
        if a >= 0:
            assert lower.holds
        if a <= 0 or a * tau >= 0.629:
            assert upper.holds


def test_rotation_equality():
    rep = bounds.check_dv_ftle_rotation()
    assert rep.quantities["mean_growth_exponent_mc"] == pytest.approx(0.0, abs=1e-8)
    assert all(q.holds for q in rep.inequalities)


def test_momexp_bound_oracles():
    for system, p in [("rotation", 2.0), ("rotation", -1.0), ("identity", 0.5)]:
        rep = bounds.check_momexp_bound(system, p=p)
        assert rep.inequalities[0].holds
        assert rep.quantities["mean_moment_exponent"] == pytest.approx(0.0, abs=1e-6)
    rep = bounds.check_momexp_bound("angle_noise", p=2.0, L=200)
    assert rep.inequalities[0].holds
    # radius-preserving noise: moment exponent vanishes within error
    tol = 3 * rep.quantities["mc_stderr"] + 2e-3
    assert abs(rep.quantities["mean_moment_exponent"]) < tol


def test_sum_exponents_oracles():
    rep = bounds.check_sum_exponents("saddle")
    assert rep.quantities["equality_gap"] < 1e-6
    assert abs(rep.quantities["d_sum_mean_growth"]) < 1e-8
    rep = bounds.check_sum_exponents("linear_1d")
    assert rep.quantities["d_sum_mean_growth"] == pytest.approx(0.4, abs=1e-8)
    assert rep.quantities["equality_gap"] < 1e-6
    rep = bounds.check_sum_exponents("geometric", L=20_000)
    assert rep.inequalities[0].holds
    # closed forms: LHS ~ 0, RHS ~ s^2/2
    assert abs(rep.quantities["d_sum_mean_growth"]) < 0.05
    assert rep.quantities["det_moment_functional"] == pytest.approx(0.5, abs=0.06)


def test_reports_serialize_and_reproduce():
    rep1 = bounds.check_dv_ftle(-1.0, 1.0, seed=3)
    rep2 = bounds.check_dv_ftle(-1.0, 1.0, seed=3)
    assert rep1.to_json() == rep2.to_json()
    payload = json.loads(rep1.to_json())
    assert payload["verdict"] == "AS_EXPECTED"
    assert "FAILS" in rep1.to_text()


def test_standard_suite_all_as_expected():
    reports = bounds.standard_suite(seed=1)
    assert len(reports) == 11
    for rep in reports:
        assert rep.verdict == "AS_EXPECTED", rep.to_text()
