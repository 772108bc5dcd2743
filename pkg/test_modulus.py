#!/usr/bin/env python3
"""
Modulus checks: closed forms, condition verdicts on the fixture matrix,
the Phi_delta family and its second-derivative bound.
"""

import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modulus import (ConditionId, ModulusDomainError, ModulusSpec, PhiFamily, Side, Phi, Phi_prime,
                     check_growth_conditions, check_integral_divergence, check_liminf_positive,
                     check_slope_ratio, estimate_C2, phi_bound_audit, phi_delta, phi_delta_many,
                     phi_divergence_sweep)
from verdicts import Verdict

PASS, FAIL = Verdict.PASS, Verdict.FAIL


def condition_verdicts(r):
    return [check_liminf_positive(r).verdict, check_slope_ratio(r).verdict, check_integral_divergence(r).verdict]


# ---------------------------------------------------------------------
# closed forms and domain
# ---------------------------------------------------------------------


def test_builtin_defaults():
    assert ModulusSpec.log().c0 == 0.1
    assert ModulusSpec.loglog().c0 == 0.05
    assert ModulusSpec.log(side=Side.INFINITY).k_dom == pytest.approx(math.e)
    assert ModulusSpec.loglog(side=Side.INFINITY).k_dom == pytest.approx(math.e ** 2)


def test_log_eval_and_deriv():
    r = ModulusSpec.log()
    assert r.eval(0.01) == pytest.approx(math.log(100.0))
    assert r.deriv(0.01) == pytest.approx(-100.0)
    values = r.eval(np.array([0.1, 0.001]))
    np.testing.assert_allclose(values, [math.log(10.0), math.log(1000.0)])


def test_loglog_deriv_matches_difference():
    r = ModulusSpec.loglog()
    s, h = 0.01, 1e-7
    numeric = (r.eval(s + h) - r.eval(s - h)) / (2 * h)
    assert r.deriv(s) == pytest.approx(numeric, rel=1e-5)


@pytest.mark.parametrize("s", [0.0, -1.0, 0.5, math.inf])
def test_outside_domain_raises(s):
    with pytest.raises(ModulusDomainError) as info:
        ModulusSpec.log().eval(s)
    assert isinstance(info.value, ValueError)


def test_infinity_side_domain():
    rho = ModulusSpec.log(side=Side.INFINITY)
    assert rho.eval(math.e ** 3) == pytest.approx(3.0)
    with pytest.raises(ModulusDomainError):
        rho.eval(1.0)


def test_tabulated_interpolates_and_continues_below_the_table():
    s = np.geomspace(1e-6, 0.1, 200)
    r = ModulusSpec.tabulated(s, -np.log(s))
    mid = math.sqrt(s[50] * s[51])
    assert r.eval(mid) == pytest.approx(-math.log(mid), rel=1e-3)
    assert r.deriv(mid) < 0
    assert r.eval(1e-7) == pytest.approx(-math.log(1e-7), rel=1e-2)
    assert r.eval(1e-12) >= r.eval(1e-6)
    assert r.deriv(1e-9) == pytest.approx(-1e9, rel=1e-2)
    with pytest.raises(ModulusDomainError):
        r.eval(0.2)
    with pytest.raises(ModulusDomainError):
        r.eval(0.0)


def test_tabulated_continuation_never_decreases_towards_zero():
    s = np.geomspace(1e-3, 0.1, 20)
    r = ModulusSpec.tabulated(s, 1.0 + s)
    assert r.eval(1e-9) == pytest.approx(r.eval(1e-3))
    assert r.deriv(1e-9) == 0.0


def test_tabulated_rejects_bad_table():
    with pytest.raises(ValueError):
        ModulusSpec.tabulated([0.1, 0.05, 0.2], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        ModulusSpec.tabulated([0.01, 0.05, 0.1], [1.0, 0.0, 1.0])


def test_floor_C1_for_log():
    assert ModulusSpec.log().floor_C1 == pytest.approx(1.0 / math.log(10.0))


# ---------------------------------------------------------------------
# condition checkers
# ---------------------------------------------------------------------


@pytest.mark.parametrize("r, expected", [
    (ModulusSpec.log(), [PASS, PASS, PASS]),
    (ModulusSpec.loglog(), [PASS, PASS, PASS]),
    (ModulusSpec.constant(1.0), [PASS, PASS, PASS]),
])
def test_positive_fixtures(r, expected):
    assert condition_verdicts(r) == expected


def test_power_minus_half_fails_ratio_and_divergence():
    r = ModulusSpec.power(-0.5)
    assert check_slope_ratio(r).verdict is FAIL
    assert check_integral_divergence(r).verdict is FAIL


def test_power_one_fails_liminf():
    assert check_liminf_positive(ModulusSpec.power(1.0)).verdict is FAIL


def test_growth_fixture_log_passes():
    reports = check_growth_conditions(ModulusSpec.log(side=Side.INFINITY))
    assert [rep.condition_id for rep in reports] == [ConditionId.RHO_I, ConditionId.RHO_II, ConditionId.RHO_III]
    assert [rep.verdict for rep in reports] == [PASS, PASS, PASS]


def test_growth_fixture_linear_fails_ratio():
    reports = check_growth_conditions(ModulusSpec.power(1.0, 1.0, side=Side.INFINITY))
    assert reports[1].verdict is FAIL


def test_growth_conditions_need_infinity_side():
    with pytest.raises(ValueError):
        check_growth_conditions(ModulusSpec.log())


def test_report_carries_schedule_and_evidence():
    report = check_slope_ratio(ModulusSpec.log())
    data = report.to_dict()
    assert data["schedule"] == "v1"
    assert len(data["evidence"]) == 20
    assert "not proof" in data["note"]
    assert report.summary == pytest.approx(1.0 / -math.log(0.1 * 2.0 ** -60))


def test_tabulated_log_passes_every_condition():
    s = np.geomspace(1e-6, 0.1, 200)
    r = ModulusSpec.tabulated(s, -np.log(s))
    assert condition_verdicts(r) == [PASS, PASS, PASS]
    assert r.floor_C1 == pytest.approx(1.0 / math.log(10.0), rel=1e-6)


def test_tabulated_phi_matches_closed_form_log():
    s = np.geomspace(1e-6, 0.1, 200)
    tab = PhiFamily(ModulusSpec.tabulated(s, -np.log(s)), 0.01)
    exact = PhiFamily(ModulusSpec.log(), 0.01)
    assert phi_delta(tab, 0.05) == pytest.approx(phi_delta(exact, 0.05), rel=1e-3)
    assert float(phi_delta_many(tab, 1e-8)) == pytest.approx(phi_delta(exact, 1e-8), rel=1e-3)


# ---------------------------------------------------------------------
# Phi_delta
# ---------------------------------------------------------------------


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("delta", [1.0, 0.01])
def test_constant_modulus_quadrature_oracle(c, delta):
    fam = PhiFamily(ModulusSpec.constant(c), delta)
    grid = np.linspace(fam.c0 / 100, fam.c0, 100)
    exact = np.log1p(c * grid / delta) / c
    point = np.array([phi_delta(fam, z) for z in grid])
    np.testing.assert_allclose(point, exact, rtol=1e-8)
    np.testing.assert_allclose(phi_delta_many(fam, grid), exact, rtol=1e-8)


def test_phi_at_zero():
    fam = PhiFamily(ModulusSpec.log(), 0.01)
    assert phi_delta(fam, 0.0) == 0.0
    assert Phi(fam, 0.0) == 1.0
    assert phi_delta_many(fam, np.zeros(3)).tolist() == [0.0, 0.0, 0.0]


def test_phi_rejects_bad_arguments():
    with pytest.raises(ValueError):
        PhiFamily(ModulusSpec.log(), 0.0)
    fam = PhiFamily(ModulusSpec.log(), 0.01)
    with pytest.raises(ValueError):
        phi_delta(fam, -1e-3)
    with pytest.raises(ModulusDomainError):
        phi_delta(fam, 0.5)


def test_Phi_prime_closed_form():
    fam = PhiFamily(ModulusSpec.log(), 0.01)
    z = 0.02
    assert Phi_prime(fam, z) == pytest.approx(Phi(fam, z) / (z * math.log(1 / z) + 0.01))


@pytest.mark.parametrize("z", [1e-9, 1e-4, 0.02, 0.09])
def test_Phi_prime_matches_central_difference(z):
    fam = PhiFamily(ModulusSpec.log(), 0.01)
    h = 1e-3 * min(z, 0.01)
    numeric = (Phi(fam, z + h) - Phi(fam, z - h)) / (2 * h)
    assert Phi_prime(fam, z) == pytest.approx(numeric, rel=1e-5)


@pytest.mark.parametrize("r", [ModulusSpec.log(), ModulusSpec.loglog(), ModulusSpec.constant(1.0)],
                         ids=["log", "loglog", "constant"])
@pytest.mark.parametrize("delta", [1.0, 1e-2, 1e-6])
def test_debug_cross_check_is_quiet_on_builtins(r, delta):
    fam = PhiFamily(r, delta, debug=True)
    for z in [1e-12, 1e-6, 1e-3, fam.c0 / 2, fam.c0]:
        value = Phi_prime(fam, z)
        assert value > 0 and math.isfinite(value)


def test_cache_is_monotone():
    cache = PhiFamily(ModulusSpec.loglog(), 1e-3).cache
    zetas = [z for z, _ in cache]
    values = [v for _, v in cache]
    assert zetas[0] == 0.0 and values[0] == 0.0
    assert all(b > a for a, b in zip(zetas, zetas[1:]))
    assert all(b >= a for a, b in zip(values, values[1:]))


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=1e-12, max_value=0.1))
def test_vectorised_phi_agrees_with_point_values(z):
    fam = PhiFamily(ModulusSpec.log(), 0.01)
    assert float(phi_delta_many(fam, z)) == pytest.approx(phi_delta(fam, z), rel=1e-9, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=1e-10, max_value=0.025), st.floats(min_value=1.01, max_value=2.0))
def test_Phi_increases_in_zeta(z, factor):
    fam = PhiFamily(ModulusSpec.loglog(), 0.01)
    assert Phi(fam, z * factor) > Phi(fam, z)


def test_divergence_sweep_log_follows_growth_law():
    zeta = 0.05
    sweep = phi_divergence_sweep(ModulusSpec.log(), zeta)
    assert sweep.increasing
    law = math.log(1e8) / math.log(1 / zeta)
    assert 0.8 * law <= sweep.values[-1] <= 1.5 * law


def test_divergence_sweep_constant_exceeds_a_million():
    sweep = phi_divergence_sweep(ModulusSpec.constant(1.0), 0.05)
    assert sweep.increasing
    assert sweep.values[-1] > 1e6
    assert sweep.values[-1] == pytest.approx(1 + 0.05 / 1e-8, rel=1e-8)


def test_estimate_C2_for_log_sits_at_smallest_grid_point():
    r = ModulusSpec.log()
    L = -np.log(r.probes())
    assert estimate_C2(r) == pytest.approx(1.05 * np.max(np.abs(2 - L) / L))


def test_phi_bound_audit_passes_for_log():
    fam = PhiFamily(ModulusSpec.log(), 0.01)
    audit = phi_bound_audit(fam, np.geomspace(1e-9, 0.1, 50))
    assert audit.verdict is PASS
    assert not audit.flagged
    assert audit.worst_slack >= 0


def test_phi_bound_audit_flags_failing_hypothesis():
    fam = PhiFamily(ModulusSpec.power(1.0), 0.01)
    audit = phi_bound_audit(fam, np.geomspace(1e-6, 0.1, 20))
    assert audit.flagged
    assert audit.hypotheses[0].verdict is FAIL


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
