import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ropex.core import MissingConstantError, ProblemConstants
from ropex.problems import nash_problem
from ropex.schedules import (
    PolicyKind,
    PolicyRequirementError,
    Schedule,
    build_schedule,
    theoretical_bounds,
    validate_conditions,
)

NASH = nash_problem().constants
NASH_STRONG = nash_problem(True).constants


def constants_for(policy, base=NASH_STRONG):
    if policy in (PolicyKind.SMOOTH_DETERMINISTIC, PolicyKind.SMOOTH_DETERMINISTIC_STRONGLY_MONOTONE):
        return base.replace(sigma_F=0.0)
    return base


pos = st.floats(0.01, 10.0)


@st.composite
def constants(draw):
    return ProblemConstants(
        L_F=draw(pos), L_H=draw(pos), M_F=0.0, M_H=draw(st.floats(0, 5)), sigma_F=draw(st.floats(0, 5)),
        sigma_H=draw(st.floats(0, 5)), mu_H=draw(pos), C_H=draw(pos), B_H=draw(pos), alpha=draw(pos),
        H_at_xstar_norm=draw(pos),
    )


def test_monotone_fixed_eta():
    s = build_schedule(PolicyKind.MONOTONE_FIXED, NASH, 1.0, 16)
    assert np.all(s.eta == 0.5)
    assert len(s) == 15


def test_monotone_fixed_gamma_hand_value():
    c = ProblemConstants(L_F=1.0, M_F=1.0)
    s = build_schedule(PolicyKind.MONOTONE_FIXED, c, 1.0, 16)
    assert s.gamma[0] == pytest.approx(1 / 12, rel=1e-15)


def test_strongly_monotone_weights():
    s = build_schedule(PolicyKind.STRONGLY_MONOTONE, NASH_STRONG, 1.0, 10)
    r = s.row(3)
    assert r.tau == 4.0 and r.theta == pytest.approx(0.75)
    assert s.row(1).theta == pytest.approx(0.5)


def test_adaptive_values():
    s = build_schedule(PolicyKind.ADAPTIVE_K_FREE, NASH, 1.0, 10)
    assert s.row(1).eta == pytest.approx(2 ** -0.25)
    assert s.row(1).eta == pytest.approx(0.840896, abs=1e-6)
    assert s.row(2).theta == pytest.approx(0.903602, abs=1e-6)
    k = np.arange(1, 10)
    assert np.allclose(s.eta * (k + 1) ** 0.25, 1.0, rtol=0, atol=1e-15)
    assert np.all(np.diff(s.eta) < 0)


def test_adaptive_prefix_independent_of_K():
    a = build_schedule(PolicyKind.ADAPTIVE_K_FREE, NASH, 2.0, 10)
    b = build_schedule(PolicyKind.ADAPTIVE_K_FREE, NASH, 2.0, 100)
    assert np.array_equal(a.gamma, b.gamma[:9])


def test_weak_sharp_eta():
    s = build_schedule(PolicyKind.WEAK_SHARP, NASH, 1.0, 100)
    assert s.eta[0] == pytest.approx(40 / (2 * math.sqrt(425)))
    assert s.eta[0] == pytest.approx(0.970, abs=1e-3)
    o = build_schedule(PolicyKind.WEAK_SHARP, NASH, 1.0, 100, eta_override=0.1)
    assert np.all(o.eta == 0.1)


def test_smooth_policies():
    s = build_schedule(PolicyKind.SMOOTH_STOCHASTIC_MINIBATCH, NASH, 2.0, 64)
    assert s.batch_size == 64 and s.eta[0] == pytest.approx(1 / 8)
    root = math.sqrt(0 + 2 * (2.0 + 1.0))
    assert s.gamma[0] == pytest.approx(2.0 / (16 * (2 + 1 / 8) + root))
    d = build_schedule(PolicyKind.SMOOTH_DETERMINISTIC, NASH.replace(sigma_F=0.0), 2.0, 64)
    assert d.gamma[0] == pytest.approx(2.0 / (16 * (2 + 1 / 8) + 2.0))
    assert d.batch_size == 1


@pytest.mark.parametrize(
    "policy, consts, needle",
    [
        (PolicyKind.STRONGLY_MONOTONE, NASH, "mu_H"),
        (PolicyKind.WEAK_SHARP, ProblemConstants(L_F=1.0), "alpha"),
        (PolicyKind.SMOOTH_DETERMINISTIC, NASH, "sigma_F"),
        (PolicyKind.SMOOTH_STOCHASTIC_MINIBATCH, NASH.replace(M_F=1.0), "M_F"),
    ],
)
def test_policy_requirements(policy, consts, needle):
    with pytest.raises(PolicyRequirementError, match=needle):
        build_schedule(policy, consts, 1.0, 10)


def test_bad_inputs():
    with pytest.raises(ValueError):
        build_schedule(PolicyKind.MONOTONE_FIXED, NASH, 1.0, 1)
    with pytest.raises(ValueError):
        build_schedule(PolicyKind.MONOTONE_FIXED, NASH, 0.0, 10)
    with pytest.raises(ValueError):
        build_schedule(PolicyKind.MONOTONE_FIXED, ProblemConstants(), 1.0, 10)


@pytest.mark.parametrize("policy", list(PolicyKind))
@pytest.mark.parametrize("K", [10, 100, 1000])
def test_every_schedule_passes_its_conditions(policy, K):
    c = constants_for(policy)
    report = validate_conditions(build_schedule(policy, c, 15.0, K), c)
    assert report.passed, report.summary()


@given(constants(), st.sampled_from(list(PolicyKind)), st.integers(2, 400), st.floats(0.1, 100))
def test_conditions_hold_for_random_constants(c, policy, K, D):
    c = constants_for(policy, c)
    report = validate_conditions(build_schedule(policy, c, D, K), c)
    assert report.passed, report.summary()


def test_corrupted_gamma_flags_condition_three():
    c = ProblemConstants(L_F=1.0)
    s = build_schedule(PolicyKind.MONOTONE_FIXED, c, 1.0, 20)
    bad = s.with_row(5, gamma=2 * s.gamma[4])
    report = validate_conditions(bad, c)
    third = report.conditions[2]
    assert not third.passed and third.first_violation_k == 5
    assert "50 gamma_k gamma_{k-1}" in third.name


def test_broken_equality_reported():
    s = build_schedule(PolicyKind.MONOTONE_FIXED, NASH, 1.0, 20).with_row(7, theta=0.5)
    failing = {c.name: c.first_violation_k for c in validate_conditions(s, NASH).failures()}
    assert failing["tau_k theta_k = tau_{k-1}"] == 7


def test_strong_policy_reports_admissible_horizon():
    s = build_schedule(PolicyKind.STRONGLY_MONOTONE, NASH_STRONG, 15.8, 10)
    report = validate_conditions(s, NASH_STRONG)
    assert report.min_admissible_K > 10 and not report.horizon_ok
    big = validate_conditions(build_schedule(PolicyKind.STRONGLY_MONOTONE, NASH_STRONG, 15.8, 4096), NASH_STRONG)
    assert big.horizon_ok and big.passed


def test_schedule_csv_roundtrip():
    s = build_schedule(PolicyKind.ADAPTIVE_K_FREE, NASH, 3.0, 12)
    back = Schedule.from_csv(s.to_csv())
    for name in ("tau", "theta", "eta", "gamma"):
        assert np.array_equal(getattr(back, name), getattr(s, name))
    assert s.to_csv().splitlines()[0] == "k,tau,theta,eta,gamma"


@given(constants(), st.sampled_from(["L_F", "L_H", "M_H", "sigma_F", "sigma_H"]), st.integers(2, 1000))
def test_gamma_decreases_in_constants(c, name, K):
    for policy in (PolicyKind.MONOTONE_FIXED, PolicyKind.ADAPTIVE_K_FREE):
        g0 = build_schedule(policy, c, 1.0, K).gamma
        g1 = build_schedule(policy, c.replace(**{name: getattr(c, name) + 0.5}), 1.0, K).gamma
        assert np.all(g1 < g0)


def test_feasibility_bound_hand_value():
    c = ProblemConstants(L_F=1.0, C_H=1.0)
    b = theoretical_bounds(PolicyKind.MONOTONE_FIXED, c, 1.0, 16)
    assert b.feasibility_upper == pytest.approx(2.0, rel=1e-15)
    assert b.optimality_upper == pytest.approx(2.0, rel=1e-15)
    assert b.optimality_lower is None


def test_lower_bound_scales_feasibility_bracket():
    c = NASH
    b = theoretical_bounds(PolicyKind.MONOTONE_FIXED, c, 15.0, 1000)
    assert b.optimality_lower == pytest.approx(-(c.B_H / c.alpha) * b.feasibility_upper)


@pytest.mark.parametrize("policy", list(PolicyKind))
def test_bounds_decrease_in_K(policy):
    c = constants_for(policy, ProblemConstants(L_F=1.0, L_H=0.5, mu_H=1.0, C_H=2.0, B_H=2.0, alpha=0.5,
                                               H_at_xstar_norm=1.0))
    a = theoretical_bounds(policy, c, 3.0, 100).as_dict()
    b = theoretical_bounds(policy, c, 3.0, 1000).as_dict()
    for name, va in a.items():
        if va is None:
            continue
        assert abs(b[name]) < abs(va), name


@pytest.mark.parametrize("policy", list(PolicyKind))
def test_lower_at_most_upper(policy):
    c = constants_for(policy)
    b = theoretical_bounds(policy, c, 15.8, 1000)
    assert b.optimality_lower is not None
    assert b.optimality_lower <= b.optimality_upper
    assert b.equations["optimality_upper"]


def test_deterministic_bound_scales_with_diameter_squared():
    c = ProblemConstants(L_F=1.0, L_H=1.0, C_H=1.0)
    a = theoretical_bounds(PolicyKind.MONOTONE_FIXED, c, 1.0, 256)
    b = theoretical_bounds(PolicyKind.MONOTONE_FIXED, c, 2.0, 256)
    assert b.optimality_upper == pytest.approx(4 * a.optimality_upper)
    # the C_H term is linear in D_X, the rest quadratic
    ch = 2 * 1.0 / 256**0.25
    assert b.feasibility_upper == pytest.approx(4 * (a.feasibility_upper - ch) + 2 * ch)


def test_bounds_need_C_H():
    with pytest.raises(MissingConstantError):
        theoretical_bounds(PolicyKind.MONOTONE_FIXED, ProblemConstants(L_F=1.0), 1.0, 16)


def test_weak_sharp_reports_distance_bound():
    b = theoretical_bounds(PolicyKind.WEAK_SHARP, NASH, 15.8, 1000)
    assert b.dist_upper > 0 and b.optimality_lower == pytest.approx(-NASH.B_H * b.dist_upper)
