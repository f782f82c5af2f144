import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ropex.metrics import (
    dist_inner,
    evaluate_metrics,
    feasibility_gap,
    feasibility_gap_bruteforce,
    iterate_drift,
    lcp_residual_phi,
    loglog_rate_fit,
    optimality_gap,
    optimality_gap_bruteforce,
    reference_solution,
)
from ropex.problems import nash_outer_gap, nash_problem, nash_saddle_gap, skew_toy, traffic_problem

STEP = 0.02


@pytest.fixture(scope="module")
def nash():
    return nash_problem()


def payoff(x1, x2):
    return 25 - 2 * x1 * x2 + 10 * x1


def test_one_dimensional_gap_value():
    p = skew_toy(1, matrix=[[1.0]])
    assert feasibility_gap_bruteforce(p, [1.0]) == pytest.approx(0.25, abs=1e-6)
    assert feasibility_gap(p, [1.0])[0] == pytest.approx(0.25, abs=1e-6)


def test_gap_zero_at_inner_solution(nash):
    for x in ([20, 5], [35, 5], [50, 5]):
        assert abs(feasibility_gap_bruteforce(nash, x, STEP)) <= 1e-9


def test_weak_sharpness_floor(nash):
    assert feasibility_gap_bruteforce(nash, [30, 8], STEP) >= 120 - 1e-9


def test_optimality_gap_examples(nash):
    assert abs(optimality_gap_bruteforce(nash, [20, 5], STEP)) <= 1e-9
    assert optimality_gap_bruteforce(nash, [30, 5], STEP) == pytest.approx(200.0)
    assert optimality_gap(nash, [30, 5])[0] == pytest.approx(200.0)
    assert optimality_gap_bruteforce(nash, [20, 4], STEP) < 0


def test_optimality_gap_needs_solution_set():
    p = traffic_problem()
    with pytest.raises(ValueError):
        optimality_gap_bruteforce(p, np.ones(8))
    with pytest.raises(ValueError):
        feasibility_gap_bruteforce(p, np.ones(8))


@pytest.mark.parametrize("x, value", [([30, 6], 40.0), ([33, 5], 0.0), ([20, 5.1], 4.0)])
def test_saddle_gap(x, value):
    assert nash_saddle_gap(x) == pytest.approx(value)


@given(st.floats(20, 50), st.floats(5, 15))
def test_saddle_gap_is_payoff_difference(x1, x2):
    direct = payoff(x1, 5) - payoff(20, x2)
    assert abs(nash_saddle_gap([x1, x2]) - direct) <= 1e-12 * max(1.0, abs(direct))


@pytest.mark.parametrize("x, value", [([20, 5], 0.0), ([30, 6], 255.5), ([20, 15], 100.0)])
def test_outer_gap(x, value):
    assert nash_outer_gap(x) == pytest.approx(value)


def test_lcp_phi_examples():
    p = skew_toy(1, matrix=[[1.0]])
    assert lcp_residual_phi(p, [-1.0]) == pytest.approx(3.0)
    assert lcp_residual_phi(p, [0.0]) == 0.0
    t = traffic_problem()
    assert lcp_residual_phi(t, np.zeros(8)) == pytest.approx(math.hypot(200, 220))


def test_iterate_drift():
    cp = lambda k, x: SimpleNamespace(k=k, xbar=np.array(x, dtype=float))  # noqa: E731
    rec = SimpleNamespace(checkpoints=[cp(2, [0, 0]), cp(4, [3, 4]), cp(8, [3, 4])])
    assert iterate_drift(rec, 4) == 5.0
    assert iterate_drift(rec, 8) == 0.0
    with pytest.raises(ValueError):
        iterate_drift(SimpleNamespace(checkpoints=[cp(2, [0, 0])]), 2)


def test_reference_solution_nash(nash):
    ref = reference_solution(nash, tolerance=1e-12)
    assert abs(ref.x[1] - 5.0) <= 1e-6


def test_reference_solution_traffic():
    p = traffic_problem()
    ref = reference_solution(p)
    assert ref.phi <= 1e-6
    assert lcp_residual_phi(p, ref.x) == ref.phi
    # phi grows away from the complementarity solution
    assert lcp_residual_phi(p, ref.x + 0.5) > 1e-3


def test_reference_solution_outer_target():
    p = skew_toy(1, matrix=[[0.0]], target=[0.3])
    ref = reference_solution(p, eta=1.0, tolerance=1e-12)
    assert ref.x[0] == pytest.approx(0.3, abs=1e-10)


def test_reference_non_convergence_reported():
    with pytest.raises(RuntimeError, match="did not reach"):
        reference_solution(traffic_problem(), iterations=3)


def test_dist_inner_falls_back_to_reference():
    p = traffic_problem()
    ref = reference_solution(p)
    assert dist_inner(p, ref.x) <= 1e-8


def test_rate_fit_examples(rng):
    K = np.array([1e2, 1e3, 1e4, 1e5])
    s, _ = loglog_rate_fit(list(zip(K, 3.0 * K**-0.5)))
    assert s == pytest.approx(-0.5, abs=1e-9)
    s, _ = loglog_rate_fit(list(zip(K, np.full(4, 2.0))))
    assert s == pytest.approx(0.0, abs=1e-12)
    K = 2.0 ** np.arange(8, 18)
    s, _ = loglog_rate_fit(list(zip(K, K**-0.25 * (1 + 0.01 * rng.standard_normal(K.size)))))
    assert -0.27 <= s <= -0.23


def test_rate_fit_errors():
    with pytest.raises(ValueError):
        loglog_rate_fit([(1, 1), (2, 1)])
    with pytest.raises(ValueError):
        loglog_rate_fit([(1, 1), (2, 0), (3, 1)])


@given(st.floats(-2, 2), st.floats(0.1, 10))
def test_rate_fit_recovers_power_law(p, c):
    K = 2.0 ** np.arange(4, 12)
    s, b = loglog_rate_fit(list(zip(K, c * K**p)))
    assert s == pytest.approx(p, abs=1e-9) and b == pytest.approx(math.log(c), abs=1e-8)


def test_gap_nonnegative_on_set(nash, rng):
    for _ in range(50):
        x = rng.uniform([20, 5], [50, 15])
        assert feasibility_gap_bruteforce(nash, x, STEP) >= -1e-9


def test_bruteforce_and_analytic_optimality_agree(nash, rng):
    tol = 2 * STEP * nash.constants.B_H
    for _ in range(50):
        x = rng.uniform([20, 5], [50, 15])
        assert abs(optimality_gap_bruteforce(nash, x, STEP) - optimality_gap(nash, x)[0]) <= tol


def test_evaluate_metrics_schema(nash):
    m = evaluate_metrics(nash, [30, 8])
    assert m["dist_inner"] == pytest.approx(3.0) and m["lcp_phi"] is None
    assert m["feasibility_gap"] == pytest.approx(300.0)
    t = evaluate_metrics(traffic_problem(), np.ones(8))
    assert t["feasibility_gap"] is None and t["lcp_phi"] > 0
