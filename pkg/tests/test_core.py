import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ropex.core import (
    AdditiveGaussian,
    Box,
    CappedNonnegativeBox,
    CustomNoise,
    DimensionError,
    MissingConstantError,
    NoNoise,
    NonnegativeOrthant,
    ProblemConstants,
    SeededStream,
    Segment,
    StochasticOracle,
    distance,
    project,
    sample,
    sample_batch,
)
from ropex.problems import nash_problem

NASH_BOX = Box([20.0, 5.0], [50.0, 15.0])

finite = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def boxes(draw, max_dim=4):
    n = draw(st.integers(1, max_dim))
    lo = np.array(draw(st.lists(finite, min_size=n, max_size=n)))
    width = np.array(draw(st.lists(st.floats(0, 100), min_size=n, max_size=n)))
    return Box(lo, lo + width)


def test_box_projection_examples():
    assert np.array_equal(project(NASH_BOX, [10, 20]), [20, 15])
    assert np.array_equal(project(NASH_BOX, [30, 8]), [30, 8])
    assert np.array_equal(project(NonnegativeOrthant(3), [-1, 2, 0]), [0, 2, 0])


def test_box_radius_is_half_diameter():
    assert NASH_BOX.schedule_radius() == pytest.approx(0.5 * math.sqrt(30**2 + 10**2))
    assert CappedNonnegativeBox([1e4] * 8).schedule_radius() == pytest.approx(0.5 * 1e4 * math.sqrt(8))


def test_unbounded_set_needs_radius():
    with pytest.raises(ValueError):
        NonnegativeOrthant(2).schedule_radius()
    assert NonnegativeOrthant(2, radius=3.0).schedule_radius() == 3.0


def test_invalid_sets():
    with pytest.raises(ValueError):
        Box([1.0], [0.0])
    with pytest.raises(ValueError):
        CappedNonnegativeBox([1.0, 0.0])
    with pytest.raises(DimensionError):
        NASH_BOX.project([1.0, 2.0, 3.0])


def test_distance_examples():
    xf = nash_problem().inner_solution
    assert distance(xf, [30, 8]) == pytest.approx(3.0)
    assert distance(xf, [25, 5]) == 0.0
    assert distance(Box([0, 0], [1, 1]), [2, 2]) == pytest.approx(math.sqrt(2))


@given(boxes(), st.data())
def test_projection_idempotent_and_inside(box, data):
    y = np.array(data.draw(st.lists(finite, min_size=box.dim, max_size=box.dim)))
    p = box.project(y)
    assert np.array_equal(box.project(p), p)
    assert np.all(p >= box.lower) and np.all(p <= box.upper)


@given(boxes(), st.data())
def test_projection_nonexpansive(box, data):
    a = np.array(data.draw(st.lists(finite, min_size=box.dim, max_size=box.dim)))
    b = np.array(data.draw(st.lists(finite, min_size=box.dim, max_size=box.dim)))
    assert np.linalg.norm(box.project(a) - box.project(b)) <= np.linalg.norm(a - b) + 1e-12


@given(st.lists(finite, min_size=2, max_size=2), st.lists(finite, min_size=2, max_size=2),
       st.lists(finite, min_size=2, max_size=2))
def test_segment_projection_matches_dense_search(a, b, y):
    seg = Segment(a, b)
    y = np.array(y)
    t = np.linspace(0, 1, 20001)[:, None]
    pts = seg.start + t * (seg.end - seg.start)
    best = np.min(np.linalg.norm(pts - y, axis=1))
    length = np.linalg.norm(seg.end - seg.start)
    assert seg.distance(y) <= best + 1e-9
    assert seg.distance(y) >= best - length / 20000 - 1e-9


def test_nash_oracle_means():
    p = nash_problem()
    assert np.array_equal(p.inner.mean([30, 8]), [-6, 60])
    assert np.array_equal(p.outer.mean([30, 8]), [30, 8])


def test_no_noise_sample_equals_mean():
    o = StochasticOracle(lambda x: 2 * x)
    s = SeededStream(1)
    assert np.array_equal(sample(o, [1.0, 2.0], s, 5), [2.0, 4.0])
    assert np.array_equal(sample_batch(o, [1.0, 2.0], s, 17, 5), [2.0, 4.0])


def test_gaussian_unbiased():
    o = StochasticOracle(lambda x: np.zeros(2), AdditiveGaussian(cov=np.eye(2)), variance_bound=2.0)
    s = SeededStream(7)
    draws = o.draws(np.zeros(2), s, 1, 10_000)
    assert np.all(np.abs(draws.mean(axis=0)) <= 4 / math.sqrt(10_000))


def test_batch_of_one_is_sample():
    p = nash_problem()
    s = SeededStream(3, 2, "F")
    assert np.array_equal(sample_batch(p.inner, [30, 8], s, 1, 9), sample(p.inner, [30, 8], s, 9))


def test_batch_zero_rejected():
    with pytest.raises(ValueError):
        sample_batch(nash_problem().inner, [30, 8], SeededStream(0), 0)


@pytest.mark.parametrize("B", [10, 100])
def test_batch_mean_variance(B):
    p = nash_problem()
    s = SeededStream(11, 0, "F")
    x = np.array([30.0, 8.0])
    means = np.array([sample_batch(p.inner, x, s, B, it) for it in range(10_000)])
    var = np.mean(np.sum((means - p.inner.mean(x)) ** 2, axis=1))
    assert var <= 1.2 * 1.0 / B


def test_stream_determinism_and_independence():
    p = nash_problem()
    a = SeededStream(5, 1, "H")
    b = SeededStream(5, 1, "H")
    x = np.array([30.0, 8.0])
    assert np.array_equal(p.outer.draws(x, a, 4, 3), p.outer.draws(x, b, 4, 3))
    assert not np.array_equal(p.outer.draws(x, a, 4, 1), p.outer.draws(x, a, 5, 1))
    assert not np.array_equal(p.outer.draws(x, a, 4, 1), p.outer.draws(x, SeededStream(5, 2, "H"), 4, 1))
    assert not np.array_equal(p.outer.draws(x, a, 4, 1), p.outer.draws(x, SeededStream(5, 1, "F"), 4, 1))


def test_batch_slot_prefix_is_stable():
    # slot b is a function of (seed, replication, operator, iteration, b) only
    p = nash_problem()
    s = SeededStream(5, 0, "H")
    x = np.array([30.0, 8.0])
    assert np.array_equal(p.outer.draws(x, s, 2, 8)[:3], p.outer.draws(x, s, 2, 3))


def test_variance_discipline(rng):
    p = nash_problem()
    s = SeededStream(2)
    for oracle in (p.inner, p.outer):
        for _ in range(5):
            x = rng.uniform([20, 5], [50, 15])
            d = oracle.draws(x, s, 1, 10_000) - oracle.mean(x)
            assert np.mean(np.sum(d**2, axis=1)) <= 1.2 * oracle.variance_bound


def test_custom_noise_used():
    o = StochasticOracle(lambda x: x, CustomNoise(lambda x, rng, size: np.full((size, 1), 7.0)))
    assert sample(o, [1.0], SeededStream(0)) == 7.0


def test_gaussian_covariance_validation():
    with pytest.raises(ValueError):
        AdditiveGaussian(cov=[[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ValueError):
        AdditiveGaussian()
    assert AdditiveGaussian(std=[1.0, 2.0]).trace == pytest.approx(5.0)


def test_constants_validation():
    with pytest.raises(ValueError):
        ProblemConstants(L_F=-1.0)
    with pytest.raises(ValueError):
        ProblemConstants(alpha=0.0)
    c = ProblemConstants(L_F=1.0)
    with pytest.raises(MissingConstantError):
        c.require("alpha", why="test")
    assert c.replace(L_H=2.0).L_H == 2.0


def test_non_finite_point_rejected():
    with pytest.raises(ValueError):
        NASH_BOX.project([np.nan, 1.0])
