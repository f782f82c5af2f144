"""Regularized operator extrapolation for stochastic bilevel variational inequalities."""
from .core import (
    AdditiveGaussian,
    Box,
    CappedNonnegativeBox,
    CustomNoise,
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
from .schedules import (
    PolicyKind,
    Schedule,
    ScheduleRow,
    build_schedule,
    theoretical_bounds,
    validate_conditions,
)
from .problems import make_problem, nash_problem, skew_toy, traffic_problem
from .solver import RunConfig, RunRecord, run
from .experiment import ExperimentConfig, run_experiment

__version__ = "0.1.0"
