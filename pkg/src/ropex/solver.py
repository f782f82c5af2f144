"""Single-loop regularized operator extrapolation for stochastic bilevel VIs."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .core import SeededStream, as_point, sample, sample_batch
from .problems import ProblemInstance
from .schedules import PolicyKind, Schedule, ScheduleRow, build_schedule

Array = np.ndarray


class OracleError(RuntimeError):
    """A sampled direction was not finite (misconfigured oracle or step size)."""


@dataclass
class SolverState:
    k: int
    x_curr: Array
    x_prev: Array
    F_prev: Array
    H_prev: Array
    eta_prev: float
    weighted_sum: Array
    weight_total: float
    F_stream: SeededStream
    H_stream: SeededStream
    batch_size: int = 1
    F_draws: int = 0
    H_draws: int = 0
    last_direction: Optional[Array] = None
    # primed k=1 samples, consumed by the first step
    _pending: Optional[tuple] = field(default=None, repr=False)


@dataclass(frozen=True)
class RunConfig:
    K: int
    policy: Optional[PolicyKind] = PolicyKind.MONOTONE_FIXED
    batch_size_F: Optional[int] = None
    metric_cadence: Optional[int] = None
    seed: int = 0
    replication: int = 0
    start: Optional[tuple] = None
    wall_time: bool = False
    metrics: bool = True

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.metric_cadence is not None and not 1 <= self.metric_cadence <= self.K:
            raise ValueError("metric_cadence must lie in [1, K]")
        if self.batch_size_F is not None and self.batch_size_F < 1:
            raise ValueError("batch size must be positive")


@dataclass(frozen=True)
class Checkpoint:
    k: int
    xbar: Array
    metrics: Dict[str, Optional[float]]
    wall_seconds: Optional[float] = None


@dataclass(frozen=True)
class RunRecord:
    checkpoints: List[Checkpoint]
    final_average: Array
    F_draws: int
    H_draws: int
    schedule: Schedule

    def ks(self) -> List[int]:
        return [c.k for c in self.checkpoints]

    def series(self, name: str) -> Array:
        return np.array([np.nan if c.metrics.get(name) is None else c.metrics[name] for c in self.checkpoints])


def checkpoint_grid(K: int, cadence: Optional[int] = None) -> List[int]:
    """Horizons K' at which x_bar_{K'} is recorded: powers of two (or cadence multiples) plus K."""
    if cadence is None:
        pts = [2**j for j in range(1, int(np.log2(K)) + 1) if 2**j <= K]
    else:
        pts = list(range(cadence, K + 1, cadence))
    pts = [p for p in pts if p >= 2]
    if not pts or pts[-1] != K:
        pts.append(K)
    return pts


def init_state(problem: ProblemInstance, schedule: Schedule, seed: int = 0, replication: int = 0,
               start=None, batch_size: Optional[int] = None) -> SolverState:
    if len(schedule) < 1:
        raise ValueError("empty schedule")
    x1 = problem.set.project(problem.start if start is None else as_point(start, problem.dim))
    fs = SeededStream(seed, replication, "F")
    hs = SeededStream(seed, replication, "H")
    B = schedule.batch_size if batch_size is None else int(batch_size)
    F1 = sample_batch(problem.inner, x1, fs, B, iteration=1)
    H1 = sample(problem.outer, x1, hs, iteration=1)
    return SolverState(
        k=1, x_curr=x1, x_prev=x1.copy(), F_prev=F1, H_prev=H1, eta_prev=schedule.eta0,
        weighted_sum=np.zeros_like(x1), weight_total=0.0, F_stream=fs, H_stream=hs,
        batch_size=B, F_draws=B, H_draws=1, _pending=(F1, H1),
    )


def assemble_direction(state: SolverState, row: ScheduleRow, F_k: Array, H_k: Array) -> Array:
    """g_k = F_k + eta_k H_k + theta_k [F_k + eta_{k-1} H_k - (F_{k-1} + eta_{k-1} H_{k-1})]."""
    ep = state.eta_prev
    return F_k + row.eta * H_k + row.theta * ((F_k + ep * H_k) - (state.F_prev + ep * state.H_prev))


def step(state: SolverState, row: ScheduleRow, problem: ProblemInstance) -> SolverState:
    """One iteration: sample, extrapolate, project, accumulate (state is updated in place)."""
    if row.k != state.k:
        raise ValueError(f"schedule row k={row.k} does not match state k={state.k}")
    x = state.x_curr
    if state._pending is not None:
        F_k, H_k = state._pending
        state._pending = None
    else:
        F_k = sample_batch(problem.inner, x, state.F_stream, state.batch_size, iteration=state.k)
        H_k = sample(problem.outer, x, state.H_stream, iteration=state.k)
        state.F_draws += state.batch_size
        state.H_draws += 1
    with np.errstate(invalid="ignore", over="ignore"):
        g = assemble_direction(state, row, F_k, H_k)
    if not np.all(np.isfinite(g)):
        raise OracleError(f"non-finite direction at k={state.k}")
    x_next = problem.set.project(x - row.gamma * g)
    state.x_prev, state.x_curr = x, x_next
    state.F_prev, state.H_prev, state.eta_prev = F_k, H_k, row.eta
    state.weighted_sum = state.weighted_sum + row.tau * x_next
    state.weight_total += row.tau
    state.last_direction = g
    state.k += 1
    return state


def averaged_iterate(state: SolverState) -> Array:
    if state.weight_total <= 0:
        raise ValueError("no completed steps to average")
    return state.weighted_sum / state.weight_total


def run(problem: ProblemInstance, policy: Union[PolicyKind, Schedule, str, None], config: RunConfig,
        schedule: Optional[Schedule] = None) -> RunRecord:
    """Execute K-1 steps and record x_bar (plus metrics) on the checkpoint grid.

    ``policy`` may be a ready-made Schedule, which then overrides the config's policy.
    """
    from .metrics import evaluate_metrics

    if isinstance(policy, Schedule):
        schedule = policy
    if schedule is None:
        pol = policy if policy is not None else config.policy
        pol = PolicyKind.parse(pol) if isinstance(pol, str) else pol
        schedule = build_schedule(pol, problem.constants, problem.D_X, config.K, B=config.batch_size_F)
    if len(schedule) < config.K - 1:
        raise ValueError("schedule shorter than K-1")
    state = init_state(problem, schedule, config.seed, config.replication, config.start, config.batch_size_F)
    marks = set(checkpoint_grid(config.K, config.metric_cadence))
    checkpoints: List[Checkpoint] = []
    t0 = time.perf_counter()
    prev_xbar = None
    for row in schedule:
        if row.k >= config.K:
            break
        step(state, row, problem)
        horizon = state.k  # x_bar over k = 1..horizon-1
        if horizon in marks:
            xbar = averaged_iterate(state)
            wall = time.perf_counter() - t0 if config.wall_time else None
            metrics = evaluate_metrics(problem, xbar) if config.metrics else {}
            metrics["iterate_drift"] = None if prev_xbar is None else float(np.linalg.norm(xbar - prev_xbar))
            checkpoints.append(Checkpoint(horizon, xbar.copy(), metrics, wall))
            prev_xbar = xbar
    return RunRecord(checkpoints, averaged_iterate(state), state.F_draws, state.H_draws, schedule)
