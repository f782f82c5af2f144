"""Gap functions, distances, LCP residuals, reference solutions and rate fits.

All metrics evaluate deterministic mean maps.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .core import Box, Segment, as_point
from .problems import ProblemInstance

Array = np.ndarray

METRIC_NAMES = ("dist_inner", "feasibility_gap", "optimality_gap", "saddle_gap", "outer_gap", "lcp_phi")
DEFAULT_GRID_STEP = 1e-3
MAX_GRID_POINTS = 2_000_000
_CHUNK = 1 << 16


class ReferenceNotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class GapReport:
    feasibility_gap: float
    optimality_gap: Optional[float] = None
    dist_inner: Optional[float] = None
    lcp_phi: Optional[float] = None
    method: str = "analytic"


@dataclass(frozen=True)
class ReferenceResult:
    x: Array
    move: float
    iterations: int
    phi: float


def _map_rows(fn, pts: Array) -> Array:
    return np.stack([np.asarray(fn(p), dtype=np.float64) for p in pts])


def _inner_on(problem: ProblemInstance, pts: Array) -> Array:
    if problem.inner_affine is not None:
        M, b = problem.inner_affine
        return pts @ M.T + b
    return _map_rows(problem.inner.mean, pts)


def _grid_table(problem: ProblemInstance, which: str, step: float) -> Tuple[Array, Array]:
    """(operator values V_j, <V_j, x_j>) on a grid, cached per problem."""
    key = ("grid", which, step)
    if key in problem.cache:
        return problem.cache[key]
    if which == "inner":
        s = problem.set
        if not isinstance(s, Box) or s.dim > 3:
            raise ValueError("brute-force feasibility gap needs a box of dimension <= 3")
        pts = s.grid(step)
        if pts.shape[0] > MAX_GRID_POINTS:
            raise ValueError(f"grid step {step} gives {pts.shape[0]} points; use a coarser step")
        V = _inner_on(problem, pts)
    else:
        s = problem.inner_solution
        if s is None or not isinstance(s, (Box, Segment)):
            raise ValueError("brute-force optimality gap needs a box or segment description of the inner solution set")
        if isinstance(s, Box) and s.free_axes.size > 2:
            raise ValueError("inner solution set of dimension > 2")
        pts = s.grid(step)
        if pts.shape[0] > MAX_GRID_POINTS:
            raise ValueError(f"grid step {step} gives {pts.shape[0]} points; use a coarser step")
        V = _map_rows(problem.outer.mean, pts)
    table = (V, np.einsum("ij,ij->i", V, pts))
    problem.cache[key] = table
    return table


def _grid_max(V: Array, c: Array, xt: Array) -> float:
    best = -np.inf
    for i in range(0, V.shape[0], _CHUNK):
        best = max(best, float(np.max(V[i:i + _CHUNK] @ xt - c[i:i + _CHUNK])))
    return best


def feasibility_gap_bruteforce(problem: ProblemInstance, xt, grid_step: float = DEFAULT_GRID_STEP) -> float:
    """max over a uniform grid of X of <F(x), xt - x>."""
    V, c = _grid_table(problem, "inner", grid_step)
    return _grid_max(V, c, as_point(xt, problem.dim))


def optimality_gap_bruteforce(problem: ProblemInstance, xt, grid_step: float = DEFAULT_GRID_STEP) -> float:
    """max over a uniform grid of the inner solution set of <H(x), xt - x>."""
    V, c = _grid_table(problem, "outer", grid_step)
    return _grid_max(V, c, as_point(xt, problem.dim))


def _auto_step(box: Box) -> float:
    ext = box.upper - box.lower
    ext = ext[ext > 0]
    if ext.size == 0:
        return DEFAULT_GRID_STEP
    per_axis = MAX_GRID_POINTS ** (1.0 / ext.size) - 1
    return float(max(DEFAULT_GRID_STEP, ext.max() / per_axis))


def feasibility_gap(problem: ProblemInstance, xt) -> Tuple[Optional[float], str]:
    if problem.analytic.feasibility_gap is not None:
        return problem.analytic.feasibility_gap(xt), "analytic"
    if isinstance(problem.set, Box) and problem.set.dim <= 3 and not problem.analytic.lcp:
        step = _auto_step(problem.set)
        return feasibility_gap_bruteforce(problem, xt, step), f"brute_force({step:g})"
    return None, "unsupported"


def optimality_gap(problem: ProblemInstance, xt) -> Tuple[Optional[float], str]:
    if problem.analytic.optimality_gap is not None:
        return problem.analytic.optimality_gap(xt), "analytic"
    s = problem.inner_solution
    if isinstance(s, Box) and s.free_axes.size <= 2:
        step = _auto_step(s)
        return optimality_gap_bruteforce(problem, xt, step), f"brute_force({step:g})"
    return None, "unsupported"


def lcp_residual_phi(problem: ProblemInstance, xt) -> float:
    """||min(x,0)|| + ||min(F(x),0)|| + |x^T F(x)|."""
    x = as_point(xt, problem.dim)
    Fx = problem.inner.mean(x)
    return float(np.linalg.norm(np.minimum(x, 0.0)) + np.linalg.norm(np.minimum(Fx, 0.0)) + abs(x @ Fx))


def reference_solution(problem: ProblemInstance, iterations: int = 2_000_000, tolerance: float = 1e-10,
                       eta: float = 0.0, start=None) -> ReferenceResult:
    """Deterministic extragradient on F + eta H until successive iterates move <= tolerance."""
    c = problem.constants
    L = c.L_F + eta * c.L_H
    if not L > 0:
        raise ValueError("reference solver needs a positive Lipschitz constant")
    gamma = 1.0 / (2.0 * L)
    proj = problem.set.project
    x = proj(problem.start if start is None else as_point(start, problem.dim))
    if problem.inner_affine is not None:
        M, b = problem.inner_affine

        def F(y):
            return M @ y + b
    else:
        F = problem.inner.mean
    if eta:
        G = lambda y: F(y) + eta * problem.outer.mean(y)  # noqa: E731
    else:
        G = F
    move = np.inf
    for t in range(1, iterations + 1):
        y = proj(x - gamma * G(x))
        x_new = proj(x - gamma * G(y))
        move = float(np.linalg.norm(x_new - x))
        x = x_new
        if move <= tolerance:
            return ReferenceResult(x, move, t, lcp_residual_phi(problem, x))
    raise ReferenceNotConverged(
        f"extragradient reference did not reach move <= {tolerance:g} in {iterations} iterations (last move {move:.3g})"
    )


def _reference(problem: ProblemInstance) -> ReferenceResult:
    if "reference" not in problem.cache:
        problem.cache["reference"] = reference_solution(problem)
    return problem.cache["reference"]


def dist_inner(problem: ProblemInstance, xt) -> float:
    """Distance to the inner solution set; falls back to the reference solution."""
    x = as_point(xt, problem.dim)
    if problem.inner_solution is not None:
        return problem.inner_solution.distance(x)
    return float(np.linalg.norm(x - _reference(problem).x))


def gap_report(problem: ProblemInstance, xt) -> GapReport:
    fg, method = feasibility_gap(problem, xt)
    og, _ = optimality_gap(problem, xt)
    return GapReport(
        feasibility_gap=fg, optimality_gap=og, dist_inner=dist_inner(problem, xt),
        lcp_phi=lcp_residual_phi(problem, xt) if problem.analytic.lcp else None, method=method,
    )


def evaluate_metrics(problem: ProblemInstance, xt) -> Dict[str, Optional[float]]:
    """Every metric the problem supports, None for the rest."""
    x = as_point(xt, problem.dim)
    out: Dict[str, Optional[float]] = dict.fromkeys(METRIC_NAMES)
    out["dist_inner"] = dist_inner(problem, x)
    out["feasibility_gap"] = feasibility_gap(problem, x)[0]
    out["optimality_gap"] = optimality_gap(problem, x)[0]
    if problem.analytic.saddle_gap is not None:
        out["saddle_gap"] = problem.analytic.saddle_gap(x)
    if problem.analytic.outer_gap is not None:
        out["outer_gap"] = problem.analytic.outer_gap(x)
    if problem.analytic.lcp:
        out["lcp_phi"] = lcp_residual_phi(problem, x)
    return out


def iterate_drift(record, k: int) -> float:
    """||x_bar_k - x_bar_prev|| between checkpoint k and the one before it."""
    cps = record.checkpoints
    if len(cps) < 2:
        raise ValueError("need at least two checkpoints")
    idx = [c.k for c in cps].index(k)
    if idx == 0:
        raise ValueError("the first checkpoint has no predecessor")
    return float(np.linalg.norm(cps[idx].xbar - cps[idx - 1].xbar))


def loglog_rate_fit(points: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """Least-squares (slope, intercept) of log(value) against log(K)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (K, value) points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("K and values must be positive and finite")
    slope, intercept = np.polyfit(np.log(pts[:, 0]), np.log(pts[:, 1]), 1)
    return float(slope), float(intercept)
