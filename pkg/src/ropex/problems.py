"""Benchmark bilevel VI instances: the Nash game, the traffic network, and skew toys."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .core import (
    AdditiveGaussian,
    Box,
    CappedNonnegativeBox,
    CustomNoise,
    FeasibleSet,
    NoNoise,
    ProblemConstants,
    StochasticOracle,
    as_point,
)

Array = np.ndarray


@dataclass
class AnalyticHooks:
    """Closed-form metric evaluators available for a problem (None = unsupported)."""

    feasibility_gap: Optional[Callable[[Array], float]] = None
    optimality_gap: Optional[Callable[[Array], float]] = None
    saddle_gap: Optional[Callable[[Array], float]] = None
    outer_gap: Optional[Callable[[Array], float]] = None
    lcp: bool = False


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    name: str
    set: FeasibleSet
    inner: StochasticOracle
    outer: StochasticOracle
    constants: ProblemConstants
    start: Array
    inner_solution: Optional[FeasibleSet] = None
    outer_solution: Optional[Array] = None
    analytic: AnalyticHooks = field(default_factory=AnalyticHooks)
    # affine description F(x) = M x + b of the inner mean, when available
    inner_affine: Optional[tuple] = None
    # (problem id, options) so that workers can rebuild the instance
    build: tuple = ("", ())
    notes: str = ""
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return int(self.start.shape[0])

    @property
    def D_X(self) -> float:
        return self.set.schedule_radius()


def _box_corners(lo: Array, hi: Array, limit: int = 16) -> Optional[Array]:
    free = np.flatnonzero(hi > lo)
    if free.size > limit:
        return None
    pts = np.tile(lo, (2 ** free.size, 1))
    for r, bits in enumerate(itertools.product((0, 1), repeat=free.size)):
        for j, b in zip(free, bits):
            pts[r, j] = hi[j] if b else lo[j]
    return pts


def _max_affine_norm(M: Array, b: Array, box: Box) -> float:
    """max_{x in box} ||M x + b|| (a convex function, so attained at a vertex)."""
    corners = _box_corners(box.lower, box.upper)
    if corners is None:
        return float(np.linalg.norm(M, 2) * np.linalg.norm(np.maximum(abs(box.lower), abs(box.upper)))
                     + np.linalg.norm(b))
    return float(np.max(np.linalg.norm(corners @ M.T + b, axis=1)))


def skew_affine_box_gap(M: Array, b: Array, box: Box, xt) -> float:
    """max_{x in box} <M x + b, xt - x> for skew-symmetric M (the quadratic term vanishes)."""
    xt = as_point(xt, box.dim)
    c = M.T @ xt - b
    return float(np.sum(np.maximum(box.lower * c, box.upper * c)) + b @ xt)


def centered_quadratic_box_gap(box: Box, target: Array, xt) -> float:
    """max_{x in box} <x - target, xt - x>; separable concave, maximized at the clipped midpoint."""
    xt = as_point(xt, box.dim)
    x = np.clip(0.5 * (xt + target), box.lower, box.upper)
    return float((x - target) @ (xt - x))


# ---------------------------------------------------------------------------
# Nash game
# ---------------------------------------------------------------------------

NASH_XSTAR = np.array([20.0, 5.0])


def nash_saddle_gap(xt) -> float:
    """f(x1, 5) - f(20, x2) for the expected payoff f = 25 - 2 x1 x2 + 10 x1."""
    xt = as_point(xt, 2)
    return float(40.0 * (xt[1] - 5.0))


def nash_outer_gap(xt) -> float:
    xt = as_point(xt, 2)
    return float(0.5 * (xt @ xt) - 212.5)


def nash_problem(strongly_monotone: bool = False) -> ProblemInstance:
    box = Box([20.0, 5.0], [50.0, 15.0])
    M = np.array([[0.0, -2.0], [2.0, 0.0]])
    b = np.array([10.0, 0.0])

    def F(x):
        return M @ x + b

    def H(x):
        return np.array(x, dtype=np.float64)

    inner = StochasticOracle(F, AdditiveGaussian(std=[1.0, 0.0]), variance_bound=1.0)
    outer = StochasticOracle(H, AdditiveGaussian(std=[1.0, 1.0]), variance_bound=2.0)
    solset = Box([20.0, 5.0], [50.0, 5.0])
    constants = ProblemConstants(
        L_F=2.0, L_H=1.0, sigma_F=1.0, sigma_H=math.sqrt(2.0),
        mu_H=1.0 if strongly_monotone else 0.0,
        C_H=math.sqrt(2725.0), C_F=math.sqrt(10400.0),
        B_H=math.sqrt(2525.0), B_F=100.0,
        alpha=40.0, H_at_xstar_norm=math.sqrt(425.0),
    )
    hooks = AnalyticHooks(
        feasibility_gap=lambda xt: skew_affine_box_gap(M, b, box, xt),
        optimality_gap=lambda xt: centered_quadratic_box_gap(solset, np.zeros(2), xt),
        saddle_gap=nash_saddle_gap,
        outer_gap=nash_outer_gap,
    )
    return ProblemInstance(
        name="nash-strong" if strongly_monotone else "nash",
        set=box, inner=inner, outer=outer, constants=constants,
        start=box.default_start(), inner_solution=solset, outer_solution=NASH_XSTAR.copy(),
        analytic=hooks, inner_affine=(M, b),
        build=("nash", (("strongly_monotone", bool(strongly_monotone)),)),
    )


# ---------------------------------------------------------------------------
# Traffic network
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrafficNetwork:
    link_path_incidence: Array  # (links, paths)
    od_path_incidence: Array  # (od pairs, paths)
    cap: Array
    t0: Array
    n_exponents: Array
    demand_mean: Array
    demand_std: Array

    def __post_init__(self):
        D = np.asarray(self.link_path_incidence, dtype=np.float64)
        W = np.asarray(self.od_path_incidence, dtype=np.float64)
        if D.ndim != 2 or W.ndim != 2 or D.shape[1] != W.shape[1]:
            raise ValueError("incidence matrices must share the path dimension")
        if not np.all(np.isin(D, (0.0, 1.0))) or not np.all(np.isin(W, (0.0, 1.0))):
            raise ValueError("incidence matrices must be binary")
        if np.any(D.sum(axis=0) < 1):
            raise ValueError("every path must use at least one link")
        if not np.all(W.sum(axis=0) == 1):
            raise ValueError("every path must belong to exactly one O-D pair")
        vecs = {}
        for name, size in (("cap", D.shape[0]), ("t0", D.shape[0]), ("n_exponents", D.shape[0]),
                           ("demand_mean", W.shape[0]), ("demand_std", W.shape[0])):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            if v.shape != (size,):
                raise ValueError(f"{name} must have length {size}")
            vecs[name] = v
        if np.any(vecs["cap"] <= 0) or np.any(vecs["t0"] <= 0):
            raise ValueError("cap and t0 must be strictly positive")
        if np.any(vecs["n_exponents"] < 1):
            raise ValueError("GBPR exponents must be >= 1")
        if np.any(vecs["demand_std"] < 0):
            raise ValueError("demand_std must be nonnegative")
        object.__setattr__(self, "link_path_incidence", D)
        object.__setattr__(self, "od_path_incidence", W)
        for k, v in vecs.items():
            object.__setattr__(self, k, v)

    @property
    def n_links(self) -> int:
        return self.link_path_incidence.shape[0]

    @property
    def n_paths(self) -> int:
        return self.link_path_incidence.shape[1]

    @property
    def n_od(self) -> int:
        return self.od_path_incidence.shape[0]

    @property
    def linear(self) -> bool:
        return bool(np.all(self.n_exponents == 1.0))


def parse_network(text: str) -> TrafficNetwork:
    paths, ods, data = [], [], {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *vals = line.split()
        if key == "path":
            paths.append([int(v) for v in vals])
        elif key == "od":
            ods.append([float(v) for v in vals])
        elif key in ("cap", "t0", "n", "demand", "demand_std"):
            data[key] = [float(v) for v in vals]
        else:
            raise ValueError(f"unknown network record {key!r}")
    if not paths or not ods:
        raise ValueError("network needs at least one path and one O-D line")
    n_links = max(max(p) for p in paths)
    for k in ("cap", "t0", "n"):
        n_links = max(n_links, len(data.get(k, [])))
    delta = np.zeros((n_links, len(paths)))
    for j, p in enumerate(paths):
        if min(p) < 1:
            raise ValueError("link indices are 1-based")
        delta[np.asarray(p) - 1, j] = 1.0
    missing = [k for k in ("cap", "t0", "n", "demand") if k not in data]
    if missing:
        raise ValueError(f"network file lacks {missing}")
    return TrafficNetwork(
        delta, np.array(ods), data["cap"], data["t0"], data["n"], data["demand"],
        data.get("demand_std", [0.0] * len(ods)),
    )


def load_network(path) -> TrafficNetwork:
    return parse_network(Path(path).read_text())


def builtin_network() -> TrafficNetwork:
    text = resources.files("ropex").joinpath("data/five_node.net").read_text()
    return parse_network(text)


def gbpr_cost(network: TrafficNetwork, f) -> Array:
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("link flows must be nonnegative")
    return network.t0 * (1.0 + 0.15 * (f / network.cap) ** network.n_exponents)


def gbpr_derivative(network: TrafficNetwork, f) -> Array:
    f = np.asarray(f, dtype=np.float64)
    n = network.n_exponents
    return network.t0 * 0.15 * n * f ** (n - 1.0) / network.cap**n


def path_cost(network: TrafficNetwork, h) -> Array:
    h = np.asarray(h, dtype=np.float64)
    if np.any(h < 0):
        raise ValueError("path flows must be nonnegative")
    D = network.link_path_incidence
    return D.T @ gbpr_cost(network, D @ h)


def traffic_outer_mean(network: TrafficNetwork, x, zeta) -> Array:
    """Gradient of zeta^T C(h) in h; the u-block is zero."""
    x = np.asarray(x, dtype=np.float64)
    D = network.link_path_incidence
    h = np.maximum(x[: network.n_paths], 0.0)
    out = np.zeros_like(x)
    out[: network.n_paths] = D.T @ (gbpr_derivative(network, D @ h) * (D @ np.asarray(zeta, dtype=np.float64)))
    return out


def traffic_problem(
    strongly_monotone: bool = False,
    mu_reg: float = 0.1,
    cap_box: float = 1e4,
    network: Optional[TrafficNetwork] = None,
) -> ProblemInstance:
    """Path-flow equilibrium with elastic O-D prices x = [h; u] on a capped orthant.

    Constants are derived in closed form for linear GBPR costs (all exponents 1).
    """
    if not cap_box > 0:
        raise ValueError("cap_box must be positive")
    if strongly_monotone and not mu_reg > 0:
        raise ValueError("mu_reg must be positive for the strongly monotone variant")
    net = network or builtin_network()
    if not net.linear:
        raise ValueError("closed-form constants are only derived for linear GBPR exponents")
    D, W = net.link_path_incidence, net.od_path_incidence
    P, Q = net.n_paths, net.n_od
    n = P + Q
    mu = mu_reg if strongly_monotone else 0.0
    box = CappedNonnegativeBox(np.full(n, float(cap_box)))

    def F(x):
        h, u = x[:P], x[P:]
        f = D @ np.maximum(h, 0.0)
        return np.concatenate([D.T @ gbpr_cost(net, f) - W.T @ u, W @ h - net.demand_mean])

    def demand_noise(x, rng, size):
        mean = F(x)
        out = np.tile(mean, (size, 1))
        out[:, P:] -= rng.standard_normal((size, Q)) * net.demand_std
        return out

    # with linear costs the outer mean is constant in h: J zeta_bar with J = D^T diag(c') D
    slope = net.t0 * 0.15 / net.cap
    J = D.T @ (slope[:, None] * D)

    def H(x):
        out = np.zeros(n)
        out[:P] = J @ np.ones(P)
        return out + mu * x

    def zeta_noise(x, rng, size):
        zeta = rng.uniform(0.0, 2.0, size=(size, P))
        out = np.zeros((size, n))
        out[:, :P] = zeta @ J.T
        return out + mu * x

    # affine description of the inner mean on the orthant
    M = np.zeros((n, n))
    M[:P, :P] = J
    M[:P, P:] = -W.T
    M[P:, :P] = W
    b = np.concatenate([D.T @ net.t0, -net.demand_mean])
    sigma_F = float(np.linalg.norm(net.demand_std))
    sigma_H = math.sqrt(float(np.sum(J**2)) / 3.0)
    Hbar = np.concatenate([J @ np.ones(P), np.zeros(Q)])
    C_H = float(np.linalg.norm(Hbar) + mu * np.linalg.norm(box.upper))
    constants = ProblemConstants(
        L_F=float(np.linalg.norm(M, 2)), L_H=mu, sigma_F=sigma_F, sigma_H=sigma_H, mu_H=mu,
        C_H=C_H, B_H=C_H, C_F=_max_affine_norm(M, b, box),
    )
    inner = StochasticOracle(F, CustomNoise(demand_noise, "demand") if sigma_F > 0 else NoNoise(),
                             variance_bound=sigma_F**2)
    outer = StochasticOracle(H, CustomNoise(zeta_noise, "zeta"), variance_bound=sigma_H**2)
    return ProblemInstance(
        name="traffic-strong" if strongly_monotone else "traffic",
        set=box, inner=inner, outer=outer, constants=constants, start=box.default_start(),
        analytic=AnalyticHooks(lcp=True), inner_affine=(M, b),
        build=("traffic", (("strongly_monotone", bool(strongly_monotone)), ("mu_reg", float(mu_reg)),
                           ("cap_box", float(cap_box)))),
        notes="outer operator regularized by mu_reg*x" if strongly_monotone else "",
    )


# ---------------------------------------------------------------------------
# Skew toys
# ---------------------------------------------------------------------------


def _block_skew(n: int, s: float) -> Array:
    A = np.zeros((n, n))
    for i in range(0, n - 1, 2):
        A[i, i + 1] = -s
        A[i + 1, i] = s
    return A


def skew_toy(
    n: int = 2,
    sigma_F: float = 0.0,
    sigma_H: float = 0.0,
    *,
    scale: float = 1.0,
    target: Optional[Sequence[float]] = None,
    center: Optional[Sequence[float]] = None,
    tilt: float = 0.0,
    matrix: Optional[Sequence[Sequence[float]]] = None,
) -> ProblemInstance:
    """Monotone affine toy on [0,1]^n with outer operator H(x) = x - target.

    By default F(x) = A x + tilt * e_odd with A block skew of strength
    ``scale``; its solutions are the points whose odd (0-based) coordinates
    vanish, and ``tilt > 0`` makes that set weakly sharp with modulus tilt.
    With ``center`` the inner map is A (x - center) and the center is the
    unique solution (an interior bilinear game). ``matrix`` replaces A
    (monotone, not necessarily skew).
    """
    if n < 1:
        raise ValueError("dimension must be positive")
    if center is not None and tilt:
        raise ValueError("center and tilt are mutually exclusive")
    if tilt < 0 or scale < 0 or sigma_F < 0 or sigma_H < 0:
        raise ValueError("scale, tilt and noise levels must be nonnegative")
    box = Box(np.zeros(n), np.ones(n))
    target = np.full(n, 0.3) if target is None else as_point(target, n)

    odd = np.zeros(n)
    odd[1 : n - (n % 2) : 2] = 1.0
    solset: Optional[Box] = None
    alpha = None
    if matrix is not None:
        A = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        if A.shape != (n, n):
            raise ValueError("matrix must be n x n")
        if np.linalg.eigvalsh(0.5 * (A + A.T)).min() < -1e-12:
            raise ValueError("matrix must be monotone (PSD symmetric part)")
        b = np.zeros(n)
        if center is not None:
            c = as_point(center, n)
            b = -A @ c
        if np.allclose(A, 0):
            solset = box
        elif np.linalg.eigvalsh(0.5 * (A + A.T)).min() > 0:
            # strongly monotone: the unique solution is the center (or the origin)
            c = np.zeros(n) if center is None else as_point(center, n)
            if box.contains(c):
                solset = Box(c, c)
    else:
        A = _block_skew(n, scale)
        if center is not None:
            c = as_point(center, n)
            if not box.contains(c):
                raise ValueError("center must lie in [0,1]^n")
            b = -A @ c
            lo, hi = c.copy(), c.copy()
            if scale == 0:
                lo, hi = np.zeros(n), np.ones(n)
            elif n % 2:
                lo[-1], hi[-1] = 0.0, 1.0
            solset = Box(lo, hi)
        else:
            b = tilt * odd
            if scale == 0 and tilt == 0:
                solset = box
            else:
                solset = Box(np.zeros(n), 1.0 - odd)
                if tilt > 0:
                    alpha = float(tilt)

    skew = np.allclose(A, -A.T)

    def F(x):
        return A @ x + b

    def H(x):
        return x - target

    inner = StochasticOracle(F, AdditiveGaussian(std=np.full(n, sigma_F / math.sqrt(n))) if sigma_F > 0 else NoNoise(),
                             variance_bound=sigma_F**2)
    outer = StochasticOracle(H, AdditiveGaussian(std=np.full(n, sigma_H / math.sqrt(n))) if sigma_H > 0 else NoNoise(),
                             variance_bound=sigma_H**2)
    I = np.eye(n)
    xstar = solset.project(target) if solset is not None else None
    hnorm = float(np.linalg.norm(xstar - target)) if xstar is not None else 0.0
    constants = ProblemConstants(
        L_F=float(np.linalg.norm(A, 2)), L_H=1.0, sigma_F=sigma_F, sigma_H=sigma_H, mu_H=1.0,
        C_H=_max_affine_norm(I, -target, box), C_F=_max_affine_norm(A, b, box),
        B_H=_max_affine_norm(I, -target, solset) if solset is not None else None,
        B_F=_max_affine_norm(A, b, solset) if solset is not None else None,
        alpha=alpha, H_at_xstar_norm=hnorm if hnorm > 0 else None,
    )
    hooks = AnalyticHooks(
        feasibility_gap=(lambda xt: skew_affine_box_gap(A, b, box, xt)) if skew else None,
        optimality_gap=(lambda xt: centered_quadratic_box_gap(solset, target, xt)) if solset is not None else None,
    )
    opts = (("n", n), ("sigma_F", sigma_F), ("sigma_H", sigma_H), ("scale", scale),
            ("target", tuple(target.tolist())), ("center", None if center is None else tuple(as_point(center, n).tolist())),
            ("tilt", tilt), ("matrix", None if matrix is None else tuple(map(tuple, A.tolist()))))
    return ProblemInstance(
        name="skew-toy", set=box, inner=inner, outer=outer, constants=constants,
        start=box.default_start(), inner_solution=solset, outer_solution=xstar,
        analytic=hooks, inner_affine=(A, b), build=("skew-toy", opts),
    )


PROBLEMS: Dict[str, Callable[..., ProblemInstance]] = {
    "nash": nash_problem,
    "traffic": traffic_problem,
    "skew-toy": skew_toy,
}


def make_problem(problem_id: str, **options) -> ProblemInstance:
    try:
        factory = PROBLEMS[problem_id]
    except KeyError:
        raise ValueError(f"unknown problem {problem_id!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**options)


def rebuild(problem: ProblemInstance) -> ProblemInstance:
    pid, opts = problem.build
    return make_problem(pid, **dict(opts))
