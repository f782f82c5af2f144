"""Step-size policies, their validity conditions, and closed-form rate bounds.

Every policy produces the per-iteration tuple (tau_k, theta_k, eta_k, gamma_k)
for k = 1..K-1. Bound expressions are evaluated exactly as printed for each
policy, including their asymmetries; each value carries the label of the
expression it came from.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional

import numpy as np

from .core import MissingConstantError, ProblemConstants

EQ_RTOL = 1e-12


class PolicyKind(str, enum.Enum):
    MONOTONE_FIXED = "monotone-fixed"
    WEAK_SHARP = "weak-sharp"
    STRONGLY_MONOTONE = "strongly-monotone"
    STRONGLY_MONOTONE_WEAK_SHARP = "strongly-monotone-weak-sharp"
    ADAPTIVE_K_FREE = "adaptive"
    SMOOTH_STOCHASTIC_MINIBATCH = "smooth-stochastic-minibatch"
    SMOOTH_DETERMINISTIC = "smooth-deterministic"
    SMOOTH_DETERMINISTIC_STRONGLY_MONOTONE = "smooth-deterministic-strongly-monotone"

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        key = name.strip().lower().replace("_", "-")
        for p in cls:
            if key in (p.value, p.name.lower().replace("_", "-")):
                return p
        raise ValueError(f"unknown policy {name!r}; choose from {[p.value for p in cls]}")

    @property
    def strongly_monotone(self) -> bool:
        return self in _STRONG

    @property
    def weak_sharp(self) -> bool:
        return self in (PolicyKind.WEAK_SHARP, PolicyKind.STRONGLY_MONOTONE_WEAK_SHARP)

    @property
    def smooth(self) -> bool:
        return self in (
            PolicyKind.SMOOTH_STOCHASTIC_MINIBATCH,
            PolicyKind.SMOOTH_DETERMINISTIC,
            PolicyKind.SMOOTH_DETERMINISTIC_STRONGLY_MONOTONE,
        )


_STRONG = {
    PolicyKind.STRONGLY_MONOTONE,
    PolicyKind.STRONGLY_MONOTONE_WEAK_SHARP,
    PolicyKind.SMOOTH_DETERMINISTIC_STRONGLY_MONOTONE,
}


class PolicyRequirementError(ValueError):
    """The problem constants do not meet a policy's preconditions."""


def check_policy_requirements(policy: PolicyKind, constants: ProblemConstants) -> None:
    if policy.weak_sharp:
        try:
            constants.require("alpha", "H_at_xstar_norm", why=policy.value)
        except MissingConstantError as e:
            raise PolicyRequirementError(f"weak-sharp policies require alpha and ||H(x*)||: {e}") from None
    if policy.strongly_monotone and not constants.mu_H > 0:
        raise PolicyRequirementError(
            f"policy {policy.value} requires a strongly monotone outer operator (mu_H > 0), got mu_H={constants.mu_H}"
        )
    if policy.smooth and constants.M_F != 0:
        raise PolicyRequirementError(f"policy {policy.value} requires a smooth inner operator (M_F = 0)")
    if policy in (PolicyKind.SMOOTH_DETERMINISTIC, PolicyKind.SMOOTH_DETERMINISTIC_STRONGLY_MONOTONE):
        if constants.sigma_F != 0:
            raise PolicyRequirementError(f"policy {policy.value} requires a deterministic inner operator (sigma_F = 0)")


@dataclass(frozen=True)
class ScheduleRow:
    k: int
    tau: float
    theta: float
    eta: float
    gamma: float


@dataclass(frozen=True, eq=False)
class Schedule:
    """Immutable parameter sequence for k = 1..K-1.

    ``eta0`` is the regularization weight paired with the bootstrap sample;
    it equals eta_1.
    """

    policy: Optional[PolicyKind]
    K: int
    tau: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    batch_size: int = 1
    D_X: Optional[float] = None

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=np.float64) for a in (self.tau, self.theta, self.eta, self.gamma)]
        n = arrays[0].shape[0]
        if n == 0:
            raise ValueError("empty schedule")
        if any(a.shape != (n,) for a in arrays):
            raise ValueError("schedule columns must have equal length")
        for name, a in zip(("tau", "theta", "eta", "gamma"), arrays):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite entries")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(arrays[3] <= 0):
            raise ValueError("gamma must be positive")
        if np.any(arrays[0] <= 0):
            raise ValueError("tau must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")

    @classmethod
    def from_rows(cls, rows: List[ScheduleRow], policy=None, batch_size: int = 1, D_X=None) -> "Schedule":
        rows = sorted(rows, key=lambda r: r.k)
        if [r.k for r in rows] != list(range(1, len(rows) + 1)):
            raise ValueError("rows must cover k = 1..n without gaps")
        return cls(
            policy=policy,
            K=len(rows) + 1,
            tau=np.array([r.tau for r in rows]),
            theta=np.array([r.theta for r in rows]),
            eta=np.array([r.eta for r in rows]),
            gamma=np.array([r.gamma for r in rows]),
            batch_size=batch_size,
            D_X=D_X,
        )

    @classmethod
    def constant(cls, K: int, tau=1.0, theta=1.0, eta=0.0, gamma=0.1, batch_size: int = 1) -> "Schedule":
        n = K - 1
        return cls(None, K, np.full(n, tau), np.full(n, theta), np.full(n, eta), np.full(n, gamma), batch_size)

    def __len__(self) -> int:
        return self.tau.shape[0]

    def row(self, k: int) -> ScheduleRow:
        i = k - 1
        return ScheduleRow(k, float(self.tau[i]), float(self.theta[i]), float(self.eta[i]), float(self.gamma[i]))

    def __iter__(self) -> Iterator[ScheduleRow]:
        for k in range(1, len(self) + 1):
            yield self.row(k)

    @property
    def eta0(self) -> float:
        return float(self.eta[0])

    def with_row(self, k: int, **changes) -> "Schedule":
        """Copy with one row's entries replaced (used for audits and fault injection)."""
        cols = {n: np.array(getattr(self, n)) for n in ("tau", "theta", "eta", "gamma")}
        for name, v in changes.items():
            cols[name][k - 1] = v
        return Schedule(self.policy, self.K, batch_size=self.batch_size, D_X=self.D_X, **cols)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "tau", "theta", "eta", "gamma"])
        for r in self:
            w.writerow([r.k, repr(r.tau), repr(r.theta), repr(r.eta), repr(r.gamma)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, policy=None, batch_size: int = 1) -> "Schedule":
        reader = csv.DictReader(io.StringIO(text))
        rows = [
            ScheduleRow(int(r["k"]), float(r["tau"]), float(r["theta"]), float(r["eta"]), float(r["gamma"]))
            for r in reader
        ]
        return cls.from_rows(rows, policy=policy, batch_size=batch_size)


def _gamma_nonsmooth(D, c: ProblemConstants, eta, n):
    # D / (8 D (L_F + eta L_H) + sqrt(n (M_F^2 + 2 sF^2 + eta^2 (M_H^2 + 2 sH^2))))
    den = 8 * D * (c.L_F + eta * c.L_H) + np.sqrt(
        n * (c.M_F**2 + 2 * c.sigma_F**2 + eta**2 * (c.M_H**2 + 2 * c.sigma_H**2))
    )
    if np.any(den <= 0):
        raise ValueError("step size is unbounded: every Lipschitz, jump and noise constant is zero")
    return D / den


def _check_gamma(gamma):
    if not np.all(np.isfinite(gamma)) or np.any(gamma <= 0):
        raise ValueError("step size is unbounded: every Lipschitz, jump and noise constant is zero")
    return gamma


def build_schedule(
    policy: PolicyKind,
    constants: ProblemConstants,
    D_X: float,
    K: int,
    B: Optional[int] = None,
    eta_override: Optional[float] = None,
) -> Schedule:
    """Realize a policy's (tau, theta, eta, gamma) for k = 1..K-1."""
    policy = PolicyKind.parse(policy) if isinstance(policy, str) else policy
    if not isinstance(K, (int, np.integer)) or K < 2:
        raise ValueError(f"horizon K must be an integer >= 2, got {K!r}")
    if not (D_X > 0 and math.isfinite(D_X)):
        raise ValueError(f"D_X must be positive, got {D_X}")
    check_policy_requirements(policy, constants)
    c = constants
    k = np.arange(1, K, dtype=np.float64)
    ones = np.ones_like(k)
    batch = 1

    if policy in (PolicyKind.MONOTONE_FIXED, PolicyKind.WEAK_SHARP, PolicyKind.STRONGLY_MONOTONE,
                  PolicyKind.STRONGLY_MONOTONE_WEAK_SHARP):
        if policy.weak_sharp:
            eta = c.alpha / (2.0 * c.H_at_xstar_norm)
        else:
            eta = K ** (-0.25)
        if eta_override is not None:
            eta = float(eta_override)
        gamma = _gamma_nonsmooth(D_X, c, eta, K) * ones
        eta = eta * ones
        if policy.strongly_monotone:
            tau, theta = k + 1.0, k / (k + 1.0)
        else:
            tau, theta = ones.copy(), ones.copy()
    elif policy is PolicyKind.ADAPTIVE_K_FREE:
        eta = (k + 1.0) ** (-0.25)
        theta = (k / (k + 1.0)) ** 0.25
        tau = ones.copy()
        gamma = _gamma_nonsmooth(D_X, c, eta, k)
    else:
        eta = K ** (-0.5) if eta_override is None else float(eta_override)
        if policy is PolicyKind.SMOOTH_STOCHASTIC_MINIBATCH:
            root = math.sqrt(c.M_H**2 + 2 * (c.sigma_H**2 + c.sigma_F**2))
            batch = int(B) if B is not None else int(K)
        else:
            root = math.sqrt(c.M_H**2 + 2 * c.sigma_H**2)
        den = 8 * D_X * (c.L_F + eta * c.L_H) + root
        if den <= 0:
            raise ValueError("step size is unbounded: every Lipschitz, jump and noise constant is zero")
        gamma = D_X / den * ones
        eta = eta * ones
        if policy is PolicyKind.SMOOTH_DETERMINISTIC_STRONGLY_MONOTONE:
            tau, theta = k + 1.0, k / (k + 1.0)
        else:
            tau, theta = ones.copy(), ones.copy()

    gamma = _check_gamma(np.asarray(gamma, dtype=np.float64))
    return Schedule(policy, int(K), tau, theta, eta, gamma, batch_size=batch, D_X=float(D_X))


# ---------------------------------------------------------------------------
# Validity conditions
# ---------------------------------------------------------------------------


@dataclass
class ConditionResult:
    name: str
    equation: str
    kind: str  # "ineq" or "eq"
    passed: bool
    first_violation_k: Optional[int] = None
    max_residual: float = 0.0
    checked_from_k: int = 2


@dataclass
class ValidationReport:
    policy: Optional[PolicyKind]
    conditions: List[ConditionResult]
    min_admissible_K: Optional[float] = None
    horizon_ok: bool = True

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failures(self) -> List[ConditionResult]:
        return [c for c in self.conditions if not c.passed]

    def summary(self) -> str:
        lines = []
        for c in self.conditions:
            status = "ok" if c.passed else f"FAILED at k={c.first_violation_k}"
            lines.append(f"{c.equation:<18} {c.name:<40} {status}")
        if self.min_admissible_K is not None:
            flag = "ok" if self.horizon_ok else "below threshold"
            lines.append(f"minimal admissible K = {self.min_admissible_K:.6g} ({flag})")
        return "\n".join(lines)


def _ineq(name, eq, ks, lhs, rhs, start=2) -> ConditionResult:
    bad = np.flatnonzero(~(lhs <= rhs))
    excess = np.max(lhs - rhs) if lhs.size else 0.0
    return ConditionResult(name, eq, "ineq", bad.size == 0, int(ks[bad[0]]) if bad.size else None,
                           float(max(excess, 0.0)), start)


def _eq(name, eq, ks, lhs, rhs) -> ConditionResult:
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1.0)
    res = np.abs(lhs - rhs) / scale
    bad = np.flatnonzero(~(res <= EQ_RTOL))
    return ConditionResult(name, eq, "eq", bad.size == 0, int(ks[bad[0]]) if bad.size else None,
                           float(res.max()) if res.size else 0.0)


def validate_conditions(schedule: Schedule, constants: ProblemConstants,
                        policy: Optional[PolicyKind] = None) -> ValidationReport:
    """Check the step-size conditions the convergence analysis relies on.

    Monotone policies use cond-1-conv / cond-2-conv, strongly monotone ones
    the mu_H-augmented variants, the adaptive policy adap-con. The
    mu_H-augmented inequalities only hold once k >= 1/(2 gamma_k eta_{k-1} mu_H);
    rows below that threshold are skipped and the threshold is reported as
    the minimal admissible horizon.
    """
    policy = policy or schedule.policy or PolicyKind.MONOTONE_FIXED
    c = constants
    tau, theta, eta, gamma = schedule.tau, schedule.theta, schedule.eta, schedule.gamma
    n = len(schedule)
    results: List[ConditionResult] = []
    report = ValidationReport(policy, results)
    if n < 2:
        return report
    ks = np.arange(2, n + 1)
    t, tp = tau[1:], tau[:-1]
    th = theta[1:]
    e, ep = eta[1:], eta[:-1]
    g, gp = gamma[1:], gamma[:-1]

    ratio_eq = ("tau_k theta_k / eta_k = tau_{k-1} / eta_{k-1}", t * th / e, tp / ep)
    smooth_ineq = ("theta_k (L_F^2 + eta_k^2 L_H^2) <= 1/(50 gamma_k gamma_{k-1})",
                   th * (c.L_F**2 + e**2 * c.L_H**2), 1.0 / (50.0 * g * gp))

    if policy is PolicyKind.ADAPTIVE_K_FREE:
        results.append(_eq(ratio_eq[0], "adap-con", ks, ratio_eq[1], ratio_eq[2]))
        results.append(_ineq(smooth_ineq[0], "adap-con", ks, smooth_ineq[1], smooth_ineq[2]))
        return report

    if policy.strongly_monotone:
        mu = c.mu_H
        with np.errstate(divide="ignore"):
            threshold = 1.0 / (2.0 * g * ep * mu)
        report.min_admissible_K = float(np.max(threshold))
        report.horizon_ok = bool(schedule.K >= report.min_admissible_K)
        keep = ks >= threshold
        start = int(ks[keep][0]) if keep.any() else n + 1
        results.append(_ineq(
            "tau_k/(2 gamma_k eta_k) <= tau_{k-1}/eta_{k-1} (1/(2 gamma_{k-1}) + eta_{k-1} mu_H)",
            "cond-1-conv-str", ks[keep],
            (t / (2 * g * e))[keep], (tp / ep * (1.0 / (2 * gp) + ep * mu))[keep], start))
        results.append(_eq(ratio_eq[0], "cond-1-conv-str", ks, ratio_eq[1], ratio_eq[2]))
        results.append(_ineq(smooth_ineq[0], "cond-1-conv-str", ks, smooth_ineq[1], smooth_ineq[2]))
        results.append(_ineq(
            "tau_k/(2 gamma_k) <= tau_{k-1} (1/(2 gamma_{k-1}) + eta_{k-1} mu_H)",
            "cond-2-conv-str", ks[keep],
            (t / (2 * g))[keep], (tp * (1.0 / (2 * gp) + ep * mu))[keep], start))
        results.append(_eq("tau_k theta_k = tau_{k-1}", "cond-2-conv-str", ks, t * th, tp))
        return report

    results.append(_ineq("tau_k/(gamma_k eta_k) <= tau_{k-1}/(gamma_{k-1} eta_{k-1})", "cond-1-conv",
                         ks, t / (g * e), tp / (gp * ep)))
    results.append(_eq(ratio_eq[0], "cond-1-conv", ks, ratio_eq[1], ratio_eq[2]))
    results.append(_ineq(smooth_ineq[0], "cond-1-conv", ks, smooth_ineq[1], smooth_ineq[2]))
    results.append(_ineq("tau_k/gamma_k <= tau_{k-1}/gamma_{k-1}", "cond-2-conv", ks, t / g, tp / gp))
    results.append(_eq("tau_k theta_k = tau_{k-1}", "cond-2-conv", ks, t * th, tp))
    return report


# ---------------------------------------------------------------------------
# Closed-form bounds
# ---------------------------------------------------------------------------


@dataclass
class BoundReport:
    policy: PolicyKind
    K: int
    optimality_upper: Optional[float]
    feasibility_upper: Optional[float]
    optimality_lower: Optional[float]
    dist_upper: Optional[float] = None
    equations: Dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Optional[float]]:
        return {
            "optimality_upper": self.optimality_upper,
            "feasibility_upper": self.feasibility_upper,
            "optimality_lower": self.optimality_lower,
            "dist_upper": self.dist_upper,
        }


def _q(num, den):
    """num/den with 0/0 := 0 (terms whose numerator vanishes drop out)."""
    if num == 0:
        return 0.0
    return num / den if den != 0 else math.inf


def _bracket_monotone_feas(D, c, eta, K, C_H, pK=1.0, pC=0.25, dx_in_den=True):
    # Bracket shared by the monotone feasibility upper bound and its lower bound.
    S = c.M_F**2 + 2 * c.sigma_F**2 + eta**2 * (c.M_H**2 + 2 * c.sigma_H**2)
    Sp = c.M_F**2 + 2 * c.sigma_F**2 + eta**2 * (c.M_H**2 + c.sigma_H**2)
    N = c.sigma_F**2 + eta**2 * c.sigma_H**2
    Ls = c.L_F + eta * c.L_H
    Dd = D if dx_in_den else 1.0
    return (
        16 * D * (c.L_F / K**pK + c.L_H / K ** (pK + 0.25))
        + 2 * math.sqrt(S) / K ** (pK / 2)
        + _q(5 * S + N, 8 * Dd * K ** (pK - 1) * Ls + K ** (pK / 2) * math.sqrt(S))
        + _q(5 * Sp, 8 * Dd * K**pK * Ls + K ** (1.5 * pK) * math.sqrt(S))
        + 2 * C_H / K**pC
    )


def theoretical_bounds(
    policy: PolicyKind,
    constants: ProblemConstants,
    D_X: float,
    K: int,
    C_H: Optional[float] = None,
    B_H: Optional[float] = None,
    eta_override: Optional[float] = None,
    D_XF: Optional[float] = None,
) -> BoundReport:
    """Evaluate the closed-form gap bounds for ``policy`` at horizon ``K``.

    ``C_H``/``B_H`` default to the values stored in ``constants``. The lower
    bound needs ``alpha``; without it ``optimality_lower`` is None.
    ``D_XF`` (half-diameter of the inner solution set, adaptive policy only)
    defaults to ``D_X``.
    """
    policy = PolicyKind.parse(policy) if isinstance(policy, str) else policy
    c = constants
    C_H = c.C_H if C_H is None else C_H
    B_H = c.B_H if B_H is None else B_H
    if C_H is None:
        raise MissingConstantError("theoretical bounds need C_H")
    if K < 2 or not D_X > 0:
        raise ValueError("need K >= 2 and D_X > 0")
    D = float(D_X)
    K = float(K)
    alpha = c.alpha
    can_lower = alpha is not None and B_H is not None
    eq: Dict[str, str] = {}
    opt_up = feas_up = lower = dist_up = None

    if policy in (PolicyKind.MONOTONE_FIXED, PolicyKind.STRONGLY_MONOTONE):
        eta = K ** (-0.25) if eta_override is None else eta_override
        S = c.M_F**2 + 2 * c.sigma_F**2 + eta**2 * (c.M_H**2 + 2 * c.sigma_H**2)
        Sp = c.M_F**2 + 2 * c.sigma_F**2 + eta**2 * (c.M_H**2 + c.sigma_H**2)
        N = c.sigma_F**2 + eta**2 * c.sigma_H**2
        Ls = c.L_F + eta * c.L_H
        rS = math.sqrt(S)
        if policy is PolicyKind.MONOTONE_FIXED:
            opt_up = D * (
                16 * D * (c.L_F / K**0.75 + c.L_H / K)
                + 2 * rS / K**0.25
                + _q(5 * S + N, 8 * D * K**-0.25 * Ls + K**0.25 * rS)
                + _q(5 * S, 8 * D * K**0.75 * Ls + K**1.25 * math.sqrt(Sp))
            )
            br = _bracket_monotone_feas(D, c, eta, K, C_H)
            feas_up = D * br
            eq.update(optimality_upper="mono-optim", feasibility_upper="mono-feasib")
            if can_lower:
                lower = -(B_H * D / alpha) * br
                eq["optimality_lower"] = "lower-bound-mono"
        else:
            opt_up = D * (
                16 * D * (c.L_F / K**1.75 + c.L_H / K**2)
                + 2 * rS / K**1.25
                + _q(5 * S + N, 8 * K**0.75 * D * Ls + K**1.25 * rS)
                + _q(5 * S, 8 * K**1.75 * D * Ls + K**2.25 * math.sqrt(Sp))
            )
            feas_up = D * _bracket_monotone_feas(D, c, eta, K, C_H, pK=2.0, pC=1.25, dx_in_den=False)
            eq.update(optimality_upper="mono-optim-strong", feasibility_upper="mono-feasib-strong")
            if can_lower:
                inner = D * (_bracket_monotone_feas(D, c, eta, K, 0.0, pK=2.0, pC=1.25))
                lower = -(B_H / alpha) * (inner + 2 * C_H / K**1.25)
                eq["optimality_lower"] = "lower-bound-mono-strong"

    elif policy in (PolicyKind.WEAK_SHARP, PolicyKind.STRONGLY_MONOTONE_WEAK_SHARP):
        c.require("alpha", "H_at_xstar_norm", why="weak-sharp bounds")
        eta = alpha / (2 * c.H_at_xstar_norm) if eta_override is None else eta_override
        S = c.M_F**2 + 2 * c.sigma_F**2 + eta**2 * (c.M_H**2 + 2 * c.sigma_H**2)
        N = c.sigma_F**2 + eta**2 * c.sigma_H**2
        Ls = c.L_F + eta * c.L_H
        rS = math.sqrt(S)
        hn = c.H_at_xstar_norm
        if policy is PolicyKind.WEAK_SHARP:
            opt_up = (hn * D / alpha) * (
                16 * D * (c.L_F / K + c.L_H / K**1.25)
                + 2 * rS / K**0.5
                + _q(2 * (5 * S + N), 8 * D * Ls + K**0.5 * rS)
                + _q(10 * S, 8 * K * D * Ls + K**1.5 * rS)
            )
            dist_up = (D / alpha) * (
                32 * D * (c.L_F / K + c.L_H / K**1.25)
                + 4 * rS / K**0.5
                + _q(10 * S + 2 * N, 8 * D * Ls + K**0.5 * rS)
                + _q(10 * S, 8 * K * D * Ls + K**1.5 * rS)
            )
            eq.update(optimality_upper="weak-optim", dist_upper="weak-feasib")
        else:
            opt_up = (hn * D**2 / alpha) * (
                32 * (c.L_F / K**2 + c.L_H / K**2.25)
                + 4 * rS / K**1.5
                + _q(2 * (5 * S + N), 8 * K * Ls + K**1.5 * rS)
                + _q(10 * S, 8 * K**2 * Ls + K**2.5 * rS)
            )
            dist_up = (D / alpha) * (
                32 * D * (c.L_F / K**2 + c.L_H / K**2.25)
                + 4 * rS / K**1.5
                + _q(10 * S + 2 * N, 8 * K * D * Ls + K**1.5 * rS)
                + _q(10 * S, 8 * K**2 * D * Ls + K**2.5 * rS)
            )
            eq.update(optimality_upper="weak-optim-str", dist_upper="weak-feasib-str")
        if B_H is not None:
            lower = -B_H * dist_up
            eq["optimality_lower"] = "-B_H * dist upper (left side of mono-optim)"

    elif policy is PolicyKind.ADAPTIVE_K_FREE:
        DF = D if D_XF is None else float(D_XF)
        eK = K ** (-0.25)  # eta_{K-1} = K^(-1/4)
        e1 = 2 ** (-0.25)
        A = c.M_F**2 + 2 * c.sigma_F**2
        Bh = c.M_H**2 + 2 * c.sigma_H**2
        SK = A + eK**2 * Bh
        SK_printed = A + eK * Bh  # eta_{K-1} appears unsquared in one denominator
        LsK = c.L_F + eK * c.L_H
        opt_up = (
            (D**2 + DF**2) / D * (16 * D * LsK / K**0.75 + 2 * math.sqrt(SK) / K**0.25)
            + _q(5 * D * SK, 8 * K**0.75 * D * LsK + K**1.25 * math.sqrt(SK_printed))
            + _q(D * (20 * A + c.sigma_F**2), 3 * K**0.25 * math.sqrt(A))
            + _q(D * (10 * Bh + c.sigma_H**2), K**0.5 * math.sqrt(Bh))
        )
        br = (
            D * (32 * D * LsK / K + 2 * math.sqrt(SK) / K**0.5)
            + 2 * D / K * (2 * D * (2 * c.L_F + (eK + e1) * c.L_H) + 2 * c.M_F + 4 * c.sigma_F
                           + (eK + e1) * (c.M_H + 2 * c.sigma_H))
            + 4 * D * (K + 2) ** 0.75 / K * (2 * D * (c.L_F + e1 * c.L_H) + c.M_F + 2 * c.sigma_F
                                             + e1 * (c.M_H + 2 * c.sigma_H))
            + _q(D * (20 * A + c.sigma_F**2), 3 * K**0.5 * math.sqrt(A))
            + _q(D * (10 * Bh + c.sigma_H**2), K**0.75 * math.sqrt(Bh))
            + 2 * C_H * D / K**0.25
        )
        feas_up = br
        eq.update(optimality_upper="adapt-optim-mono", feasibility_upper="adapt-feasib")
        if can_lower:
            lower = -(B_H / alpha) * br
            eq["optimality_lower"] = "adapt-lower"

    else:
        eta = K ** (-0.5) if eta_override is None else eta_override
        Ls = c.L_F + eta * c.L_H
        if policy is PolicyKind.SMOOTH_STOCHASTIC_MINIBATCH:
            Q = c.M_H**2 + 2 * (c.sigma_H**2 + c.sigma_F**2)
            Nq = c.sigma_H**2 + c.sigma_F**2
            labels = ("mono-optim-smooth-stoch-2", "mono-feasib-smooth-stoch-F")
        else:
            Q = c.M_H**2 + 2 * c.sigma_H**2
            Nq = c.sigma_H**2
            labels = ("mono-optim-smooth", "mono-feasib-smooth")
        rQ = math.sqrt(Q)
        if policy is PolicyKind.SMOOTH_DETERMINISTIC_STRONGLY_MONOTONE:
            opt_up = D * (
                16 * D * (c.L_F / K**1.5 + c.L_H / K**2)
                + 2 * rQ / K**1.5
                + _q(5 * Q + Nq, 8 * D * K**1.5 * Ls + K**1.5 * rQ)
                + _q(5 * Q, 8 * D * K**1.5 * Ls + K**2.5 * rQ)
            )
            feas_up = D * (
                16 * D * (c.L_F / K**2 + c.L_H / K**2.5)
                + rQ / K**2
                + _q(5 * Q + Nq, 8 * D * K**2 * Ls + K**2 * rQ)
                + _q(5 * Q, 8 * D * K**3 * Ls + K**3 * rQ)
                + 2 * C_H / K**1.5
            )
            eq.update(optimality_upper="mono-optim-smooth-strong", feasibility_upper="mono-feasib-smooth-strong")
        else:
            opt_up = D * (
                16 * D * (c.L_F / K**0.5 + c.L_H / K)
                + 2 * rQ / K**0.5
                + _q(5 * Q + Nq, 8 * D * K**0.5 * Ls + K**0.5 * rQ)
                + _q(5 * Q, 8 * D * K**1.5 * Ls + K**1.5 * rQ)
            )
            feas_up = D * (
                16 * D * (c.L_F / K + c.L_H / K**1.5)
                + rQ / K
                + _q(5 * Q + Nq, 8 * D * K * Ls + K * rQ)
                + _q(5 * Q, 8 * D * K**2 * Ls + K**2 * rQ)
                + 2 * C_H / K**0.5
            )
            eq.update(optimality_upper=labels[0], feasibility_upper=labels[1])
        if can_lower:
            if policy is PolicyKind.SMOOTH_DETERMINISTIC:
                lower = -(B_H / alpha) * (
                    2 * D**2 * (8 * (c.L_F / K**0.5 + c.L_H / K) + rQ / K**0.5)
                    + _q(5 * Q + c.sigma_H**2, 8 * K**0.5 * Ls + K**0.5 * rQ)
                    + _q(5 * Q, 8 * K**1.5 * Ls + K**1.5 * math.sqrt(c.M_H**2 + c.sigma_H**2))
                    + 2 * C_H * D / K**0.5
                )
                eq["optimality_lower"] = "lower-bound-mono-smooth"
            else:
                lower = -(B_H / alpha) * feas_up
                eq["optimality_lower"] = "-(B_H/alpha) * feasibility upper (weak-sharpness argument)"

    return BoundReport(policy, int(K), opt_up, feas_up, lower, dist_up, eq)
