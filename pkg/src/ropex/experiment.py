"""Experiment configuration, replicated runs, persistence and summaries."""
from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import MissingConstantError
from .metrics import METRIC_NAMES, loglog_rate_fit
from .problems import ProblemInstance, make_problem
from .schedules import (
    PolicyKind,
    PolicyRequirementError,
    ValidationReport,
    build_schedule,
    theoretical_bounds,
    validate_conditions,
)
from .solver import RunConfig, RunRecord, run

RECORD_METRICS = METRIC_NAMES + ("iterate_drift",)
BOUND_NAMES = ("optimality_upper", "feasibility_upper", "optimality_lower", "dist_upper")


class ConfigError(ValueError):
    """Invalid or incompatible experiment configuration (exit code 2)."""


class ScheduleViolation(RuntimeError):
    """The realized schedule breaks a step-size condition (exit code 3)."""

    def __init__(self, K: int, report: ValidationReport):
        self.K = K
        self.report = report
        super().__init__(f"schedule for K={K} violates step-size conditions:\n{report.summary()}")


def parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    if "," in t:
        return tuple(parse_value(p) for p in t.split(","))
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "nash"
    policy: str = "monotone-fixed"
    K: Tuple[int, ...] = (1024,)
    reps: int = 1
    seed: int = 0
    cadence: Optional[int] = None
    batch_size: Optional[int] = None
    workers: int = 1
    wall_time: bool = False
    start: Optional[Tuple[float, ...]] = None
    eta: Optional[float] = None
    gamma_scale: float = 1.0
    problem_options: Tuple[Tuple[str, object], ...] = ()
    constants: Tuple[Tuple[str, float], ...] = ()

    def __post_init__(self):
        K = self.K if isinstance(self.K, tuple) else (self.K,)
        object.__setattr__(self, "K", tuple(int(k) for k in K))
        if not self.K or any(k < 2 for k in self.K):
            raise ConfigError("every horizon K must be an integer >= 2")
        if any(b <= a for a, b in zip(self.K, self.K[1:])):
            raise ConfigError("K sweep values must be strictly increasing")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not self.gamma_scale > 0:
            raise ConfigError("gamma_scale must be positive")
        if self.cadence is not None and self.cadence > min(self.K):
            raise ConfigError("cadence must not exceed the smallest K")
        try:
            PolicyKind.parse(self.policy)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def policy_kind(self) -> PolicyKind:
        return PolicyKind.parse(self.policy)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        kw: Dict[str, object] = {}
        popts, consts = [], []
        names = {f.name for f in dataclasses.fields(cls)}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            value = parse_value(val)
            if key.startswith("problem."):
                popts.append((key[len("problem."):], value))
            elif key.startswith("const."):
                consts.append((key[len("const."):], float(value)))
            elif key in ("k_sweep", "K", "k"):
                kw["K"] = value if isinstance(value, tuple) else (value,)
            elif key in names:
                kw[key] = value
            else:
                raise ConfigError(f"line {n}: unknown key {key!r}")
        if kw.get("start") is not None and not isinstance(kw["start"], tuple):
            kw["start"] = (kw["start"],)
        try:
            return cls(problem_options=tuple(popts), constants=tuple(consts), **kw)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        lines = [
            f"problem = {self.problem}",
            f"policy = {self.policy}",
            f"k_sweep = {format_value(self.K) if len(self.K) > 1 else self.K[0]}",
            f"reps = {self.reps}",
            f"seed = {self.seed}",
            f"cadence = {format_value(self.cadence)}",
            f"batch_size = {format_value(self.batch_size)}",
            f"workers = {self.workers}",
            f"wall_time = {format_value(self.wall_time)}",
            f"start = {format_value(self.start)}",
            f"eta = {format_value(self.eta)}",
            f"gamma_scale = {format_value(float(self.gamma_scale))}",
        ]
        lines += [f"problem.{k} = {format_value(v)}" for k, v in self.problem_options]
        lines += [f"const.{k} = {format_value(v)}" for k, v in self.constants]
        return "\n".join(lines) + "\n"

    def build_problem(self) -> ProblemInstance:
        opts = dict(self.problem_options)
        pid = self.problem
        if pid.endswith("-strong"):
            pid = pid[: -len("-strong")]
            opts["strongly_monotone"] = True
        try:
            problem = make_problem(pid, **opts)
        except TypeError as e:
            raise ConfigError(f"bad option for problem {pid!r}: {e}") from None
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.constants:
            try:
                consts = problem.constants.replace(**dict(self.constants))
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad constants override: {e}") from None
            problem = dataclasses.replace(problem, constants=consts, cache={})
        return problem

    def run_config(self, K: int, rep: int) -> RunConfig:
        return RunConfig(
            K=K, policy=self.policy_kind, batch_size_F=self.batch_size, metric_cadence=self.cadence,
            seed=self.seed, replication=rep, start=self.start, wall_time=self.wall_time,
        )


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

_WORKER_PROBLEMS: Dict[str, ProblemInstance] = {}


def _problem_for(cfg: ExperimentConfig) -> ProblemInstance:
    key = cfg.problem + repr(cfg.problem_options) + repr(cfg.constants)
    if key not in _WORKER_PROBLEMS:
        _WORKER_PROBLEMS[key] = cfg.build_problem()
    return _WORKER_PROBLEMS[key]


def prepare_schedule(cfg: ExperimentConfig, problem: ProblemInstance, K: int):
    try:
        sched = build_schedule(cfg.policy_kind, problem.constants, problem.D_X, K, B=cfg.batch_size,
                               eta_override=cfg.eta)
    except PolicyRequirementError as e:
        raise ConfigError(str(e)) from None
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if cfg.gamma_scale != 1.0:
        sched = dataclasses.replace(sched, gamma=sched.gamma * cfg.gamma_scale)
    report = validate_conditions(sched, problem.constants)
    if not report.passed:
        raise ScheduleViolation(K, report)
    return sched, report


def _execute(problem: ProblemInstance, cfg: ExperimentConfig, K: int, rep: int) -> Tuple[RunRecord, float]:
    sched, _ = prepare_schedule(cfg, problem, K)
    t0 = time.perf_counter()
    rec = run(problem, sched, cfg.run_config(K, rep))
    return rec, time.perf_counter() - t0


def _one_run(args) -> Tuple[RunRecord, float]:
    # worker entry point: rebuild (once per process) from the picklable config
    cfg, K, rep = args
    return _execute(_problem_for(cfg), cfg, K, rep)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def run_csv(record: RunRecord) -> str:
    n = record.final_average.shape[0]
    header = ["k", "wall_seconds"] + [f"xbar_{i}" for i in range(n)] + list(RECORD_METRICS)
    lines = [",".join(header)]
    for cp in record.checkpoints:
        row = [_fmt(cp.k), _fmt(cp.wall_seconds)] + [_fmt(v) for v in cp.xbar]
        row += [_fmt(cp.metrics.get(m)) for m in RECORD_METRICS]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


@dataclass
class AggregateRow:
    k: int
    mean: Dict[str, Optional[float]]
    stderr: Dict[str, Optional[float]]


def aggregate(records: Sequence[RunRecord]) -> List[AggregateRow]:
    """Across-replication mean and standard error per checkpoint."""
    if not records:
        raise ValueError("no replications to aggregate")
    grid = records[0].ks()
    if any(r.ks() != grid for r in records):
        raise ValueError("replications have mismatched checkpoint grids")
    R = len(records)
    rows = []
    for i, k in enumerate(grid):
        mean, se = {}, {}
        for m in RECORD_METRICS:
            vals = [r.checkpoints[i].metrics.get(m) for r in records]
            if any(v is None for v in vals):
                mean[m] = se[m] = None
                continue
            a = np.array(vals, dtype=np.float64)
            mean[m] = float(a.mean())
            se[m] = float(a.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
        rows.append(AggregateRow(k, mean, se))
    return rows


def aggregate_csv(rows: Sequence[AggregateRow]) -> str:
    header = ["k"] + [f"{p}_{m}" for m in RECORD_METRICS for p in ("mean", "stderr")]
    lines = [",".join(header)]
    for r in rows:
        vals = [_fmt(r.k)]
        for m in RECORD_METRICS:
            vals += [_fmt(r.mean[m]), _fmt(r.stderr[m])]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


@dataclass
class SummaryReport:
    config: ExperimentConfig
    per_K: Dict[int, List[AggregateRow]]
    finals: List[AggregateRow]
    bounds: Dict[int, Dict[str, Optional[float]]]
    slopes: Dict[str, Tuple[float, float]]
    wall_total: float
    validation: Dict[int, ValidationReport] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def text(self) -> str:
        out = [f"problem={self.config.problem} policy={self.config.policy} reps={self.config.reps} "
               f"seed={self.config.seed}"]
        for K, rep in self.validation.items():
            if rep.min_admissible_K is not None and not rep.horizon_ok:
                out.append(f"note: K={K} is below the minimal admissible horizon {rep.min_admissible_K:.6g}")
        out += self.notes
        out.append("final averaged iterate per K (mean over replications):")
        for r in self.finals:
            cells = " ".join(f"{m}={_fmt(r.mean[m])}" for m in RECORD_METRICS if r.mean[m] is not None)
            out.append(f"  K={r.k} {cells}")
        if self.slopes:
            out.append("log-log slopes:")
            for m, (s, c) in self.slopes.items():
                out.append(f"  {m}: slope={s:.4f} intercept={c:.4f}")
        out.append(f"wall_seconds_total={self.wall_total:.3f}")
        return "\n".join(out) + "\n"


def fit_slopes(rows: Sequence[AggregateRow]) -> Dict[str, Tuple[float, float]]:
    """Rate fits for metrics with at least three positive points."""
    slopes = {}
    for m in RECORD_METRICS:
        pts = [(r.k, r.mean[m]) for r in rows if r.mean[m] is not None and r.mean[m] > 0]
        if len(pts) >= 3:
            slopes[m] = loglog_rate_fit(pts)
    return slopes


def summarize(records_by_K: Dict[int, Sequence[RunRecord]]) -> Tuple[Dict[int, List[AggregateRow]], List[AggregateRow]]:
    per_K = {K: aggregate(recs) for K, recs in records_by_K.items()}
    finals = [rows[-1] for rows in per_K.values()]
    return per_K, finals


def sweep_csv(finals: Sequence[AggregateRow], bounds: Dict[int, Dict[str, Optional[float]]]) -> str:
    header = ["K"] + [f"{p}_{m}" for m in RECORD_METRICS for p in ("mean", "stderr")] + [f"bound_{b}" for b in BOUND_NAMES]
    lines = [",".join(header)]
    for r in finals:
        vals = [_fmt(r.k)]
        for m in RECORD_METRICS:
            vals += [_fmt(r.mean[m]), _fmt(r.stderr[m])]
        vals += [_fmt(bounds.get(r.k, {}).get(b)) for b in BOUND_NAMES]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def _bounds(cfg: ExperimentConfig, problem: ProblemInstance, K: int) -> Dict[str, Optional[float]]:
    try:
        return theoretical_bounds(cfg.policy_kind, problem.constants, problem.D_X, K,
                                  eta_override=cfg.eta).as_dict()
    except (MissingConstantError, ValueError):
        return dict.fromkeys(BOUND_NAMES)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> SummaryReport:
    """Validate, run every (K, replication) pair, and persist CSVs when ``out_dir`` is given."""
    problem = cfg.build_problem()
    validation = {}
    for K in cfg.K:
        validation[K] = prepare_schedule(cfg, problem, K)[1]
    jobs = [(cfg, K, r) for K in cfg.K for r in range(cfg.reps)]
    t0 = time.perf_counter()
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_one_run, jobs))
    else:
        results = [_execute(problem, *j) for j in jobs]
    wall_total = time.perf_counter() - t0
    records: Dict[int, List[RunRecord]] = {K: [] for K in cfg.K}
    timings = []
    for (_, K, r), (rec, secs) in zip(jobs, results):
        records[K].append(rec)
        timings.append((K, r, secs))
    per_K, finals = summarize(records)
    bounds = {K: _bounds(cfg, problem, K) for K in cfg.K}
    slope_rows = finals if len(cfg.K) >= 3 else per_K[cfg.K[-1]]
    notes = [f"problem note: {problem.notes}"] if problem.notes else []
    report = SummaryReport(cfg, per_K, finals, bounds, fit_slopes(slope_rows), wall_total, validation, notes)
    if out_dir is not None:
        write_outputs(Path(out_dir), cfg, records, report, timings)
    return report


def write_outputs(out: Path, cfg: ExperimentConfig, records, report: SummaryReport, timings) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo").write_text(cfg.to_text())
    for K, recs in records.items():
        d = out / f"K{K}"
        d.mkdir(exist_ok=True)
        for r, rec in enumerate(recs):
            (d / f"run_rep{r:03d}.csv").write_text(run_csv(rec))
        (d / "aggregate.csv").write_text(aggregate_csv(report.per_K[K]))
    (out / "sweep.csv").write_text(sweep_csv(report.finals, report.bounds))
    (out / "timing.csv").write_text(
        "K,replication,wall_seconds\n" + "".join(f"{K},{r},{s:.6f}\n" for K, r, s in timings)
    )
    (out / "summary.txt").write_text(report.text())
