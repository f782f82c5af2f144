"""Points, feasible sets, problem constants and seeded stochastic oracles."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, fields
from typing import Callable, Optional, Sequence, Union

import numpy as np

Array = np.ndarray


class DimensionError(ValueError):
    pass


def as_point(y, dim: Optional[int] = None) -> Array:
    """Convert to a 1-D float64 array, checking dimension and finiteness."""
    x = np.asarray(y, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise DimensionError(f"expected dimension {dim}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite entries")
    return x


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------


class FeasibleSet:
    """Closed convex set with an exact Euclidean projection.

    ``radius`` is the half-diameter used inside step-size formulas. Bounded
    shapes compute it; unbounded ones need it supplied explicitly.
    """

    dim: int

    def project(self, y) -> Array:
        raise NotImplementedError

    def contains(self, y, tol: float = 0.0) -> bool:
        y = as_point(y, self.dim)
        return bool(np.linalg.norm(y - self.project(y)) <= tol)

    def distance(self, y) -> float:
        y = as_point(y, self.dim)
        return float(np.linalg.norm(y - self.project(y)))

    def default_start(self) -> Array:
        raise NotImplementedError

    def schedule_radius(self) -> float:
        r = getattr(self, "radius", None)
        if r is None:
            raise ValueError(
                f"{type(self).__name__} is unbounded: supply radius before building a schedule"
            )
        return float(r)


@dataclass(frozen=True, eq=False)
class Box(FeasibleSet):
    lower: Array
    upper: Array
    radius: Optional[float] = None

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("lower and upper must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("Box requires lower <= upper componentwise")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("Box bounds must be finite")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "radius", 0.5 * float(np.linalg.norm(hi - lo)))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def project(self, y) -> Array:
        y = as_point(y, self.dim)
        return np.minimum(np.maximum(y, self.lower), self.upper)

    def default_start(self) -> Array:
        return 0.5 * (self.lower + self.upper)

    @property
    def free_axes(self) -> Array:
        """Indices of the non-degenerate coordinates."""
        return np.flatnonzero(self.upper > self.lower)

    def grid(self, step: float) -> Array:
        """Uniform grid (endpoints included) over the non-degenerate axes."""
        axes = []
        for lo, hi in zip(self.lower, self.upper):
            if hi > lo:
                m = int(math.ceil((hi - lo) / step)) + 1
                axes.append(np.linspace(lo, hi, m))
            else:
                axes.append(np.array([lo]))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class NonnegativeOrthant(FeasibleSet):
    n: int
    radius: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if self.radius is not None and not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return self.n

    def project(self, y) -> Array:
        return np.maximum(as_point(y, self.n), 0.0)

    def default_start(self) -> Array:
        return np.ones(self.n)


class CappedNonnegativeBox(Box):
    """[0, upper] with strictly positive caps."""

    def __init__(self, upper):
        hi = np.atleast_1d(np.asarray(upper, dtype=np.float64))
        if np.any(hi <= 0):
            raise ValueError("caps must be strictly positive")
        super().__init__(np.zeros_like(hi), hi)

    def default_start(self) -> Array:
        return np.minimum(np.ones(self.dim), self.upper)


@dataclass(frozen=True, eq=False)
class Segment(FeasibleSet):
    """Line segment [start, end]; used to describe one-parameter solution sets."""

    start: Array
    end: Array

    def __post_init__(self):
        a = as_point(self.start)
        b = as_point(self.end, a.shape[0])
        object.__setattr__(self, "start", a)
        object.__setattr__(self, "end", b)

    @property
    def dim(self) -> int:
        return self.start.shape[0]

    @property
    def radius(self) -> float:
        return 0.5 * float(np.linalg.norm(self.end - self.start))

    def project(self, y) -> Array:
        y = as_point(y, self.dim)
        d = self.end - self.start
        dd = float(d @ d)
        if dd == 0.0:
            return self.start.copy()
        t = min(max(float((y - self.start) @ d) / dd, 0.0), 1.0)
        return self.start + t * d

    def default_start(self) -> Array:
        return 0.5 * (self.start + self.end)

    def grid(self, step: float) -> Array:
        length = float(np.linalg.norm(self.end - self.start))
        m = max(int(math.ceil(length / step)) + 1, 2)
        t = np.linspace(0.0, 1.0, m)[:, None]
        return self.start + t * (self.end - self.start)


def project(set_: FeasibleSet, y) -> Array:
    return set_.project(y)


def distance(target: FeasibleSet, y) -> float:
    """Euclidean distance from ``y`` to a feasible set or solution-set description."""
    return target.distance(y)


# ---------------------------------------------------------------------------
# Problem constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemConstants:
    L_F: float = 0.0
    M_F: float = 0.0
    L_H: float = 0.0
    M_H: float = 0.0
    sigma_F: float = 0.0
    sigma_H: float = 0.0
    mu_H: float = 0.0
    C_H: Optional[float] = None
    C_F: Optional[float] = None
    B_H: Optional[float] = None
    B_F: Optional[float] = None
    alpha: Optional[float] = None
    H_at_xstar_norm: Optional[float] = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be a finite nonnegative number, got {v}")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive when present")
        if self.H_at_xstar_norm is not None and self.H_at_xstar_norm <= 0:
            raise ValueError("H_at_xstar_norm must be positive when present")

    def require(self, *names: str, why: str = "") -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            suffix = f" (needed by {why})" if why else ""
            raise MissingConstantError(f"missing problem constants: {', '.join(missing)}{suffix}")

    def replace(self, **changes) -> "ProblemConstants":
        from dataclasses import replace

        return replace(self, **changes)


class MissingConstantError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Seeded streams and stochastic oracles
# ---------------------------------------------------------------------------


def _tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf8"))


@dataclass(frozen=True)
class SeededStream:
    """Counter-based noise stream keyed by (seed, replication, operator).

    The draw for (iteration, slot) is row ``slot`` of a Philox block whose
    counter is fixed by the iteration, so it never depends on call order,
    batch size or which process performs the call.
    """

    seed: int
    replication: int = 0
    operator: str = "F"
    _key: Array = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0 or self.replication < 0:
            raise ValueError("seed and replication must be nonnegative")
        ss = np.random.SeedSequence([self.seed, self.replication, _tag_id(self.operator)])
        object.__setattr__(self, "_key", ss.generate_state(2, dtype=np.uint64))

    def generator(self, iteration: int) -> np.random.Generator:
        if iteration < 0:
            raise ValueError("iteration must be nonnegative")
        counter = np.array([0, iteration, 0, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self._key, counter=counter))


class NoiseModel:
    def draw(self, x: Array, mean: Array, rng: np.random.Generator, size: int) -> Array:
        """Return ``size`` samples as a (size, n) array."""
        raise NotImplementedError


class NoNoise(NoiseModel):
    def draw(self, x, mean, rng, size):
        return np.broadcast_to(mean, (size, mean.shape[0])).copy()

    def __repr__(self):
        return "NoNoise()"


class AdditiveGaussian(NoiseModel):
    """mean + N(0, cov); ``cov`` may be a scalar, a vector of stds, or a matrix."""

    def __init__(self, std=None, cov=None):
        if (std is None) == (cov is None):
            raise ValueError("give exactly one of std or cov")
        if std is not None:
            s = np.atleast_1d(np.asarray(std, dtype=np.float64))
            if np.any(s < 0):
                raise ValueError("std must be nonnegative")
            self.factor = np.diag(s)
        else:
            c = np.atleast_2d(np.asarray(cov, dtype=np.float64))
            w, v = np.linalg.eigh(c)
            if w.min() < -1e-12 * max(1.0, abs(w).max()):
                raise ValueError("covariance must be positive semidefinite")
            self.factor = v * np.sqrt(np.clip(w, 0.0, None))
        self.trace = float(np.sum(self.factor**2))

    def draw(self, x, mean, rng, size):
        z = rng.standard_normal((size, self.factor.shape[1]))
        return mean + z @ self.factor.T

    def __repr__(self):
        return f"AdditiveGaussian(trace={self.trace:g})"


class CustomNoise(NoiseModel):
    """Scenario-indexed sampler ``fn(x, rng, size) -> (size, n)`` of full samples."""

    def __init__(self, fn: Callable[[Array, np.random.Generator, int], Array], name: str = "custom"):
        self.fn = fn
        self.name = name

    def draw(self, x, mean, rng, size):
        return np.asarray(self.fn(x, rng, size), dtype=np.float64)

    def __repr__(self):
        return f"CustomNoise({self.name})"


@dataclass(frozen=True)
class StochasticOracle:
    mean_map: Callable[[Array], Array]
    noise: NoiseModel = field(default_factory=NoNoise)
    variance_bound: float = 0.0

    def __post_init__(self):
        if not self.variance_bound >= 0:
            raise ValueError("variance_bound must be nonnegative")

    @property
    def deterministic(self) -> bool:
        return isinstance(self.noise, NoNoise)

    def mean(self, x) -> Array:
        return np.asarray(self.mean_map(x), dtype=np.float64)

    def draws(self, x, stream: SeededStream, iteration: int, count: int) -> Array:
        """Slots 0..count-1 of the given iteration, as a (count, n) array."""
        if count < 1:
            raise ValueError("batch size must be at least 1")
        x = as_point(x)
        m = self.mean(x)
        if m.shape != x.shape:
            raise DimensionError("mean map changed the dimension")
        if self.deterministic:
            return np.broadcast_to(m, (count, m.shape[0])).copy()
        return self.noise.draw(x, m, stream.generator(iteration), count)


def sample(oracle: StochasticOracle, x, stream: SeededStream, iteration: int = 0) -> Array:
    """One oracle draw at ``x`` (slot 0 of the iteration's scenario)."""
    if oracle.deterministic:
        return oracle.mean(as_point(x))
    return oracle.draws(x, stream, iteration, 1)[0]


def sample_batch(oracle: StochasticOracle, x, stream: SeededStream, B: int, iteration: int = 0) -> Array:
    """Mean of ``B`` independent draws (slots 0..B-1)."""
    if B < 1:
        raise ValueError("batch size must be at least 1")
    if B == 1:
        return sample(oracle, x, stream, iteration)
    if oracle.deterministic:
        return oracle.mean(as_point(x))
    return oracle.draws(x, stream, iteration, B).mean(axis=0)


Target = Union[FeasibleSet, Segment]
PointLike = Union[Array, Sequence[float]]
