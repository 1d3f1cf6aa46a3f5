"""Optimizer contract shared by every family.

Holds the search-space box, seeded random streams, stopping criteria, the
counted objective wrapper that enforces the evaluation budget, and the
optimizer registry used by the engine and the CLI.

Internally everything minimizes. Maximization is handled at the boundary by
negating the objective (``Optimizer.minimize(..., maximize=True)``).
"""
from __future__ import annotations

import abc
import hashlib
import importlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar

import numpy as np

Array = np.ndarray
Objective = Callable[[Array], float]


class ConfigError(ValueError):
    """Invalid optimizer, benchmark, metric or experiment configuration."""


class StopRun(Exception):
    """Raised by the evaluator when the budget is spent or the target is hit."""


# ----------------------------------------------------------------------------
# search space and randomness


@dataclass(frozen=True, eq=False)
class Bounds:
    lower: Array
    upper: Array

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size < 1:
            raise ConfigError("bounds need two 1-D vectors of identical length >= 1")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigError("bounds must be finite")
        if np.any(lo >= hi):
            raise ConfigError("bounds must satisfy lower < upper on every axis")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, low: float, high: float, dim: int) -> Bounds:
        return cls(np.full(dim, float(low)), np.full(dim, float(high)))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def extent(self) -> Array:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.extent))

    def contains(self, x: Array) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def clip(self, x: Array) -> Array:
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def __eq__(self, other):
        if not isinstance(other, Bounds):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __repr__(self):
        return f"Bounds(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


def make_rng(seed: int) -> np.random.Generator:
    """Fresh PCG64 stream; equal seeds give equal draw sequences."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(master: int, *keys: Any) -> int:
    """Stable 63-bit seed from a master seed and identifying keys.

    Uses a cryptographic hash so the result does not depend on Python's
    per-process string hashing or on the order in which seeds are derived.
    """
    payload = json.dumps([int(master), *[str(k) for k in keys]], separators=(",", ":"))
    digest = hashlib.sha256(payload.encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def uniform_sample(bounds: Bounds, rng: np.random.Generator, n: int | None = None) -> Array:
    """Independent uniform draws per axis inside ``bounds`` (one point or ``n`` rows)."""
    shape = (bounds.dim,) if n is None else (n, bounds.dim)
    u = rng.random(shape)
    # lower + u * extent can round up to upper + ulp for tiny boxes
    return np.minimum(bounds.lower + u * bounds.extent, bounds.upper)


# ----------------------------------------------------------------------------
# stopping criteria


class StoppingCriterion:
    def reached(self, value: float) -> bool:
        return False


class BudgetOnly(StoppingCriterion):
    def __repr__(self):
        return "BudgetOnly()"


@dataclass(frozen=True)
class TargetValue(StoppingCriterion):
    """Stop the first time an evaluated value reaches ``threshold``.

    ``value`` passed to :meth:`reached` is in the user's orientation, i.e.
    before any negation applied for maximization.
    """

    threshold: float
    direction: str = "min"

    def __post_init__(self):
        if self.direction not in ("min", "max"):
            raise ConfigError(f"direction must be 'min' or 'max', got {self.direction!r}")

    def reached(self, value: float) -> bool:
        if not math.isfinite(value):
            return False
        if self.direction == "min":
            return value <= self.threshold
        return value >= self.threshold


# ----------------------------------------------------------------------------
# results and counted evaluation


@dataclass(eq=False)
class RunResult:
    best_point: Array
    best_value: float
    n_evaluations: int
    stopped_early: bool
    trace: list[tuple[int, float]] | None = None

    def __eq__(self, other):
        # bitwise comparison, used by the determinism checks
        if not isinstance(other, RunResult):
            return NotImplemented
        return (
            self.best_point.tobytes() == other.best_point.tobytes()
            and np.float64(self.best_value).tobytes() == np.float64(other.best_value).tobytes()
            and self.n_evaluations == other.n_evaluations
            and self.stopped_early == other.stopped_early
            and self.trace == other.trace
        )


def fd_gradient(f: Objective, x: Array, bounds: Bounds | None = None, h: float | Array | None = None) -> Array:
    """Central-difference gradient using exactly ``2 * d`` calls of ``f``.

    Where ``x +- h e_i`` would leave ``bounds`` the axis falls back to a
    one-sided difference between ``x`` and the inward neighbour, still two
    calls, so accounting stays at ``2 * d`` per gradient.
    """
    x = np.array(x, dtype=float)
    d = x.size
    if h is None:
        step = np.cbrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(x))
    else:
        step = np.broadcast_to(np.asarray(h, dtype=float), (d,)).copy()
    if bounds is not None:
        step = np.minimum(step, 0.5 * bounds.extent)
    g = np.empty(d)
    for i in range(d):
        hi = step[i]
        xp = x.copy()
        xm = x.copy()
        xp[i] += hi
        xm[i] -= hi
        if bounds is not None and xp[i] > bounds.upper[i]:
            # backward difference
            g[i] = (f(x) - f(xm)) / (x[i] - xm[i])
        elif bounds is not None and xm[i] < bounds.lower[i]:
            g[i] = (f(xp) - f(x)) / (xp[i] - x[i])
        else:
            g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i])
    return g


class Evaluator:
    """Counted, budgeted view of an objective.

    Every call increments the counter. Non-finite values are replaced by
    ``+inf``. When the budget is spent, or the stopping criterion fires,
    :class:`StopRun` is raised right after the offending evaluation, so no
    optimizer can overdraw the budget.
    """

    def __init__(
        self,
        objective: Objective,
        bounds: Bounds,
        budget: int,
        stop: StoppingCriterion | None = None,
        maximize: bool = False,
        record_trace: bool = True,
    ):
        if int(budget) < 1:
            raise ConfigError("budget must be >= 1")
        self.objective = objective
        self.bounds = bounds
        self.budget = int(budget)
        self.stop = stop or BudgetOnly()
        self.sign = -1.0 if maximize else 1.0
        self.n = 0
        self.best_value = math.inf
        self.best_point: Array | None = None
        self.last_value = math.nan
        self.stopped_early = False
        self.trace: list[tuple[int, float]] | None = [] if record_trace else None

    @property
    def remaining(self) -> int:
        return self.budget - self.n

    def __call__(self, x: Array) -> float:
        if self.n >= self.budget:
            raise StopRun
        x = np.array(x, dtype=float)
        raw = float(self.objective(x))
        self.n += 1
        value = self.sign * raw
        if not math.isfinite(value):
            value = math.inf
        self.last_value = value
        if self.best_point is None or value < self.best_value:
            self.best_value = value
            self.best_point = x
            if self.trace is not None:
                self.trace.append((self.n, value))
        if self.stop.reached(raw):
            self.stopped_early = self.n < self.budget
            raise StopRun
        if self.n >= self.budget:
            raise StopRun
        return value

    def batch(self, X: Array) -> Array:
        return np.array([self(x) for x in X])

    def gradient(self, x: Array, h: float | None = None) -> Array:
        return fd_gradient(self, x, self.bounds, h)

    def result(self) -> RunResult:
        if self.best_point is None:
            raise RuntimeError("no evaluation was performed")
        return RunResult(
            best_point=self.best_point.copy(),
            best_value=self.sign * self.best_value if math.isfinite(self.best_value) else self.sign * math.inf,
            n_evaluations=self.n,
            stopped_early=self.stopped_early,
            trace=None if self.trace is None else [(i, self.sign * v) for i, v in self.trace],
        )


# ----------------------------------------------------------------------------
# optimizer base and registry


OPTIMIZERS: dict[str, type[Optimizer]] = {}


def register_optimizer(cls):
    if cls.name in OPTIMIZERS:
        raise ValueError(f"duplicate optimizer id {cls.name!r}")
    OPTIMIZERS[cls.name] = cls
    return cls


class Optimizer(abc.ABC):
    """Base class of every algorithm.

    Subclasses set ``name`` and ``defaults`` and implement ``_optimize``,
    which keeps calling the evaluator until it raises :class:`StopRun`.
    Family base classes contribute their own keys (plugin configuration)
    through ``defaults`` as well; keys are merged along the MRO.
    """

    name: ClassVar[str] = ""
    family: ClassVar[str] = "misc"
    defaults: ClassVar[dict[str, Any]] = {}

    def __init__(self, **hyperparameters: Any):
        allowed = self.hyperparameter_defaults()
        unknown = sorted(set(hyperparameters) - set(allowed))
        if unknown:
            raise ConfigError(
                f"unknown hyperparameter(s) {unknown} for optimizer {self.name!r}; "
                f"allowed: {sorted(allowed)}"
            )
        self.params: dict[str, Any] = {**allowed, **hyperparameters}

    @classmethod
    def hyperparameter_defaults(cls) -> dict[str, Any]:
        merged: dict[str, Any] = {}
        for klass in reversed(cls.__mro__):
            merged.update(getattr(klass, "defaults", {}) or {})
        return merged

    def minimize(
        self,
        objective: Objective,
        bounds: Bounds,
        budget: int,
        stop: StoppingCriterion | None = None,
        seed: int = 0,
        maximize: bool = False,
    ) -> RunResult:
        ev = Evaluator(objective, bounds, budget, stop, maximize=maximize)
        rng = make_rng(seed)
        try:
            self._optimize(ev, rng)
        except StopRun:
            pass
        return ev.result()

    @abc.abstractmethod
    def _optimize(self, ev: Evaluator, rng: np.random.Generator) -> None:
        ...


@dataclass
class OptimizerSpec:
    name: str
    hyperparameters: dict[str, Any] = field(default_factory=dict)
    label: str | None = None

    @property
    def id(self) -> str:
        return self.label or self.name

    def key(self) -> str:
        """Stable identifier: name plus a hash of the hyperparameters."""
        blob = json.dumps(self.hyperparameters, sort_keys=True, default=_jsonable)
        return f"{self.name}#{hashlib.sha256(blob.encode()).hexdigest()[:16]}"


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _load_registry():
    # algorithm modules register themselves on import
    importlib.import_module("globopt.decision")
    importlib.import_module("globopt.particles")
    importlib.import_module("globopt.misc")


def registered_optimizers() -> dict[str, type[Optimizer]]:
    _load_registry()
    return dict(OPTIMIZERS)


def make_optimizer(spec: OptimizerSpec | str, **hyperparameters: Any) -> Optimizer:
    if isinstance(spec, str):
        spec = OptimizerSpec(spec, hyperparameters)
    registry = registered_optimizers()
    if spec.name not in registry:
        raise ConfigError(f"unknown optimizer {spec.name!r}; registered: {sorted(registry)}")
    return registry[spec.name](**spec.hyperparameters)


def run(
    optimizer: OptimizerSpec | str,
    objective: Objective,
    bounds: Bounds,
    budget: int,
    stop: StoppingCriterion | None = None,
    seed: int = 0,
    maximize: bool = False,
) -> RunResult:
    """Run one registered optimizer by name or spec."""
    return make_optimizer(optimizer).minimize(objective, bounds, budget, stop=stop, seed=seed, maximize=maximize)
