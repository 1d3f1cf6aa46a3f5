"""Benchmark suite: analytical functions, the counted Benchmark wrapper and
the random function generator."""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable

import numpy as np

from ..core import Array, Bounds, ConfigError, fd_gradient
from .functions import FUNCTIONS
from .generator import GeneratedFunction, generate_random_function

__all__ = [
    "Benchmark",
    "BenchmarkSpec",
    "GeneratedFunction",
    "benchmark_ids",
    "generate_random_function",
    "gradient_fd",
    "known_minimum",
    "load_registry",
    "make_benchmark",
    "analytic_eval",
    "default_bounds",
]


@lru_cache(maxsize=1)
def load_registry() -> dict:
    text = resources.files(__package__).joinpath("registry.json").read_text()
    return json.loads(text)


def benchmark_ids() -> list[str]:
    return list(load_registry())


def _entry(name: str) -> dict:
    reg = load_registry()
    if name not in reg:
        raise ConfigError(f"unknown benchmark {name!r}; known: {', '.join(reg)}")
    return reg[name]


def default_bounds(name: str, dim: int) -> Bounds:
    b = _entry(name)["bounds"]
    if b == "dim_squared":
        return Bounds.cube(-float(dim * dim), float(dim * dim), dim)
    return Bounds.cube(float(b[0]), float(b[1]), dim)


def known_minimum(name: str, dim: int) -> tuple[float, list[Array]] | None:
    """``(value, points)`` from the registry, or ``None`` if not recorded."""
    m = _entry(name)["minimum"]
    kind = m["kind"]
    if kind == "uniform":
        return float(m["value"]), [np.full(dim, float(m["coordinate"]))]
    if kind == "separable":
        return dim * float(m["value_per_dim"]), [np.full(dim, float(m["coordinate"]))]
    if kind == "per_axis":
        if dim > len(m["values"]):
            return None
        return float(np.sum(m["values"][:dim])), [np.array(m["coordinates"][:dim], dtype=float)]
    if kind == "table":
        e = m["entries"].get(str(dim))
        if e is None:
            return None
        return float(e["value"]), [np.array(e["point"], dtype=float)]
    if kind == "trid":
        i = np.arange(1, dim + 1, dtype=float)
        return -dim * (dim + 4) * (dim - 1) / 6.0, [i * (dim + 1 - i)]
    if kind == "dixonprice":
        i = np.arange(1, dim + 1, dtype=float)
        return 0.0, [2.0 ** (-(2.0**i - 2.0) / 2.0**i)]
    raise ConfigError(f"registry entry for {name!r} has unknown minimum kind {kind!r}")


def analytic_eval(name: str, x: Array) -> float:
    """Uncounted evaluation of a registered function at one point."""
    _entry(name)
    return float(FUNCTIONS[name](np.asarray(x, dtype=float)))


class Benchmark:
    """A test function bound to a dimension, with an evaluation counter.

    ``bench(x)`` and ``bench.eval(x)`` are counted; ``bench.raw(X)`` is a
    vectorized, uncounted evaluation for analysis. The counter is guarded by
    a lock so concurrent callers never lose increments.
    """

    def __init__(
        self,
        name: str,
        dim: int,
        fn: Callable[[Array], Array],
        bounds: Bounds,
        known_min_value: float | None = None,
        known_min_points: list[Array] | None = None,
    ):
        if bounds.dim != dim:
            raise ConfigError(f"bounds dimension {bounds.dim} does not match dim={dim}")
        self.name = name
        self.dim = dim
        self.bounds = bounds
        self.known_min_value = known_min_value
        self.known_min_points = known_min_points
        self._fn = fn
        self._count = 0
        self._lock = threading.Lock()

    @property
    def eval_count(self) -> int:
        return self._count

    def reset_count(self) -> None:
        with self._lock:
            self._count = 0

    def eval(self, x: Array) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"{self.name} expects shape ({self.dim},), got {x.shape}")
        with self._lock:
            self._count += 1
        return float(self._fn(x))

    __call__ = eval

    def raw(self, X: Array) -> Array:
        return np.asarray(self._fn(np.asarray(X, dtype=float)), dtype=float)

    def gradient(self, x: Array, h: float | Array | None = None) -> Array:
        return gradient_fd(self, x, h)

    def __repr__(self):
        return f"Benchmark({self.name!r}, dim={self.dim})"

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()


def gradient_fd(bench: Benchmark, x: Array, h: float | Array | None = None) -> Array:
    """Finite-difference gradient; costs exactly ``2 d`` counted evaluations."""
    return fd_gradient(bench.eval, x, bench.bounds, h)


def make_benchmark(name: str, dim: int, bounds: Bounds | None = None) -> Benchmark:
    if dim < 1:
        raise ConfigError("benchmark dimension must be >= 1")
    _entry(name)
    bounds = default_bounds(name, dim) if bounds is None else bounds
    km = known_minimum(name, dim)
    value, points = (None, None) if km is None else km
    return Benchmark(name, dim, FUNCTIONS[name], bounds, value, points)


@dataclass(frozen=True)
class BenchmarkSpec:
    """A reference to an analytical benchmark or a generated function.

    ``name`` is a registry id, or ``"generated"`` together with ``params``
    (``seed``, ``n_minima``, ``gap``, ``smoothness``).
    """

    name: str
    dim: int
    params: tuple = ()

    @property
    def id(self) -> str:
        if self.name == "generated":
            p = dict(self.params)
            return f"generated[seed={p.get('seed', 0)},M={p.get('n_minima', 5)},{p.get('smoothness', 'C2')}]-d{self.dim}"
        return f"{self.name}-d{self.dim}"

    def build(self) -> Benchmark:
        if self.name == "generated":
            p = dict(self.params)
            unknown = sorted(set(p) - {"seed", "n_minima", "gap", "smoothness"})
            if unknown:
                raise ConfigError(f"unknown generated-function key(s) {unknown}")
            g = generate_random_function(
                int(p.get("seed", 0)),
                self.dim,
                int(p.get("n_minima", 5)),
                float(p.get("gap", 0.1)),
                str(p.get("smoothness", "C2")),
            )
            return g.benchmark()
        return make_benchmark(self.name, self.dim)
