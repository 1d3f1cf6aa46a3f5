"""Modular global optimization: decision-based, particle-based and classic
optimizers behind one interface, a benchmark suite and a benchmarking engine."""
from . import decision, misc, particles  # noqa: F401  (registers optimizers)
from .benchmarks import Benchmark, BenchmarkSpec, generate_random_function, make_benchmark
from .core import (
    Bounds,
    ConfigError,
    Optimizer,
    OptimizerSpec,
    RunResult,
    TargetValue,
    make_optimizer,
    registered_optimizers,
    run,
)
from .engine import ExperimentConfig, render_report, run_experiment

__all__ = [
    "Benchmark",
    "BenchmarkSpec",
    "Bounds",
    "ConfigError",
    "ExperimentConfig",
    "Optimizer",
    "OptimizerSpec",
    "RunResult",
    "TargetValue",
    "generate_random_function",
    "make_benchmark",
    "make_optimizer",
    "registered_optimizers",
    "render_report",
    "run",
    "run_experiment",
]
