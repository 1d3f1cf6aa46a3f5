"""Benchmarking engine: repeated runs per (optimizer, benchmark) cell,
metrics over the collected best values, and report rendering.

Seeds are derived from stable identifiers (optimizer key, benchmark id, run
index), never from list positions or scheduling order, so a report is the
same whether cells run serially or in a process pool.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .benchmarks import Benchmark, BenchmarkSpec
from .core import ConfigError, OptimizerSpec, derive_seed, make_optimizer, make_rng, registered_optimizers, uniform_sample

# ----------------------------------------------------------------------------
# metric formulas


def f_target(f_min: float, f_mean: float, p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if p == 1.0:
        return f_min
    if p == 0.0:
        return f_mean
    return f_min + (f_mean - f_min) * (1.0 - p)


def success_rate(solutions, threshold: float) -> float:
    s = np.asarray(solutions, dtype=float)
    if s.size == 0:
        raise ValueError("success_rate needs at least one solution")
    return int(np.count_nonzero(s <= threshold)) / s.size


def mean_std(solutions) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation.

    Failed runs are recorded as ``+inf``; any of them makes the mean infinite
    and the spread is then reported as ``+inf`` too.
    """
    s = np.asarray(solutions, dtype=float)
    if s.size == 0:
        raise ValueError("mean_std needs at least one solution")
    mean = float(np.mean(s))
    if not math.isfinite(mean):
        return mean, math.inf
    return mean, float(np.sqrt(np.mean((s - mean) ** 2)))


# ----------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class BenchmarkContext:
    benchmark: str
    dim: int
    f_min: float | None
    f_mean: float
    target_p: float

    @property
    def f_target(self) -> float | None:
        return None if self.f_min is None else f_target(self.f_min, self.f_mean, self.target_p)


@dataclass(frozen=True)
class CellResult:
    optimizer: str
    benchmark: str
    solutions: tuple[float, ...]
    seeds: tuple[int, ...]
    n_evaluations: tuple[int, ...]
    wall_time: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class Metric:
    """``compute(cell, context)`` returns ``{label: value or None}``."""

    id: str
    labels: tuple[str, ...]
    compute: Callable[[CellResult, BenchmarkContext], dict[str, float | None]]


METRICS: dict[str, Metric] = {}


def register_metric(metric: Metric) -> Metric:
    METRICS[metric.id] = metric
    return metric


def _mean_std_metric(cell, ctx):
    m, s = mean_std(cell.solutions)
    return {"mean": m, "std": s}


def _success_metric(cell, ctx):
    target = ctx.f_target
    return {"success": None if target is None else success_rate(cell.solutions, target)}


register_metric(Metric("mean_std", ("mean", "std"), _mean_std_metric))
register_metric(Metric("success", ("success",), _success_metric))


@dataclass(frozen=True)
class ExperimentConfig:
    optimizers: tuple[OptimizerSpec, ...]
    benchmarks: tuple[BenchmarkSpec, ...]
    metrics: tuple[str, ...] = ("mean_std", "success")
    n_runs: int = 20
    budget: int | None = None  # None -> 1000 * d
    master_seed: int = 0
    target_p: float = 0.99
    sample_size: int = 100_000

    def __post_init__(self):
        object.__setattr__(self, "optimizers", tuple(self.optimizers))
        object.__setattr__(self, "benchmarks", tuple(self.benchmarks))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if not 0.0 <= self.target_p <= 1.0:
            raise ConfigError("target_p must lie in [0, 1]")
        if self.sample_size < 1:
            raise ConfigError("sample_size must be >= 1")
        registry = registered_optimizers()
        for spec in self.optimizers:
            if spec.name not in registry:
                raise ConfigError(f"unknown optimizer {spec.name!r}; registered: {', '.join(sorted(registry))}")
            make_optimizer(spec)  # validates hyperparameters
        ids = [s.id for s in self.optimizers]
        if len(set(ids)) != len(ids):
            raise ConfigError("optimizer ids must be unique; give repeated optimizers a label")
        bids = [b.id for b in self.benchmarks]
        if len(set(bids)) != len(bids):
            raise ConfigError("benchmark entries must be unique")
        for b in self.benchmarks:
            b.build()
        for m in self.metrics:
            if m not in METRICS:
                raise ConfigError(f"unknown metric {m!r}; registered: {', '.join(METRICS)}")

    def budget_for(self, dim: int) -> int:
        return 1000 * dim if self.budget is None else int(self.budget)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    contexts: dict[str, BenchmarkContext]
    cells: dict[tuple[str, str], CellResult]
    # (benchmark id, optimizer id) -> metric id -> label -> value
    values: dict[tuple[str, str], dict[str, dict[str, float | None]]]
    metadata: dict[str, Any] = field(default_factory=lambda: {"std": "population"})


# ----------------------------------------------------------------------------
# execution


def estimate_f_mean(bench: Benchmark, master_seed: int, bench_id: str, sample_size: int) -> float:
    rng = make_rng(derive_seed(master_seed, "fmean", bench_id))
    total = 0.0
    chunk = 10_000
    done = 0
    while done < sample_size:
        n = min(chunk, sample_size - done)
        X = uniform_sample(bench.bounds, rng, n)
        total += float(np.sum(bench.raw(X)))
        done += n
    return total / sample_size


def _run_task(task):
    spec, bench_spec, budget, seed = task
    bench = bench_spec.build()
    opt = make_optimizer(spec)
    result = opt.minimize(bench, bench.bounds, budget, seed=seed)
    value = result.best_value if math.isfinite(result.best_value) else math.inf
    return value, result.n_evaluations


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, log: Callable[[str], None] | None = None) -> ExperimentReport:
    tasks = []
    keys = []
    for b in cfg.benchmarks:
        budget = cfg.budget_for(b.dim)
        for spec in cfg.optimizers:
            for r in range(cfg.n_runs):
                seed = derive_seed(cfg.master_seed, spec.key(), b.id, r)
                tasks.append((spec, b, budget, seed))
                keys.append((b.id, spec.id))

    start = time.perf_counter()
    try:
        if jobs <= 1:
            outputs = [_run_task(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outputs = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    except ConfigError as exc:
        raise ConfigError(f"experiment aborted: {exc}") from exc
    wall = time.perf_counter() - start

    contexts = {}
    for b in cfg.benchmarks:
        bench = b.build()
        f_mean = estimate_f_mean(bench, cfg.master_seed, b.id, cfg.sample_size)
        contexts[b.id] = BenchmarkContext(b.id, b.dim, bench.known_min_value, f_mean, cfg.target_p)

    cells = {}
    for b in cfg.benchmarks:
        for spec in cfg.optimizers:
            idx = [i for i, k in enumerate(keys) if k == (b.id, spec.id)]
            cells[(b.id, spec.id)] = CellResult(
                optimizer=spec.id,
                benchmark=b.id,
                solutions=tuple(outputs[i][0] for i in idx),
                seeds=tuple(tasks[i][3] for i in idx),
                n_evaluations=tuple(outputs[i][1] for i in idx),
                wall_time=wall * len(idx) / max(1, len(tasks)),
            )
            if log:
                log(f"{b.id} / {spec.id}: {len(idx)} runs done")

    values = {}
    for (bid, oid), cell in cells.items():
        values[(bid, oid)] = {m: METRICS[m].compute(cell, contexts[bid]) for m in cfg.metrics}
    return ExperimentReport(cfg, contexts, cells, values)


# ----------------------------------------------------------------------------
# rendering


def _rows(report: ExperimentReport):
    """(benchmark spec, optimizer id, metric label, value) in contract order."""
    for b in report.config.benchmarks:
        for spec in report.config.optimizers:
            per_metric = report.values[(b.id, spec.id)]
            for m in report.config.metrics:
                for label in METRICS[m].labels:
                    yield b, spec.id, label, per_metric[m][label]


def _labels(cfg: ExperimentConfig) -> list[str]:
    return [label for m in cfg.metrics for label in METRICS[m].labels]


def _fmt(value: float | None, digits: int) -> str:
    if value is None:
        return "NA"
    return f"{value:.{digits}g}"


def render_console(report: ExperimentReport, digits: int = 3) -> str:
    cfg = report.config
    header = ["benchmark", "metric"] + [s.id for s in cfg.optimizers]
    table = [header]
    for b in cfg.benchmarks:
        for label in _labels(cfg):
            m = next(m for m in cfg.metrics if label in METRICS[m].labels)
            row = [b.id, label]
            for spec in cfg.optimizers:
                row.append(_fmt(report.values[(b.id, spec.id)][m][label], digits))
            table.append(row)
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))).rstrip() for r in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _tex(s: str) -> str:
    return s.replace("\\", r"\textbackslash{}").replace("_", r"\_").replace("#", r"\#").replace("%", r"\%")


def render_latex(report: ExperimentReport, digits: int = 3) -> str:
    cfg = report.config
    cols = "ll" + "r" * len(cfg.optimizers)
    out = [f"\\begin{{tabular}}{{{cols}}}", "\\hline"]
    out.append(" & ".join(["Benchmark", "Metric"] + [_tex(s.id) for s in cfg.optimizers]) + r" \\")
    out.append("\\hline")
    for b in cfg.benchmarks:
        for label in _labels(cfg):
            m = next(m for m in cfg.metrics if label in METRICS[m].labels)
            vals = [report.values[(b.id, s.id)][m][label] for s in cfg.optimizers]
            cells = ["--" if v is None else f"{v:.{digits}g}" for v in vals]
            out.append(" & ".join([_tex(b.id), _tex(label)] + cells) + r" \\")
        out.append("\\hline")
    out.append("\\end{tabular}")
    return "\n".join(out) + "\n"


CSV_COLUMNS = ("benchmark", "dim", "optimizer", "metric", "value")


def render_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for b, oid, label, value in _rows(report):
        name = b.id[: -len(f"-d{b.dim}")]
        w.writerow([name, b.dim, oid, label, "NA" if value is None else repr(float(value))])
    return buf.getvalue()


def parse_csv(text: str) -> list[tuple[str, int, str, str, float | None]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected csv header {header}")
    return [(b, int(d), o, m, None if v == "NA" else float(v)) for b, d, o, m, v in reader]


def render_report(report: ExperimentReport, fmt: str = "console", digits: int = 3) -> str:
    if fmt == "console":
        return render_console(report, digits)
    if fmt == "latex":
        return render_latex(report, digits)
    if fmt == "csv":
        return render_csv(report)
    raise ValueError(f"unknown report format {fmt!r}")
