"""Command-line front end.

    globopt run --config exp.yaml [--csv out.csv] [--latex out.tex] [--jobs 8]
    globopt single --optimizer cbo --benchmark rastrigin --dim 2 --budget 4000
    globopt list

Experiment files are YAML documents; see README.md for the schema.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Sequence

import yaml

from .benchmarks import BenchmarkSpec, benchmark_ids, make_benchmark
from .core import ConfigError, OptimizerSpec, registered_optimizers
from .engine import METRICS, ExperimentConfig, render_report, run_experiment

log = logging.getLogger("globopt")

SEED_ENV = "GLOBE_SEED"

TOP_KEYS = {"optimizers", "benchmarks", "metrics", "n_runs", "budget", "seed", "target_p", "sample_size"}
OPT_KEYS = {"name", "label", "hyperparameters"}
BENCH_KEYS = {"name", "dim"}
GEN_KEYS = {"seed", "n_minima", "gap", "smoothness"}


# ----------------------------------------------------------------------------
# configuration documents


def _reject_unknown(mapping: dict, allowed: set[str], path: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key {where}{unknown[0]}" + (f" (and {unknown[1:]})" if len(unknown) > 1 else ""))


def _expect(value, types, path: str):
    types = types if isinstance(types, tuple) else (types,)
    if not isinstance(value, types) or (isinstance(value, bool) and bool not in types):
        names = " or ".join(t.__name__ for t in types)
        raise ConfigError(f"{path} must be {names}, got {type(value).__name__}")
    return value


def _parse_optimizer(entry: Any, path: str) -> OptimizerSpec:
    registry = registered_optimizers()
    if isinstance(entry, str):
        entry = {"name": entry}
    _expect(entry, dict, path)
    _reject_unknown(entry, OPT_KEYS, path)
    if "name" not in entry:
        raise ConfigError(f"{path}.name is required")
    name = _expect(entry["name"], str, f"{path}.name")
    if name not in registry:
        raise ConfigError(f"{path}.name: unknown optimizer {name!r}; registered: {', '.join(sorted(registry))}")
    hp = entry.get("hyperparameters") or {}
    _expect(hp, dict, f"{path}.hyperparameters")
    _reject_unknown(hp, set(registry[name].hyperparameter_defaults()), f"{path}.hyperparameters")
    label = entry.get("label")
    if label is not None:
        _expect(label, str, f"{path}.label")
    spec = OptimizerSpec(name, dict(hp), label)
    try:
        registry[name](**spec.hyperparameters)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return spec


def _parse_benchmark(entry: Any, path: str) -> BenchmarkSpec:
    _expect(entry, dict, path)
    for key in ("name", "dim"):
        if key not in entry:
            raise ConfigError(f"{path}.{key} is required")
    name = _expect(entry["name"], str, f"{path}.name")
    dim = _expect(entry["dim"], int, f"{path}.dim")
    if dim < 1:
        raise ConfigError(f"{path}.dim must be >= 1")
    if name == "generated":
        _reject_unknown(entry, BENCH_KEYS | GEN_KEYS, path)
        params = tuple(sorted((k, entry[k]) for k in GEN_KEYS if k in entry))
    else:
        _reject_unknown(entry, BENCH_KEYS, path)
        if name not in benchmark_ids():
            raise ConfigError(f"{path}.name: unknown benchmark {name!r}; known: {', '.join(benchmark_ids())}")
        params = ()
    spec = BenchmarkSpec(name, dim, params)
    try:
        spec.build()
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return spec


def config_from_dict(doc: Any) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping at the top level")
    _reject_unknown(doc, TOP_KEYS, "")
    for key in ("optimizers", "benchmarks"):
        if key not in doc:
            raise ConfigError(f"{key} is required")
        _expect(doc[key], list, key)
        if not doc[key]:
            raise ConfigError(f"{key} must not be empty")
    optimizers = [_parse_optimizer(e, f"optimizers[{i}]") for i, e in enumerate(doc["optimizers"])]
    benchmarks = [_parse_benchmark(e, f"benchmarks[{i}]") for i, e in enumerate(doc["benchmarks"])]
    metrics = doc.get("metrics", ["mean_std", "success"])
    _expect(metrics, list, "metrics")
    for i, m in enumerate(metrics):
        if m not in METRICS:
            raise ConfigError(f"metrics[{i}]: unknown metric {m!r}; registered: {', '.join(METRICS)}")
    budget = doc.get("budget")
    if budget is not None:
        _expect(budget, int, "budget")
    n_runs = _expect(doc.get("n_runs", 20), int, "n_runs")
    seed = _expect(doc.get("seed", 0), int, "seed")
    target_p = float(_expect(doc.get("target_p", 0.99), (int, float), "target_p"))
    sample_size = _expect(doc.get("sample_size", 100_000), int, "sample_size")
    return ExperimentConfig(
        optimizers=tuple(optimizers),
        benchmarks=tuple(benchmarks),
        metrics=tuple(metrics),
        n_runs=n_runs,
        budget=budget,
        master_seed=seed,
        target_p=target_p,
        sample_size=sample_size,
    )


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML experiment document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"parse error{where}: {problem}") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Resolved configuration as a plain document (defaults filled in)."""
    opts = []
    for s in cfg.optimizers:
        entry: dict[str, Any] = {"name": s.name}
        if s.label is not None:
            entry["label"] = s.label
        if s.hyperparameters:
            entry["hyperparameters"] = dict(s.hyperparameters)
        opts.append(entry)
    benches = []
    for b in cfg.benchmarks:
        entry = {"name": b.name, "dim": b.dim}
        entry.update(dict(b.params))
        benches.append(entry)
    return {
        "optimizers": opts,
        "benchmarks": benches,
        "metrics": list(cfg.metrics),
        "n_runs": cfg.n_runs,
        "budget": cfg.budget,
        "seed": cfg.master_seed,
        "target_p": cfg.target_p,
        "sample_size": cfg.sample_size,
    }


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


# ----------------------------------------------------------------------------
# output


def check_writable(paths: Sequence[Path]) -> None:
    """Fail before any work when an output could not be written later."""
    for path in paths:
        parent = path.parent if str(path.parent) else Path(".")
        if path.is_dir():
            raise OSError(f"output path {str(path)!r} is a directory")
        if not parent.is_dir():
            raise OSError(f"output directory {str(parent)!r} does not exist")
        if not os.access(parent, os.W_OK | os.X_OK) or (path.exists() and not os.access(path, os.W_OK)):
            raise OSError(f"output path {str(path)!r} is not writable")


def write_atomic(outputs: dict[Path, str]) -> None:
    """Write every file or none: stage temp files, then rename them in place."""
    staged: list[tuple[str, Path]] = []
    try:
        for path, text in outputs.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent if str(path.parent) else ".")
            staged.append((tmp, path))
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
    except OSError:
        for tmp, _ in staged:
            try:
                os.unlink(tmp)
            except OSError:
                pass
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


# ----------------------------------------------------------------------------
# subcommands


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def cmd_run(args) -> int:
    text = Path(args.config).read_text()
    cfg = parse_config(text)
    doc = config_to_dict(cfg)
    raw = yaml.safe_load(text)
    if args.seed is not None:
        doc["seed"] = args.seed
    elif "seed" not in raw and (env := _env_seed()) is not None:
        doc["seed"] = env
    if args.n_runs is not None:
        doc["n_runs"] = args.n_runs
    if args.budget is not None:
        doc["budget"] = args.budget
    cfg = config_from_dict(doc)
    log.info("resolved configuration:\n%s", dump_config(cfg))
    check_writable([Path(p) for p in (args.csv, args.latex) if p])

    report = run_experiment(cfg, jobs=args.jobs, log=log.info)
    outputs = {}
    if args.csv:
        outputs[Path(args.csv)] = render_report(report, "csv")
    if args.latex:
        outputs[Path(args.latex)] = render_report(report, "latex", args.precision)
    write_atomic(outputs)
    sys.stdout.write(render_report(report, "console", args.precision))
    return 0


def _parse_hp(items: Sequence[str]) -> dict[str, Any]:
    hp = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--hp expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        hp[key] = yaml.safe_load(value)
    return hp


def cmd_single(args) -> int:
    registry = registered_optimizers()
    if args.optimizer not in registry:
        raise ConfigError(f"unknown optimizer {args.optimizer!r}; registered: {', '.join(sorted(registry))}")
    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    bench = make_benchmark(args.benchmark, args.dim)
    budget = args.budget if args.budget is not None else 1000 * args.dim
    opt = registry[args.optimizer](**_parse_hp(args.hp))
    result = opt.minimize(bench, bench.bounds, budget, seed=seed)
    print(f"optimizer:     {args.optimizer}")
    print(f"benchmark:     {bench.name} (d={bench.dim})")
    print(f"seed:          {seed}")
    print(f"best value:    {result.best_value!r}")
    print(f"best point:    {[float(v) for v in result.best_point]}")
    print(f"evaluations:   {result.n_evaluations}")
    if bench.known_min_value is not None:
        print(f"known minimum: {bench.known_min_value!r}")
    return 0


def cmd_list(args) -> int:
    print("optimizers:")
    for name, cls in sorted(registered_optimizers().items()):
        keys = ", ".join(sorted(cls.hyperparameter_defaults()))
        print(f"  {name:<10} [{cls.family}]  {keys}")
    print("benchmarks:")
    for name in benchmark_ids():
        print(f"  {name}")
    print("  generated  (seed, n_minima, gap, smoothness)")
    print("metrics:")
    for mid, metric in METRICS.items():
        print(f"  {mid:<10} {', '.join(metric.labels)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="globopt", description="Global optimization benchmarking.")
    p.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment file")
    r.add_argument("--config", required=True)
    r.add_argument("--csv")
    r.add_argument("--latex")
    r.add_argument("--seed", type=int)
    r.add_argument("--n-runs", type=int)
    r.add_argument("--budget", type=int)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--precision", type=int, default=3, help="significant digits in tables")
    r.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("single", help="one optimizer on one benchmark")
    s.add_argument("--optimizer", required=True)
    s.add_argument("--benchmark", required=True)
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--budget", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--hp", action="append", metavar="KEY=VALUE", help="hyperparameter override (YAML value)")
    s.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS)
    s.set_defaults(func=cmd_single)

    ls = sub.add_parser("list", help="registered optimizers, benchmarks and metrics")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
