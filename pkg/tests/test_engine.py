import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from globopt.benchmarks import BenchmarkSpec
from globopt.core import ConfigError, OptimizerSpec
from globopt.engine import (
    METRICS,
    CellResult,
    BenchmarkContext,
    ExperimentConfig,
    Metric,
    estimate_f_mean,
    f_target,
    mean_std,
    parse_csv,
    register_metric,
    render_console,
    render_csv,
    render_latex,
    render_report,
    run_experiment,
    success_rate,
)


def small_cfg(**kw):
    args = dict(
        optimizers=(OptimizerSpec("prs"), OptimizerSpec("cbo")),
        benchmarks=(BenchmarkSpec("sphere", 2), BenchmarkSpec("langermann", 3)),
        n_runs=3,
        budget=150,
        master_seed=5,
        sample_size=2000,
    )
    args.update(kw)
    return ExperimentConfig(**args)


# formulas


def test_f_target_examples():
    assert f_target(0.0, 10.0, 0.99) == pytest.approx(0.1)
    assert f_target(-3.5, 7.25, 1.0) == -3.5
    assert f_target(-3.5, 7.25, 0.0) == 7.25
    with pytest.raises(ValueError):
        f_target(0, 1, 1.5)


@given(st.floats(-1e3, 1e3), st.floats(0, 1e3), st.floats(0, 1), st.floats(0, 1))
def test_f_target_monotone_and_linear(f_min, gap, p, q):
    f_mean = f_min + gap
    lo, hi = sorted((p, q))
    assert f_target(f_min, f_mean, hi) <= f_target(f_min, f_mean, lo) + 1e-9
    mid = 0.5 * (lo + hi)
    avg = 0.5 * (f_target(f_min, f_mean, lo) + f_target(f_min, f_mean, hi))
    assert f_target(f_min, f_mean, mid) == pytest.approx(avg, abs=1e-9 * max(1, abs(f_min) + gap))


def test_success_rate_examples():
    assert success_rate([0.01, 0.02], 0.1) == 1.0
    assert success_rate([1.0, 2.0], 0.1) == 0.0
    assert success_rate([0.05, 0.2, 0.09], 0.1) == 2 / 3
    assert success_rate([0.1], 0.1) == 1.0
    with pytest.raises(ValueError):
        success_rate([], 0.0)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.floats(-100, 100), st.floats(0, 50))
def test_success_rate_monotone(sols, t, dt):
    assert 0.0 <= success_rate(sols, t) <= success_rate(sols, t + dt) <= 1.0


def test_mean_std_examples():
    assert mean_std([5.0]) == (5.0, 0.0)
    assert mean_std([0.0, 2.0]) == (1.0, 1.0)
    assert mean_std([1.0, 2.0, 3.0]) == (2.0, math.sqrt(2 / 3))
    with pytest.raises(ValueError):
        mean_std([])


# experiment execution


def test_single_run_single_cell():
    cfg = ExperimentConfig((OptimizerSpec("direct"),), (BenchmarkSpec("sphere", 2),), n_runs=1, budget=50, sample_size=100)
    rep = run_experiment(cfg)
    cell = rep.cells[("sphere-d2", "direct")]
    assert len(cell.solutions) == 1
    v = rep.values[("sphere-d2", "direct")]["mean_std"]
    assert v == {"mean": cell.solutions[0], "std": 0.0}
    assert rep.metadata["std"] == "population"


def test_report_is_deterministic_and_complete():
    a, b = run_experiment(small_cfg()), run_experiment(small_cfg())
    assert a.cells == b.cells and a.values == b.values
    for cell in a.cells.values():
        assert len(cell.solutions) == 3 and all(n == 150 for n in cell.n_evaluations)
    # no recorded minimum beyond d = 2 -> success unavailable there
    assert a.values[("langermann-d3", "prs")]["success"]["success"] is None
    assert a.values[("sphere-d2", "prs")]["success"]["success"] is not None


def test_optimizer_order_only_permutes_columns():
    a = run_experiment(small_cfg())
    b = run_experiment(small_cfg(optimizers=(OptimizerSpec("cbo"), OptimizerSpec("prs"))))
    assert a.values == b.values


def test_benchmark_order_irrelevant():
    a = run_experiment(small_cfg())
    b = run_experiment(small_cfg(benchmarks=(BenchmarkSpec("langermann", 3), BenchmarkSpec("sphere", 2))))
    assert a.values == b.values


def test_master_seed_changes_numbers():
    a = run_experiment(small_cfg())
    b = run_experiment(small_cfg(master_seed=6))
    assert a.values != b.values


def test_parallel_matches_serial():
    cfg = small_cfg()
    assert render_csv(run_experiment(cfg, jobs=1)) == render_csv(run_experiment(cfg, jobs=3))


def test_f_mean_uses_dedicated_stream():
    bench = BenchmarkSpec("sphere", 2).build()
    a = estimate_f_mean(bench, 0, "sphere-d2", 30_000)
    assert a == estimate_f_mean(bench, 0, "sphere-d2", 30_000)
    # uniform on [-5.12, 5.12]^2: E|x|^2 = 2 * 5.12^2 / 3
    assert a == pytest.approx(2 * 5.12**2 / 3, rel=0.02)
    assert bench.eval_count == 0


def test_nonfinite_best_recorded_as_inf():
    from globopt import benchmarks

    spec = BenchmarkSpec("sphere", 1)
    cfg = ExperimentConfig((OptimizerSpec("prs"),), (spec,), n_runs=2, budget=5, sample_size=10)
    orig = benchmarks.FUNCTIONS["sphere"]
    benchmarks.FUNCTIONS["sphere"] = lambda x: np.full(np.shape(x)[:-1], np.nan)
    try:
        rep = run_experiment(cfg)
    finally:
        benchmarks.FUNCTIONS["sphere"] = orig
    assert rep.cells[("sphere-d1", "prs")].solutions == (math.inf, math.inf)


def test_config_validation():
    with pytest.raises(ConfigError, match="registered"):
        small_cfg(optimizers=(OptimizerSpec("nope"),))
    with pytest.raises(ConfigError):
        small_cfg(n_runs=0)
    with pytest.raises(ConfigError):
        small_cfg(metrics=("median",))
    with pytest.raises(ConfigError):
        small_cfg(optimizers=(OptimizerSpec("prs"), OptimizerSpec("prs")))
    with pytest.raises(ConfigError):
        small_cfg(optimizers=(OptimizerSpec("cbo", {"bogus": 1}),))
    assert small_cfg(budget=None).budget_for(3) == 3000


def test_run_config_error_names_the_cell():
    bad = OptimizerSpec("crs", {"pop_size": 12})  # too small in d = 2
    cfg = small_cfg(optimizers=(bad,))
    with pytest.raises(ConfigError, match="experiment aborted"):
        run_experiment(cfg)


# metric extensibility


def test_registering_a_metric_needs_no_engine_change():
    def median(cell, ctx):
        return {"median": float(np.median(cell.solutions))}

    register_metric(Metric("median_test_only", ("median",), median))
    try:
        rep = run_experiment(small_cfg(metrics=("mean_std", "median_test_only")))
        v = rep.values[("sphere-d2", "prs")]
        assert v["median_test_only"]["median"] == float(np.median(rep.cells[("sphere-d2", "prs")].solutions))
        assert "median" in render_console(rep)
    finally:
        del METRICS["median_test_only"]


# rendering


def test_csv_contract_and_round_trip():
    rep = run_experiment(small_cfg())
    text = render_csv(rep)
    rows = parse_csv(text)
    assert text.splitlines()[0] == "benchmark,dim,optimizer,metric,value"
    expected = []
    for b in rep.config.benchmarks:
        for o in rep.config.optimizers:
            for m in rep.config.metrics:
                for label in METRICS[m].labels:
                    expected.append((b.name, b.dim, o.id, label, rep.values[(b.id, o.id)][m][label]))
    assert rows == expected
    assert any(v is None for *_, v in rows)


def test_empty_metric_list_is_header_only():
    rep = run_experiment(small_cfg(metrics=()))
    assert render_csv(rep) == "benchmark,dim,optimizer,metric,value\n"
    lines = render_console(rep).splitlines()
    assert len(lines) == 2 and "prs" in lines[0]
    tex = render_latex(rep)
    assert "\\begin{tabular}" in tex and "sphere" not in tex


def test_single_cell_mean_equals_solution():
    cfg = ExperimentConfig((OptimizerSpec("prs"),), (BenchmarkSpec("sphere", 2),), metrics=("mean_std",), n_runs=1, budget=40, sample_size=10)
    rep = run_experiment(cfg)
    sol = rep.cells[("sphere-d2", "prs")].solutions[0]
    assert parse_csv(render_csv(rep))[0][-1] == sol


def test_latex_layout_and_precision():
    rep = run_experiment(small_cfg())
    tex = render_report(rep, "latex", digits=2)
    assert tex.startswith("\\begin{tabular}{llrr}") and tex.rstrip().endswith("\\end{tabular}")
    assert "langermann-d3 & success & -- & --" in tex
    mean = rep.values[("sphere-d2", "cbo")]["mean_std"]["mean"]
    assert f"{mean:.2g}" in tex


def test_console_layout():
    rep = run_experiment(small_cfg())
    text = render_report(rep)
    lines = text.splitlines()
    assert lines[0].split() == ["benchmark", "metric", "prs", "cbo"]
    assert len(lines) == 2 + 2 * 3  # header, rule, 2 benchmarks x 3 labels
    assert "NA" in text
    with pytest.raises(ValueError):
        render_report(rep, "html")


def test_generated_benchmark_cell():
    spec = BenchmarkSpec("generated", 2, (("seed", 3), ("n_minima", 4)))
    cfg = ExperimentConfig((OptimizerSpec("direct"),), (spec,), n_runs=2, budget=300, sample_size=500)
    rep = run_experiment(cfg)
    assert rep.contexts[spec.id].f_min == -1.0
    assert rep.values[(spec.id, "direct")]["success"]["success"] is not None
    assert parse_csv(render_csv(rep))[0][0] == "generated[seed=3,M=4,C2]"


def test_mean_std_with_failed_runs():
    assert mean_std([1.0, math.inf]) == (math.inf, math.inf)
