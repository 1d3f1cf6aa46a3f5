import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from globopt.core import Bounds, ConfigError, OptimizerSpec, make_rng, run
from globopt.decision import EvalHistory
from globopt.particles import Swarm
from globopt.plugins import (
    CommonNoiseConfig,
    FilterConfig,
    TrustRegionConfig,
    common_noise_config,
    filter_candidates,
    filter_config,
    gcn_increments,
    nelder_mead,
    quantile_filter,
    smd_perturb,
    trust_region_config,
    trust_region_refine,
)

PARTICLE_IDS = ["pso", "cbo", "langevin", "sbs", "msgd"]


# configuration


def test_config_validation():
    with pytest.raises(ConfigError):
        TrustRegionConfig(radius0=0.7)
    with pytest.raises(ConfigError):
        TrustRegionConfig(local_budget=3).budget_for(2)
    assert TrustRegionConfig(local_budget=4).budget_for(2) == 4
    with pytest.raises(ConfigError):
        CommonNoiseConfig("xyz", 0.1)
    with pytest.raises(ConfigError):
        CommonNoiseConfig("gcn", 1.5)
    with pytest.raises(ConfigError):
        FilterConfig(q=1.0)
    with pytest.raises(ConfigError):
        FilterConfig(cadence=0)


def test_config_from_mappings():
    assert common_noise_config({"scheme": "smd", "eps": 0.2}) == CommonNoiseConfig("smd", 0.2)
    assert filter_config({"cadence": 3, "q": 0.5, "window": 2}) == FilterConfig(3, 0.5, 2)
    assert trust_region_config(None) is None
    with pytest.raises(ConfigError):
        filter_config({"cadense": 3})


# trust region


def history_with(points, values):
    h = EvalHistory(len(points[0]))
    for p, v in zip(points, values):
        h.append(np.asarray(p, float), float(v))
    return h


def test_refine_keeps_stationary_incumbent():
    f = lambda x: float(np.sum((x - 0.25) ** 2))
    h = history_with([[0.25, 0.25], [0.9, -0.3]], [0.0, f(np.array([0.9, -0.3]))])
    x, fx, used = trust_region_refine(h, TrustRegionConfig(local_budget=40), f, Bounds.cube(-1, 1, 2))
    assert np.array_equal(x, [0.25, 0.25]) and fx == 0.0
    assert used == 40 and len(h) == 42


def test_refine_improves_offset_incumbent():
    f = lambda x: float(np.sum((x - 0.3) ** 2))
    x0 = np.array([0.2, 0.35])
    h = history_with([x0], [f(x0)])
    x, fx, used = trust_region_refine(h, TrustRegionConfig(local_budget=200), f, Bounds.cube(-1, 1, 2))
    assert fx < f(x0) and fx < 1e-8
    assert np.all(np.abs(x - x0) <= 0.1 * 2 + 1e-12)  # inside the trust region


def test_refine_minimal_budget_is_the_simplex():
    # the incumbent's value is known, so the initial simplex costs d evaluations
    # and the remaining two go to the first reflection and its follow-up
    calls = []

    def f(x):
        calls.append(x.copy())
        return float(np.sum(x**2))

    d = 3
    x0 = np.full(d, 0.5)
    h = history_with([x0], [f(x0)])
    calls.clear()
    x, fx, used = trust_region_refine(h, TrustRegionConfig(local_budget=d + 2), f, Bounds.cube(-1, 1, d))
    assert used == len(calls) == d + 2
    assert fx == min([float(np.sum(x0**2))] + [float(np.sum(c**2)) for c in calls])


def test_nelder_mead_initial_simplex_only():
    calls = []

    def f(x):
        calls.append(1)
        return float(np.sum(x**2))

    x, fx, used = nelder_mead(f, np.array([0.5, 0.5]), None, -np.ones(2), np.ones(2), np.full(2, 0.1), 3)
    assert used == 3 == len(calls)
    assert fx == min(0.5, 0.6**2 + 0.25)


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(6, 60))
def test_refine_never_worse(seed, d, budget):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1, 1, d)
    f = lambda x: float(np.sum(np.abs(x - c)) + np.sin(5 * x).sum())
    x0 = rng.uniform(-1, 1, d)
    h = history_with([x0], [f(x0)])
    x, fx, used = trust_region_refine(h, TrustRegionConfig(local_budget=max(budget, d + 2)), f, Bounds.cube(-1, 1, d))
    assert fx <= f(x0) and fx == pytest.approx(f(x))
    assert used == len(h) - 1


@pytest.mark.parametrize("name", ["adalipo", "ecp"])
def test_trust_region_composes_with_every_decision_optimizer(name):
    b = Bounds.cube(-2, 2, 2)
    f = lambda x: float(np.sum((x - 0.4) ** 2))
    res = run(OptimizerSpec(name, {"trust_region": {"trigger": 0.05, "window": 10, "local_budget": 30}}), f, b, 300, seed=0)
    plain = run(name, f, b, 300, seed=0)
    assert res.n_evaluations == 300 and res.best_value < plain.best_value


# SMD


def test_smd_zero_is_identity():
    m, v = np.array([1.0, 2.0]), np.array([0.5, 0.1])
    rng = make_rng(0)
    state = rng.bit_generator.state
    m2, v2 = smd_perturb(m, v, CommonNoiseConfig("smd", 0.0), rng)
    assert m2 is m and v2 is v and rng.bit_generator.state == state


def test_smd_shared_by_all_particles():
    """CBO drift sees one perturbed mean: drift + lambda * X is the same row for every particle."""
    from globopt.particles import PopulationStats, cbo_dynamics

    X = make_rng(1).uniform(-1, 1, (6, 2))
    m, v = X.mean(axis=0), X.var(axis=0)
    m2, v2 = smd_perturb(m, v, CommonNoiseConfig("smd", 0.3), make_rng(2))
    s = Swarm(X, values=np.sum(X**2, axis=1), stats=PopulationStats(m2, v2, m, v))
    seen = cbo_dynamics(lam=1.0).drift(s, make_rng(0)) + X
    assert np.allclose(seen, m2, rtol=0, atol=1e-15)


def test_smd_variance_unbiased():
    n = 1_000_000
    v = np.ones(n)
    _, v2 = smd_perturb(np.zeros(n), v, CommonNoiseConfig("smd", 0.5), make_rng(3))
    assert np.all(v2 > 0)
    assert abs(v2.mean() - 1.0) < 0.01


# GCN


def test_gcn_zero_is_independent_base_draw():
    a = gcn_increments(5, 3, CommonNoiseConfig("gcn", 0.0), make_rng(4))
    b = make_rng(4).standard_normal((5, 3))
    assert np.array_equal(a, b)


def test_gcn_one_is_fully_common():
    xi = gcn_increments(5, 3, CommonNoiseConfig("gcn", 1.0), make_rng(4))
    assert np.ptp(xi, axis=0).max() == 0.0


@pytest.mark.parametrize("eps", [0.0, 0.3, 0.6, 0.9, 1.0])
def test_gcn_cross_covariance_and_marginals(eps):
    rng = make_rng(5)
    cfg = CommonNoiseConfig("gcn", eps)
    draws = np.array([gcn_increments(2, 1, cfg, rng)[:, 0] for _ in range(100_000)])
    cov = np.mean(draws[:, 0] * draws[:, 1]) - draws[:, 0].mean() * draws[:, 1].mean()
    assert abs(cov - eps**2) < 0.02
    for i in range(2):
        assert abs(draws[:, i].mean()) < 0.02
        assert abs(draws[:, i].var() - 1.0) < 0.02


# zero-scale neutrality and family universality


@pytest.mark.parametrize("name", PARTICLE_IDS)
@pytest.mark.parametrize("scheme", ["smd", "gcn"])
def test_zero_scale_is_bitwise_neutral(name, scheme):
    b = Bounds.cube(-3, 3, 2)
    f = lambda x: float(np.sum(x**2 - np.cos(3 * x)))
    base = run(name, f, b, 300, seed=9)
    wrapped = run(OptimizerSpec(name, {"common_noise": {"scheme": scheme, "eps": 0.0}}), f, b, 300, seed=9)
    assert wrapped == base


@pytest.mark.parametrize("name", PARTICLE_IDS)
@pytest.mark.parametrize(
    "plugins",
    [
        {"common_noise": {"scheme": "smd", "eps": 0.3}},
        {"common_noise": {"scheme": "gcn", "eps": 0.5}},
        {"filter": {"cadence": 2, "q": 0.3, "window": 2}},
        {"common_noise": {"scheme": "gcn", "eps": 0.5}, "filter": {"cadence": 3, "q": 0.4, "window": 1}},
    ],
)
def test_every_plugin_composes_with_every_particle_optimizer(name, plugins):
    b = Bounds.cube(-3, 3, 2)
    res = run(OptimizerSpec(name, plugins), lambda x: float(x @ x), b, 250, seed=1)
    assert res.n_evaluations == 250 and np.isfinite(res.best_value)


def test_plugins_live_in_the_family_base():
    from globopt import particles

    for cls in (particles.PSO, particles.CBO, particles.Langevin, particles.SBS, particles.MSGD):
        assert "_optimize" not in cls.__dict__
        assert {"common_noise", "filter"} <= set(cls.hyperparameter_defaults())


# quantile filter


def test_filter_leaves_fast_swarm_alone():
    values = np.array([5.0, 1.0, 3.0, 9.0])
    disp = np.array([10.0, 11.0, 12.0, 13.0])
    # the slowest half is {0, 1}; the worst half is {0, 3}: only 0 overlaps
    assert filter_candidates(values, disp, 0.5).tolist() == [0]
    assert filter_candidates(values[[1, 2, 3]], disp[[1, 2, 3]], 0.3).size == 0


def test_filter_hand_example():
    values = np.array([9.0, 1.0, 9.0, 1.0])
    disp = np.array([0.0, 0.0, 1.0, 1.0])
    idx = filter_candidates(values, disp, 0.5)
    # brute force: sort and take halves
    slow = set(sorted(range(4), key=lambda i: disp[i])[:2])
    poor = set(sorted(range(4), key=lambda i: -values[i])[:2])
    assert idx.tolist() == sorted(slow & poor) == [0]
    s = Swarm(np.zeros((4, 2)))
    out, got = quantile_filter(s, FilterConfig(1, 0.5, 1), values, disp, Bounds.cube(-1, 1, 2), make_rng(0))
    assert got.tolist() == [0] and out.n == 4
    assert np.array_equal(out.positions[1:], s.positions[1:]) and not np.array_equal(out.positions[0], s.positions[0])


def test_filter_tiny_q_and_single_particle_are_noops():
    assert filter_candidates(np.arange(10.0), np.arange(10.0), 0.05).size == 0
    assert filter_candidates(np.array([1.0]), np.array([0.0]), 0.9).size == 0


@given(st.integers(0, 2**31), st.integers(2, 30), st.floats(0.01, 0.99))
def test_filter_conserves_size_and_incumbent(seed, n, q):
    rng = np.random.default_rng(seed)
    values = rng.integers(0, 4, n).astype(float)
    disp = rng.integers(0, 3, n).astype(float)
    X = rng.uniform(-1, 1, (n, 2))
    out, idx = quantile_filter(Swarm(X), FilterConfig(1, q, 1), values, disp, Bounds.cube(-1, 1, 2), make_rng(seed))
    best = int(np.argmin(values))
    assert out.n == n and best not in idx.tolist()
    assert np.array_equal(out.positions[best], X[best])
    k = int(np.floor(q * n))
    assert idx.size <= k
