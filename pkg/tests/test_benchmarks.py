import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from globopt.benchmarks import (
    BenchmarkSpec,
    analytic_eval,
    benchmark_ids,
    default_bounds,
    generate_random_function,
    gradient_fd,
    known_minimum,
    load_registry,
    make_benchmark,
)
from globopt.benchmarks.functions import FUNCTIONS
from globopt.core import Bounds, ConfigError, make_rng, run, uniform_sample

ALL = benchmark_ids()


def test_registry_lists_the_eighteen_functions():
    assert len(ALL) == 18 and set(ALL) == set(FUNCTIONS)
    for name, entry in load_registry().items():
        assert {"bounds", "minimum"} <= set(entry)


def test_unknown_benchmark_is_config_error():
    with pytest.raises(ConfigError):
        analytic_eval("sphrere", np.zeros(2))
    with pytest.raises(ConfigError):
        make_benchmark("nope", 2)


@pytest.mark.parametrize("name", ["sphere", "rastrigin", "griewank", "ackley"])
@pytest.mark.parametrize("d", [1, 3, 7])
def test_zero_at_origin(name, d):
    assert analytic_eval(name, np.zeros(d)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("d", [1, 2, 6])
def test_rosenbrock_at_ones(d):
    assert analytic_eval("rosenbrock", np.ones(d)) == 0.0


def test_ackley_origin_cancels_exactly_enough():
    assert abs(analytic_eval("ackley", np.zeros(4))) < 1e-14


@pytest.mark.parametrize("name", ALL)
@pytest.mark.parametrize("d", [1, 2, 5, 10])
def test_known_minimum_consistency(name, d):
    km = known_minimum(name, d)
    if km is None:
        assert name in ("langermann",) and d > 2
        return
    value, points = km
    b = default_bounds(name, d)
    for p in points:
        assert b.contains(p)
        assert abs(analytic_eval(name, p) - value) <= 1e-9


@pytest.mark.parametrize("name", ALL)
def test_vectorized_matches_pointwise(name):
    b = default_bounds(name, 3)
    X = uniform_sample(b, make_rng(1), 20)
    vec = FUNCTIONS[name](X)
    assert vec.shape == (20,)
    assert np.allclose(vec, [analytic_eval(name, x) for x in X], rtol=1e-13, atol=1e-13)


# oracle-backed minima (oracle values also frozen, so a broken oracle is caught)


def test_styblinski_tang_minimum():
    x, v = oracles.styblinski_tang_1d()
    assert x == pytest.approx(-2.903534027771177, abs=1e-10)
    assert v == pytest.approx(-39.16616570377141, abs=1e-10)
    value, (p,) = known_minimum("styblinski_tang", 2)
    assert value == pytest.approx(2 * v, abs=1e-9)
    assert value == pytest.approx(-78.332, abs=1e-3)
    assert np.allclose(p, x, atol=1e-8)


def test_schwefel_minimum():
    x, v = oracles.schwefel_1d()
    assert x == pytest.approx(420.96874635998205, abs=1e-7)
    assert v == pytest.approx(1.2727566266076574e-05, abs=1e-12)
    value, (p,) = known_minimum("schwefel", 1)
    assert value == pytest.approx(v, abs=1e-12) and p[0] == pytest.approx(x, abs=1e-7)
    assert value < 1e-4  # "zero" up to the truncated offset


@pytest.mark.parametrize("i", [1, 2, 5, 13])
def test_michalewicz_axis_minima(i):
    x, v = oracles.michalewicz_axis(i)
    entry = load_registry()["michalewicz"]["minimum"]
    assert entry["values"][i - 1] == pytest.approx(v, abs=1e-10)
    assert entry["coordinates"][i - 1] == pytest.approx(x, abs=1e-7)


@pytest.mark.parametrize("d, published", [(2, -1.8013), (5, -4.687658), (10, -9.66015)])
def test_michalewicz_published_values(d, published):
    assert known_minimum("michalewicz", d)[0] == pytest.approx(published, abs=1e-4)


@pytest.mark.parametrize("d", [1, 2])
def test_langermann_minimum(d):
    pt, v = oracles.langermann_min(d)
    value, (p,) = known_minimum("langermann", d)
    assert value == pytest.approx(v, abs=1e-9)
    assert np.allclose(p, pt, atol=1e-6)


def test_langermann_d2_literature_value():
    assert known_minimum("langermann", 2)[0] == pytest.approx(-4.15581, abs=1e-5)


def test_trid_and_dixonprice_closed_forms():
    for d in (2, 6):
        value, (p,) = known_minimum("trid", d)
        assert value == -d * (d + 4) * (d - 1) / 6
        assert analytic_eval("trid", p) == pytest.approx(value, abs=1e-9)
    assert known_minimum("trid", 6)[0] == -50


def test_deb_minimum():
    assert analytic_eval("deb", np.full(3, 0.1)) == pytest.approx(-1.0, abs=1e-12)
    assert default_bounds("deb", 3) == Bounds.cube(0.0, 1.0, 3)


# finite differences


def test_fd_sphere_example():
    b = make_benchmark("sphere", 2)
    g = gradient_fd(b, np.array([1.0, 2.0]))
    assert np.allclose(g, [2.0, 4.0], atol=1e-8)
    assert b.eval_count == 4


def test_fd_constant_is_zero():
    from globopt.benchmarks import Benchmark

    b = Benchmark("const", 3, lambda x: 7.0 + 0.0 * np.sum(x, axis=-1), Bounds.cube(-1, 1, 3))
    assert np.array_equal(gradient_fd(b, np.array([0.1, -0.2, 0.3])), np.zeros(3))
    assert b.eval_count == 6


def test_fd_rosenbrock_origin():
    # analytic: d/dx1 = -2(1 - x1) - 400 x1 (x2 - x1^2) = -2 at the origin; d/dx2 = 200 (x2 - x1^2) = 0
    g = gradient_fd(make_benchmark("rosenbrock", 2), np.zeros(2))
    assert np.allclose(g, [-2.0, 0.0], atol=1e-6)


def test_fd_one_sided_at_boundary_costs_the_same():
    b = make_benchmark("sphere", 2)
    x = np.array([5.12, -5.12])
    g = gradient_fd(b, x)
    assert b.eval_count == 4
    assert np.allclose(g, [10.24, -10.24], rtol=1e-5)


SMOOTH = [n for n in ALL if n not in ("sumpow", "schwefel", "ackley")]


@pytest.mark.parametrize("name", SMOOTH)
def test_fd_richardson_agreement(name):
    d = 3
    bounds = default_bounds(name, d)
    lo, hi = bounds.lower, bounds.upper
    inner = Bounds(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo))
    rng = make_rng(7)
    b = make_benchmark(name, d)
    for x in uniform_sample(inner, rng, 10):
        h = np.cbrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(x))
        g1 = gradient_fd(b, x)
        g2 = gradient_fd(b, x, h / 4)
        scale = max(np.linalg.norm(g2), 1.0)
        assert np.linalg.norm(g1 - g2) <= 1e-4 * scale


def test_counter_exact_with_gradients():
    b = make_benchmark("rastrigin", 4)
    for _ in range(5):
        b(np.zeros(4))
    b.gradient(np.full(4, 0.3))
    assert b.eval_count == 5 + 8
    b.raw(np.zeros((10, 4)))
    assert b.eval_count == 13
    b.reset_count()
    assert b.eval_count == 0


def test_eval_rejects_wrong_shape():
    with pytest.raises(ValueError):
        make_benchmark("sphere", 3)(np.zeros(2))


@pytest.mark.parametrize("opt", ["adalipo", "ecp", "pso", "cbo", "langevin", "sbs", "msgd", "direct", "crs", "cmaes", "mlsl", "gd", "prs"])
def test_counter_matches_run_result(opt):
    b = make_benchmark("levy", 2)
    res = run(opt, b, b.bounds, 120, seed=3)
    assert b.eval_count == res.n_evaluations == 120


def test_counter_is_thread_safe():
    b = make_benchmark("sphere", 2)
    x = np.zeros(2)

    def work():
        for _ in range(2000):
            b(x)

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert b.eval_count == 16000


def test_benchmark_pickles():
    import pickle

    b = make_benchmark("griewank", 2)
    b(np.ones(2))
    c = pickle.loads(pickle.dumps(b))
    assert c.eval_count == 1 and c(np.ones(2)) == b.raw(np.ones(2))


# generated functions


@settings(max_examples=40)
@given(
    st.integers(0, 10**6),
    st.integers(1, 5),
    st.integers(2, 8),
    st.floats(0.01, 1.0),
    st.sampled_from(["C2", "C0"]),
)
def test_generated_invariants(seed, d, M, gap, smooth):
    g = generate_random_function(seed, d, M, gap, smooth)
    locals_ = g.local_minima
    assert len(locals_) == M - 1
    for _, v, _ in locals_:
        assert g.global_min_value <= v - gap + 1e-15
    for i in range(M):
        for j in range(i):
            assert np.linalg.norm(g.centers[i] - g.centers[j]) > g.radii[i] + g.radii[j]
    assert g(g.global_min_point) == g.global_min_value
    for c, v, _ in locals_:
        assert g(c) == v
    assert np.all(np.abs(g.centers) <= 1.0)


def test_same_seed_same_function():
    a = generate_random_function(11, 3, 6, 0.2)
    b = generate_random_function(11, 3, 6, 0.2)
    X = uniform_sample(a.bounds, make_rng(0), 1000)
    assert np.array_equal(a(X), b(X)) and a == b
    assert generate_random_function(12, 3, 6, 0.2) != a


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("smooth", ["C2", "C0"])
def test_generated_dominance_million_probes(d, smooth):
    g = generate_random_function(100 + d, d, 6, 0.1, smooth)
    rng = make_rng(d)
    for _ in range(10):
        X = uniform_sample(g.bounds, rng, 100_000)
        assert g(X).min() >= g.global_min_value - 1e-9


def test_generated_d1_grid_localizes_minimum():
    g = generate_random_function(5, 1, 2, 0.1)
    xs = np.linspace(-1, 1, 100_000)
    ys = g(xs[:, None])
    assert ys.min() >= g.global_min_value - 1e-9
    rho = g.radii[g.global_index]
    assert abs(xs[np.argmin(ys)] - g.global_min_point[0]) < rho


def test_c2_well_matches_base_smoothly():
    g = generate_random_function(3, 2, 3, 0.1, "C2")
    c, rho = g.centers[0], g.radii[0]
    u = np.array([0.6, 0.8])

    def along(t):
        return g(c + t * u)

    def base(t):
        return g.base(c + t * u)

    h = 1e-4
    for f in (along,):
        # value, first and second derivative agree with the paraboloid at the rim
        inner = rho - 1e-7
        assert f(inner) == pytest.approx(base(inner), abs=1e-10)
        d1 = (f(inner) - f(inner - h)) / h
        b1 = (base(inner) - base(inner - h)) / h
        assert d1 == pytest.approx(b1, abs=1e-3)
        d2 = (f(inner) - 2 * f(inner - h) + f(inner - 2 * h)) / h**2
        b2 = (base(inner) - 2 * base(inner - h) + base(inner - 2 * h)) / h**2
        assert d2 == pytest.approx(b2, abs=5e-2)


def test_c0_well_is_continuous_but_kinked():
    g = generate_random_function(3, 2, 3, 0.1, "C0")
    c, rho = g.centers[0], g.radii[0]
    u = np.array([1.0, 0.0])
    rim_in, rim_out = g(c + (rho - 1e-9) * u), g(c + (rho + 1e-9) * u)
    assert rim_in == pytest.approx(rim_out, abs=1e-7)


@pytest.mark.parametrize("kwargs", [dict(M=1), dict(d=0), dict(gap=0.0), dict(gap=-1.0), dict(smoothness="C1")])
def test_generator_rejects_bad_config(kwargs):
    args = dict(seed=0, d=2, M=3, gap=0.1, smoothness="C2")
    args.update(kwargs)
    with pytest.raises(ConfigError):
        generate_random_function(**args)


def test_generator_shrinks_radii_for_crowded_wells():
    g = generate_random_function(0, 1, 40, 0.1)
    assert g.radii.max() < 0.5 * (1 / 40)


def test_generated_benchmark_spec():
    spec = BenchmarkSpec("generated", 2, (("seed", 4), ("n_minima", 3)))
    b = spec.build()
    assert b.known_min_value == -1.0 and b.bounds == Bounds.cube(-1, 1, 2)
    assert spec.id == "generated[seed=4,M=3,C2]-d2"
    with pytest.raises(ConfigError):
        BenchmarkSpec("generated", 2, (("seeed", 4),)).build()
