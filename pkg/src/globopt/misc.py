"""Classical algorithms outside the two family templates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Array, Bounds, ConfigError, Optimizer, register_optimizer, uniform_sample
from .plugins import nelder_mead

# ----------------------------------------------------------------------------
# DIRECT


@dataclass
class HyperRect:
    """Axis-aligned box in unit-cube coordinates, sampled at its center."""

    center: Array
    half_widths: Array
    value: float

    @property
    def size(self) -> float:
        return float(np.linalg.norm(self.half_widths))

    @property
    def volume(self) -> float:
        return float(np.prod(2.0 * self.half_widths))


def direct_potentially_optimal(rects: list[HyperRect], eps: float = 1e-4, tol: float = 1e-12) -> list[int]:
    """Indices of the potentially optimal rectangles.

    Rect ``j`` qualifies when some ``K >= 0`` makes ``f_j - K s_j`` minimal
    over all rects and ``f_j - K s_j <= f_min - eps |f_min|``. Only the
    lowest value of each size class can qualify; all rects tied at that value
    are returned. Within a size class the comparison is exact (``K s`` rounds
    identically there); ``tol`` only absorbs rounding on collinear hull
    points across classes.
    """
    if not rects:
        return []
    sizes = np.array([r.size for r in rects])
    values = np.array([r.value for r in rects])
    classes = np.unique(sizes)
    reps = np.array([values[sizes == s].min() for s in classes])
    f_min = float(values.min())
    goal = f_min - eps * abs(f_min)
    scale = tol * max(1.0, float(np.max(np.abs(values[np.isfinite(values)])) if np.isfinite(values).any() else 1.0))
    chosen: list[int] = []
    for j, (s_j, f_j) in enumerate(zip(classes, reps)):
        if not math.isfinite(f_j):
            continue
        smaller, larger = slice(0, j), slice(j + 1, None)
        lo = 0.0
        if j > 0:
            lo = max(lo, float(np.max((f_j - reps[smaller]) / (s_j - classes[smaller]))))
        hi = math.inf
        if j + 1 < len(classes):
            hi = float(np.min((reps[larger] - f_j) / (classes[larger] - s_j)))
        if lo > hi + scale / (s_j if s_j > 0 else 1.0):
            continue
        if math.isfinite(hi) and f_j - hi * s_j > goal + scale:
            continue
        chosen.extend(np.flatnonzero((sizes == s_j) & (values == f_j)).tolist())
    return sorted(chosen)


def direct_trisect(rect: HyperRect, objective) -> tuple[HyperRect, HyperRect, HyperRect]:
    """Split along the longest axis (lowest index on ties) into three equal thirds.

    Two new evaluations at ``center -+ side / 3``; the middle child keeps the
    parent's center and value. Returns ``(left, middle, right)``.
    """
    axis = int(np.argmax(rect.half_widths))
    half = rect.half_widths.copy()
    half[axis] /= 3.0
    offset = np.zeros_like(rect.center)
    offset[axis] = 2.0 * half[axis]
    left_c, right_c = rect.center - offset, rect.center + offset
    f_left = objective(left_c)
    f_right = objective(right_c)
    return (
        HyperRect(left_c, half.copy(), float(f_left)),
        HyperRect(rect.center.copy(), half.copy(), rect.value),
        HyperRect(right_c, half.copy(), float(f_right)),
    )


class DirectSearch:
    """Rectangle bookkeeping for DIRECT on the unit cube."""

    def __init__(self, objective_unit, dim: int, eps: float = 1e-4):
        self.objective = objective_unit
        self.eps = eps
        c = np.full(dim, 0.5)
        self.rects = [HyperRect(c, np.full(dim, 0.5), float(objective_unit(c)))]

    def select(self) -> list[int]:
        return direct_potentially_optimal(self.rects, self.eps)

    def iterate(self) -> list[int]:
        selected = self.select()
        for i in selected:
            left, mid, right = direct_trisect(self.rects[i], self.objective)
            self.rects[i] = mid
            self.rects.append(left)
            self.rects.append(right)
        return selected


@register_optimizer
class Direct(Optimizer):
    name = "direct"
    defaults = {"eps": 1e-4}

    def _optimize(self, ev, rng):
        lo, ext = ev.bounds.lower, ev.bounds.extent
        search = DirectSearch(lambda u: ev(lo + u * ext), ev.bounds.dim, float(self.params["eps"]))
        self.search = search
        while True:
            search.iterate()


# ----------------------------------------------------------------------------
# CRS


def crs_trial(points: Array, rng: np.random.Generator, bounds: Bounds | None = None, chosen: Array | None = None) -> Array:
    """Reflect a random member through the centroid of ``d`` others: ``2 g - x``."""
    n, d = points.shape
    if chosen is None:
        chosen = rng.choice(n, size=d + 1, replace=False)
    g = points[chosen[:d]].mean(axis=0)
    trial = 2.0 * g - points[chosen[d]]
    return trial if bounds is None else bounds.clip(trial)


@register_optimizer
class CRS(Optimizer):
    name = "crs"
    defaults = {"pop_size": None}

    def _optimize(self, ev, rng):
        d = ev.bounds.dim
        n = self.params["pop_size"] or 10 * d
        if n < max(d + 2, 10 * d):
            raise ConfigError(f"pop_size must be >= max(d + 2, 10 d) = {max(d + 2, 10 * d)}")
        pop = uniform_sample(ev.bounds, rng, int(n))
        self.population = pop
        vals = np.full(len(pop), np.inf)
        self.population_values = vals
        for i in range(len(pop)):
            vals[i] = ev(pop[i])
        while True:
            trial = crs_trial(pop, rng, ev.bounds)
            f = ev(trial)
            worst = int(np.argmax(vals))
            if f < vals[worst]:
                pop[worst] = trial
                vals[worst] = f


# ----------------------------------------------------------------------------
# CMA-ES


@dataclass
class CmaParameters:
    dim: int
    lam: int
    mu: int = field(init=False)
    weights: Array = field(init=False)
    mueff: float = field(init=False)
    cc: float = field(init=False)
    cs: float = field(init=False)
    c1: float = field(init=False)
    cmu: float = field(init=False)
    damps: float = field(init=False)
    chi_n: float = field(init=False)

    def __post_init__(self):
        n, lam = self.dim, self.lam
        if lam < 2:
            raise ConfigError("CMA-ES needs lambda >= 2")
        self.mu = lam // 2
        w = math.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / float(np.sum(self.weights**2))
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))


@dataclass
class CmaState:
    mean: Array
    sigma: float
    C: Array
    p_sigma: Array
    p_c: Array
    generation: int = 0

    @classmethod
    def initial(cls, mean: Array, sigma: float) -> CmaState:
        d = len(mean)
        return cls(np.array(mean, dtype=float), float(sigma), np.eye(d), np.zeros(d), np.zeros(d))


def repair_covariance(C: Array, floor: float = 1e-14) -> tuple[Array, Array, Array]:
    """Symmetrize and floor eigenvalues at ``floor * max eigenvalue``.

    Returns ``(C, eigenvalues, eigenvectors)``.
    """
    C = 0.5 * (C + C.T)
    evals, B = np.linalg.eigh(C)
    top = max(float(evals.max()), 0.0)
    if top <= 0 or not np.all(np.isfinite(evals)):
        d = len(C)
        return np.eye(d), np.ones(d), np.eye(d)
    low = floor * top
    if evals.min() < low:
        evals = np.maximum(evals, low)
        C = (B * evals) @ B.T
        C = 0.5 * (C + C.T)
    return C, evals, B


def cmaes_update(state: CmaState, params: CmaParameters, Y: Array, fitness: Array) -> CmaState:
    """Apply one generation given offspring steps ``Y`` (rows, ``(x - m) / sigma``) and their values."""
    n = params.dim
    order = np.argsort(fitness, kind="stable")
    sel = Y[order[: params.mu]]
    y_w = params.weights @ sel
    C, evals, B = repair_covariance(state.C)
    inv_sqrt = (B / np.sqrt(evals)) @ B.T
    cs, cc = params.cs, params.cc
    p_sigma = (1 - cs) * state.p_sigma + math.sqrt(cs * (2 - cs) * params.mueff) * (inv_sqrt @ y_w)
    g = state.generation + 1
    norm_ps = float(np.linalg.norm(p_sigma))
    hsig = norm_ps / math.sqrt(1 - (1 - cs) ** (2 * g)) < (1.4 + 2 / (n + 1)) * params.chi_n
    p_c = (1 - cc) * state.p_c + hsig * math.sqrt(cc * (2 - cc) * params.mueff) * y_w
    rank_mu = (sel.T * params.weights) @ sel
    C = (
        (1 - params.c1 - params.cmu) * C
        + params.c1 * (np.outer(p_c, p_c) + (1 - hsig) * cc * (2 - cc) * C)
        + params.cmu * rank_mu
    )
    C, _, _ = repair_covariance(C)
    sigma = state.sigma * math.exp((cs / params.damps) * (norm_ps / params.chi_n - 1))
    mean = state.mean + state.sigma * y_w
    return CmaState(mean, sigma, C, p_sigma, p_c, g)


def cmaes_step(state: CmaState, lam: int, objective, rng: np.random.Generator, bounds: Bounds | None = None,
               params: CmaParameters | None = None) -> CmaState:
    """Sample ``lam`` offspring, evaluate, update. Offspring are clipped into ``bounds``."""
    params = params or CmaParameters(len(state.mean), lam)
    _, evals, B = repair_covariance(state.C)
    Z = rng.standard_normal((lam, params.dim))
    Y = (Z * np.sqrt(evals)) @ B.T
    X = state.mean + state.sigma * Y
    if bounds is not None:
        X = bounds.clip(X)
        Y = (X - state.mean) / state.sigma
    fitness = np.array([objective(x) for x in X])
    return cmaes_update(state, params, Y, fitness)


def default_lambda(dim: int) -> int:
    return 4 + int(3 * math.log(dim))


def cmaes_stagnated(state: CmaState, recent_best: list[float], tolx: float = 1e-8, tolfun: float = 1e-8,
                    max_condition: float = 1e14) -> bool:
    """Restart test: tiny steps, flat recent best values, or a degenerate covariance."""
    _, evals, _ = repair_covariance(state.C)
    if state.sigma * math.sqrt(float(evals.max())) < tolx:
        return True
    if float(evals.max()) > max_condition * float(evals.min()):
        return True
    return len(recent_best) > 0 and max(recent_best) - min(recent_best) < tolfun * max(1.0, abs(min(recent_best)))


@register_optimizer
class CMAES(Optimizer):
    """CMA-ES in unit-cube coordinates.

    With ``restart=True`` a stagnated descent (see :func:`cmaes_stagnated`)
    is restarted from a fresh uniform mean with the same population size and
    ``sigma0``; ``restart=False`` runs a single descent until the budget is
    spent.
    """

    name = "cmaes"
    defaults = {"lambda": None, "sigma0": 0.3, "restart": True}

    def _optimize(self, ev, rng):
        d = ev.bounds.dim
        restart = bool(self.params["restart"])
        lam = int(self.params["lambda"] or default_lambda(d))
        # step sizes live in the unit cube; map back at evaluation time
        unit = Bounds(np.zeros(d), np.ones(d))
        lo, ext = ev.bounds.lower, ev.bounds.extent
        self.restarts = 0
        while True:
            params = CmaParameters(d, lam)
            state = CmaState.initial(uniform_sample(unit, rng), float(self.params["sigma0"]))
            window = 10 + math.ceil(30 * d / lam)
            recent: list[float] = []
            while True:
                gen: list[float] = []

                def f(u):
                    value = ev(lo + u * ext)
                    gen.append(value)
                    return value

                state = cmaes_step(state, lam, f, rng, unit, params)
                self.state = state
                recent = (recent + [min(gen)])[-window:]
                if restart and cmaes_stagnated(state, recent if len(recent) == window else []):
                    break
            self.restarts += 1


# ----------------------------------------------------------------------------
# MLSL


def mlsl_critical_radius(n_samples: int, dim: int, volume: float, zeta: float = 2.0) -> float:
    """Single-linkage radius after ``n_samples`` uniform draws; infinite for ``n_samples <= 1``."""
    kn = int(n_samples)
    if kn <= 1:
        return math.inf
    inner = math.gamma(1 + dim / 2) * volume * zeta * math.log(kn) / kn
    return inner ** (1.0 / dim) / math.sqrt(math.pi)


def mlsl_starts(points: Array, values: Array, radius: float, candidates=None) -> list[int]:
    """Candidates with no strictly better sample within ``radius``."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    idx = np.arange(len(values)) if candidates is None else np.asarray(list(candidates), dtype=int)
    out: list[int] = []
    chunk = max(1, (1 << 20) // max(1, len(values)))
    for lo in range(0, idx.size, chunk):
        c = idx[lo : lo + chunk]
        dist = np.sqrt(((points[c][:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
        blocked = ((values[None, :] < values[c][:, None]) & (dist < radius)).any(axis=1)
        out.extend(int(i) for i in c[~blocked])
    return out


def mlsl_step(points: Array, values: Array, k: int, batch: int, bounds: Bounds, zeta: float = 2.0,
              started: set[int] | None = None) -> list[int]:
    """New local-search starts after batch ``k`` (``k * batch`` samples so far)."""
    r = mlsl_critical_radius(k * batch, bounds.dim, bounds.volume, zeta)
    started = started or set()
    fresh = [i for i in range(len(values)) if i not in started]
    starts = mlsl_starts(points, values, r, fresh)
    return sorted(starts, key=lambda i: (values[i], i))


@register_optimizer
class MLSL(Optimizer):
    name = "mlsl"
    defaults = {"batch": None, "zeta": 2.0, "local_budget": None}

    def _optimize(self, ev, rng):
        b = ev.bounds
        d = b.dim
        batch = int(self.params["batch"] or 10 * d)
        local_budget = int(self.params["local_budget"] or 20 * (d + 1))
        zeta = float(self.params["zeta"])
        if batch < 1 or zeta <= 0:
            raise ConfigError("MLSL needs batch >= 1 and zeta > 0")
        tol = 1e-3 * b.diameter
        points = np.empty((0, d))
        values = np.empty(0)
        # distance from each sample to its nearest strictly better sample
        nearest_better = np.empty(0)
        started = np.empty(0, dtype=bool)
        self.minima: list[tuple[Array, float]] = []
        k = 0
        while True:
            k += 1
            new = uniform_sample(b, rng, batch)
            new_vals = np.empty(batch)
            for i, x in enumerate(new):
                new_vals[i] = ev(x)
            if values.size:
                dist = np.sqrt(((points[:, None, :] - new[None, :, :]) ** 2).sum(axis=-1))
                closer = np.where(new_vals[None, :] < values[:, None], dist, np.inf)
                nearest_better = np.minimum(nearest_better, closer.min(axis=1))
            points = np.vstack([points, new])
            values = np.concatenate([values, new_vals])
            dist = np.sqrt(((new[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
            closer = np.where(values[None, :] < new_vals[:, None], dist, np.inf)
            nearest_better = np.concatenate([nearest_better, closer.min(axis=1)])
            started = np.concatenate([started, np.zeros(batch, dtype=bool)])

            r = mlsl_critical_radius(k * batch, d, b.volume, zeta)
            fresh = np.flatnonzero(~started & ~(nearest_better < r))
            for i in sorted(fresh.tolist(), key=lambda i: (values[i], i)):
                started[i] = True
                x, fx, _ = nelder_mead(ev, points[i], values[i], b.lower, b.upper, 0.05 * b.extent, local_budget)
                if all(np.linalg.norm(x - m) > tol for m, _ in self.minima):
                    self.minima.append((x, fx))


# ----------------------------------------------------------------------------
# gradient descent, pure random search


def gradient_descent(x0: Array, eta: float, grad, bounds: Bounds | None = None, steps: int = 1) -> list[Array]:
    """Iterates ``x <- P(x - eta grad(x))``, starting with ``x0``."""
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    for _ in range(steps):
        x = x - eta * np.asarray(grad(x), dtype=float)
        if bounds is not None:
            x = bounds.clip(x)
        out.append(x.copy())
    return out


@register_optimizer
class GradientDescent(Optimizer):
    name = "gd"
    defaults = {"eta": 0.01, "x0": None}

    def _optimize(self, ev, rng):
        eta = float(self.params["eta"])
        if eta <= 0:
            raise ConfigError("eta must be > 0")
        x0 = self.params["x0"]
        x = uniform_sample(ev.bounds, rng) if x0 is None else ev.bounds.clip(np.asarray(x0, dtype=float))
        while True:
            ev(x)
            step = x - eta * ev.gradient(x)
            # a non-finite gradient leaves no direction to follow: restart uniformly
            x = ev.bounds.clip(step) if np.all(np.isfinite(step)) else uniform_sample(ev.bounds, rng)


@register_optimizer
class PureRandomSearch(Optimizer):
    name = "prs"

    def _optimize(self, ev, rng):
        while True:
            ev(uniform_sample(ev.bounds, rng))
