"""Family-level plugins.

Decision-based family: trust-region refinement around the incumbent, run by
a box-restricted Nelder-Mead simplex.

Particle-based family: common noise (SMD perturbs the population statistics
handed to the drift, GCN mixes a shared Brownian increment into every
particle's noise) and quantile filtering of slow, poor particles.

Nothing here knows about individual algorithms; the family templates call
these functions.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .core import Array, Bounds, ConfigError, StopRun, uniform_sample


# ----------------------------------------------------------------------------
# configuration records


@dataclass(frozen=True)
class TrustRegionConfig:
    trigger: float = 1e-3
    radius0: float = 0.1
    local_budget: int | None = None  # None -> 20 * (d + 1)
    window: int = 50
    shrink: float = 0.5
    expand: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.radius0 <= 0.5:
            raise ConfigError("trust_region.radius0 must lie in (0, 0.5]")
        if self.window < 1:
            raise ConfigError("trust_region.window must be >= 1")
        if not (0.0 < self.shrink < 1.0 < self.expand):
            raise ConfigError("trust_region needs 0 < shrink < 1 < expand")

    def budget_for(self, dim: int) -> int:
        budget = 20 * (dim + 1) if self.local_budget is None else int(self.local_budget)
        if budget < dim + 2:
            raise ConfigError(f"trust_region.local_budget must be >= d + 2 = {dim + 2}")
        return budget


@dataclass(frozen=True)
class CommonNoiseConfig:
    scheme: str = "gcn"
    scale: float = 0.0

    def __post_init__(self):
        if self.scheme not in ("smd", "gcn"):
            raise ConfigError(f"common_noise.scheme must be 'smd' or 'gcn', got {self.scheme!r}")
        if self.scale < 0:
            raise ConfigError("common_noise.eps must be >= 0")
        if self.scheme == "gcn" and self.scale > 1:
            raise ConfigError("common_noise.eps must lie in [0, 1] for gcn")


@dataclass(frozen=True)
class FilterConfig:
    cadence: int = 10
    q: float = 0.2
    window: int = 5

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ConfigError("filter.q must lie in (0, 1)")
        if self.cadence < 1 or self.window < 1:
            raise ConfigError("filter.cadence and filter.window must be >= 1")


def _from_mapping(cls, value, renames=None):
    if value is None or isinstance(value, cls):
        return value
    if not isinstance(value, dict):
        raise ConfigError(f"{cls.__name__} expects a mapping, got {type(value).__name__}")
    renames = renames or {}
    kwargs = {renames.get(k, k): v for k, v in value.items()}
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(kwargs) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} for {cls.__name__}")
    return cls(**kwargs)


def trust_region_config(value: Any) -> TrustRegionConfig | None:
    return _from_mapping(TrustRegionConfig, value)


def common_noise_config(value: Any) -> CommonNoiseConfig | None:
    return _from_mapping(CommonNoiseConfig, value, {"eps": "scale"})


def filter_config(value: Any) -> FilterConfig | None:
    return _from_mapping(FilterConfig, value)


# ----------------------------------------------------------------------------
# Nelder-Mead in a box


class _LocalBudget(Exception):
    pass


def nelder_mead(
    f: Callable[[Array], float],
    x0: Array,
    f0: float | None,
    lower: Array,
    upper: Array,
    step: Array,
    budget: int,
    xtol: float = 1e-12,
) -> tuple[Array, float, int]:
    """Budgeted Nelder-Mead restricted to ``[lower, upper]``.

    Coefficients are the standard 1 (reflection), 2 (expansion), 0.5
    (contraction) and 0.5 (shrink); trial points are clipped into the box.
    ``f0`` may carry an already known value at ``x0`` (not re-evaluated).
    Returns ``(best_x, best_f, evaluations_used)``; the result is never worse
    than ``x0``.
    """
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)
    d = x0.size
    step = np.broadcast_to(np.asarray(step, dtype=float), (d,))
    used = 0

    def evaluate(x):
        nonlocal used
        if used >= budget:
            raise _LocalBudget
        used += 1
        return f(x)

    simplex = [x0]
    try:
        values = [evaluate(x0) if f0 is None else float(f0)]
        for i in range(d):
            v = x0.copy()
            v[i] += step[i]
            if v[i] > upper[i]:
                v[i] = x0[i] - step[i]
            v = np.clip(v, lower, upper)
            fv = evaluate(v)
            simplex.append(v)
            values.append(fv)

        scale = float(np.max(upper - lower))
        while True:
            order = np.argsort(values, kind="stable")
            simplex = [simplex[i] for i in order]
            values = [values[i] for i in order]
            pts = np.array(simplex)
            if np.max(np.abs(pts[1:] - pts[0])) <= xtol * scale:
                break
            centroid = pts[:-1].mean(axis=0)
            worst = pts[-1]
            xr = np.clip(centroid + (centroid - worst), lower, upper)
            fr = evaluate(xr)
            if values[0] <= fr < values[-2]:
                simplex[-1], values[-1] = xr, fr
                continue
            if fr < values[0]:
                xe = np.clip(centroid + 2.0 * (centroid - worst), lower, upper)
                fe = evaluate(xe)
                if fe < fr:
                    simplex[-1], values[-1] = xe, fe
                else:
                    simplex[-1], values[-1] = xr, fr
                continue
            if fr < values[-1]:
                xc = np.clip(centroid + 0.5 * (xr - centroid), lower, upper)
                fc = evaluate(xc)
                if fc <= fr:
                    simplex[-1], values[-1] = xc, fc
                    continue
            else:
                xc = np.clip(centroid + 0.5 * (worst - centroid), lower, upper)
                fc = evaluate(xc)
                if fc < values[-1]:
                    simplex[-1], values[-1] = xc, fc
                    continue
            best = simplex[0]
            for i in range(1, d + 1):
                p = best + 0.5 * (simplex[i] - best)
                fp = evaluate(p)
                simplex[i], values[i] = p, fp
    except _LocalBudget:
        pass
    k = int(np.argmin(values))
    return np.array(simplex[k]), float(values[k]), used


def trust_region_refine(
    history,
    cfg: TrustRegionConfig,
    objective: Callable[[Array], float],
    bounds: Bounds,
    rng: np.random.Generator | None = None,
    radius: float | None = None,
) -> tuple[Array, float, int]:
    """Refine the incumbent of ``history`` with a local simplex search.

    The search box is ``incumbent +- radius * extent`` intersected with the
    bounds; ``radius`` defaults to ``cfg.radius0``. Every evaluation is
    appended to ``history``. ``rng`` is accepted for interface symmetry with
    the other plugins; the simplex construction is deterministic.
    """
    x_inc = history.best_point
    f_inc = history.best_value
    radius = cfg.radius0 if radius is None else radius
    half = radius * bounds.extent
    lower = np.maximum(bounds.lower, x_inc - half)
    upper = np.minimum(bounds.upper, x_inc + half)
    budget = cfg.budget_for(bounds.dim)

    def recorded(x):
        try:
            value = objective(x)
        except StopRun:
            history.append(x, getattr(objective, "last_value", math.inf))
            raise
        history.append(x, value)
        return value

    x, fx, used = nelder_mead(recorded, x_inc, f_inc, lower, upper, 0.5 * half, budget)
    return x, fx, used


# ----------------------------------------------------------------------------
# common noise


def smd_perturb(
    mean: Array, var: Array, cfg: CommonNoiseConfig, rng: np.random.Generator
) -> tuple[Array, Array]:
    """Shared perturbation of population mean and variance.

    ``mean + eps * dm`` and ``var * exp(eps * dv - eps**2 / 2)`` with one
    standard-normal draw ``(dm, dv)`` per call, i.e. per iteration, shared by
    every particle. The log-normal factor keeps the variance positive and
    has expectation one.
    """
    eps = float(cfg.scale)
    if eps == 0.0:
        return mean, var
    d = np.shape(mean)[-1]
    dm = rng.standard_normal(d)
    dv = rng.standard_normal(d)
    return mean + eps * dm, var * np.exp(eps * dv - 0.5 * eps * eps)


def gcn_increments(n: int, d: int, cfg: CommonNoiseConfig, rng: np.random.Generator) -> Array:
    """Standard-normal increments with cross-particle correlation ``eps**2``.

    ``sqrt(1 - eps**2) * xi_i + eps * dB``: at ``eps = 0`` this is the plain
    independent draw (same stream consumption as the base algorithm), at
    ``eps = 1`` every particle receives the same ``dB``.
    """
    independent = rng.standard_normal((n, d))
    eps = float(cfg.scale)
    if eps == 0.0:
        return independent
    common = rng.standard_normal(d)
    return math.sqrt(max(0.0, 1.0 - eps * eps)) * independent + eps * common


# ----------------------------------------------------------------------------
# quantile filtering


def filter_candidates(values: Array, displacements: Array, q: float) -> Array:
    """Indices that are both among the ``floor(q N)`` slowest and worst particles.

    The best particle (earliest index on ties) is never returned.
    """
    n = len(values)
    k = int(math.floor(q * n))
    if n < 2 or k == 0:
        return np.empty(0, dtype=int)
    slow = set(np.argsort(displacements, kind="stable")[:k].tolist())
    # stable sort of -values: among equal values, lower index counts as worse
    poor = set(np.argsort(-np.asarray(values), kind="stable")[:k].tolist())
    best = int(np.argmin(values))
    return np.array(sorted((slow & poor) - {best}), dtype=int)


def quantile_filter(swarm, cfg: FilterConfig, values: Array, displacements: Array, bounds: Bounds, rng: np.random.Generator):
    """Respawn slow, poor particles uniformly over the box.

    Returns ``(new_swarm, resampled_indices)``; the population size is
    unchanged and the incumbent particle is kept.
    """
    idx = filter_candidates(values, displacements, cfg.q)
    if idx.size == 0:
        return swarm, idx
    positions = swarm.positions.copy()
    positions[idx] = uniform_sample(bounds, rng, idx.size)
    return dataclasses.replace(swarm, positions=positions), idx
