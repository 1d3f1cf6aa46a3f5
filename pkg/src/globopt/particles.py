"""Particle-based family: Euler-Maruyama discretization of interacting SDEs.

Each particle follows ``dX = b(X, mu) dt + sigma(X, mu) dB`` where ``mu`` is
the empirical measure of the swarm. The family template owns the loop,
boundary handling, the per-iteration evaluation of every particle, and the
plugin hooks (common noise, quantile filtering, coefficient schedules).
Algorithms only provide a :class:`Dynamics`.

Drift and diffusion callbacks work on the whole swarm at once and return
``(N, d)`` arrays (or a scalar / ``(N, 1)`` column for the diffusion).
"""
from __future__ import annotations

import collections
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .core import Array, Bounds, ConfigError, Optimizer, register_optimizer, uniform_sample
from .plugins import (
    CommonNoiseConfig,
    common_noise_config,
    filter_config,
    gcn_increments,
    quantile_filter,
    smd_perturb,
)

log = logging.getLogger(__name__)

Gradient = Callable[[Array], Array]


@dataclass
class PopulationStats:
    mean: Array
    var: Array
    raw_mean: Array
    raw_var: Array

    @property
    def perturbed(self) -> bool:
        return self.mean is not self.raw_mean or self.var is not self.raw_var


@dataclass
class Swarm:
    positions: Array
    values: Array | None = None
    iteration: int = 0
    aux: dict[str, Any] = field(default_factory=dict)
    stats: PopulationStats | None = None

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass
class Dynamics:
    drift: Callable[[Swarm, np.random.Generator], Array]
    diffusion: Callable[[Swarm], Array | float] | None
    dt: float


# ----------------------------------------------------------------------------
# discretization


def boundary_project(x: Array, bounds: Bounds, mode: str = "reflect") -> Array:
    """Map points (a vector or rows of a matrix) back into the box."""
    if mode == "clamp":
        return bounds.clip(x)
    if mode != "reflect":
        raise ConfigError(f"boundary mode must be 'clamp' or 'reflect', got {mode!r}")
    x = np.asarray(x, dtype=float)
    lo, width = bounds.lower, bounds.extent
    inside = (x >= lo) & (x <= bounds.upper)
    if inside.all():
        return x
    # repeated folding across the faces is periodic with period 2 * width
    y = np.mod(x - lo, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    out = np.where(inside, x, lo + y)
    return bounds.clip(out)


def euler_maruyama_step(
    swarm: Swarm,
    dyn: Dynamics,
    bounds: Bounds,
    rng: np.random.Generator,
    common_noise: CommonNoiseConfig | None = None,
    mode: str = "reflect",
    noise: Array | None = None,
) -> Swarm:
    """One step ``X <- P(X + b dt + sigma sqrt(dt) xi)``.

    ``xi`` is drawn i.i.d. standard normal unless ``noise`` is given or a GCN
    plugin is active. Rows with a non-finite drift are redrawn uniformly.
    Values are left stale (``None``); the caller re-evaluates.
    """
    if dyn.dt <= 0:
        raise ConfigError("dt must be > 0")
    X = swarm.positions
    # callbacks may rebind aux entries (PSO velocities) but never touch the input swarm
    swarm = replace(swarm, aux=dict(swarm.aux))
    b = np.asarray(dyn.drift(swarm, rng), dtype=float)
    step = X + b * dyn.dt
    if dyn.diffusion is not None:
        sigma = dyn.diffusion(swarm)
        if noise is None:
            if common_noise is not None and common_noise.scheme == "gcn":
                noise = gcn_increments(swarm.n, swarm.dim, common_noise, rng)
            else:
                noise = rng.standard_normal(X.shape)
        step = step + sigma * math.sqrt(dyn.dt) * noise
    bad = ~np.all(np.isfinite(step), axis=1)
    new = boundary_project(np.where(bad[:, None], 0.0, step), bounds, mode)
    aux = swarm.aux
    if bad.any():
        new[bad] = uniform_sample(bounds, rng, int(bad.sum()))
        aux = {**aux, "n_resampled": aux.get("n_resampled", 0) + int(bad.sum())}
        log.debug("resampled %d particles with non-finite drift", int(bad.sum()))
    return replace(swarm, positions=new, values=None, iteration=swarm.iteration + 1, aux=aux, stats=None)


def population_stats(X: Array, weights: Array | None = None) -> tuple[Array, Array]:
    if weights is None:
        return X.mean(axis=0), X.var(axis=0)
    total = weights.sum()
    mean = (weights @ X) / total  # same rounding as consensus_point
    return mean, (weights @ (X - mean) ** 2) / total


# ----------------------------------------------------------------------------
# consensus-based optimization


def consensus_weights(values: Array, alpha: float) -> Array:
    """``exp(-alpha f_j)`` up to a common factor, shifted by ``min f`` to avoid underflow."""
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    if not finite.any():
        return np.ones_like(values)
    shifted = np.where(finite, values - values[finite].min(), 0.0)
    return np.where(finite, np.exp(-alpha * shifted), 0.0)


def consensus_point(X: Array, values: Array, alpha: float) -> Array:
    w = consensus_weights(values, alpha)
    return (w @ X) / w.sum()


def cbo_dynamics(lam: float = 1.0, sigma: float = 0.7, alpha: float = 30.0, anisotropic: bool = True, dt: float = 0.1) -> Dynamics:
    if lam <= 0 or sigma <= 0 or alpha < 0:
        raise ConfigError("CBO needs lambda > 0, sigma > 0, alpha >= 0")

    def _consensus(swarm):
        if swarm.stats is not None:
            return swarm.stats.mean
        return consensus_point(swarm.positions, swarm.values, alpha)

    def drift(swarm, rng):
        return -lam * (swarm.positions - _consensus(swarm))

    def diffusion(swarm):
        diff = swarm.positions - _consensus(swarm)
        if anisotropic:
            s = sigma * np.abs(diff)
        else:
            s = sigma * np.linalg.norm(diff, axis=1, keepdims=True)
        st = swarm.stats
        if st is not None and st.perturbed:
            ratio = np.where(st.raw_var > 0, st.var / np.where(st.raw_var > 0, st.raw_var, 1.0), 1.0)
            s = s * np.sqrt(ratio)
        return s

    return Dynamics(drift, diffusion, dt)


# ----------------------------------------------------------------------------
# gradient-driven dynamics


def _gradients(grad: Gradient, X: Array) -> Array:
    return np.array([grad(x) for x in X], dtype=float).reshape(X.shape)


def langevin_dynamics(beta: float, grad: Gradient, dt: float = 0.01) -> Dynamics:
    """Overdamped Langevin: drift ``-grad f``, constant diffusion ``sqrt(2 / beta)``."""
    if beta <= 0:
        raise ConfigError("beta must be > 0")
    scale = math.sqrt(2.0 / beta)
    return Dynamics(lambda swarm, rng: -_gradients(grad, swarm.positions), lambda swarm: scale, dt)


def msgd_dynamics(eta: float, grad: Gradient) -> Dynamics:
    if eta <= 0:
        raise ConfigError("eta must be > 0")
    return Dynamics(lambda swarm, rng: -_gradients(grad, swarm.positions), None, eta)


def median_bandwidth(X: Array) -> float:
    """``h`` with ``exp(-med^2 / (2 h^2)) = 1 / (N + 1)``; 1 when undefined."""
    n = X.shape[0]
    if n < 2:
        return 1.0
    diff = X[:, None, :] - X[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))[np.triu_indices(n, 1)]
    med = float(np.median(dist))
    if med <= 0:
        return 1.0
    return med / math.sqrt(2.0 * math.log(n + 1.0))


def stein_drift(X: Array, scores: Array, h: float) -> Array:
    """``(1/N) sum_j [k(x_j, x_i) s_j + grad_{x_j} k(x_j, x_i)]`` with a Gaussian kernel."""
    diff = X[:, None, :] - X[None, :, :]  # x_i - x_j
    K = np.exp(-(diff**2).sum(axis=-1) / (2.0 * h * h))
    repulsion = (K[:, :, None] * diff).sum(axis=1) / (h * h)
    return (K @ scores + repulsion) / X.shape[0]


def sbs_dynamics(
    temperature: Callable[[int], float] | float,
    grad: Gradient,
    bandwidth: Callable[[Array], float] | float | None = None,
    dt: float = 0.1,
) -> Dynamics:
    """Stein transport toward ``exp(-f / T)``; deterministic (no diffusion)."""
    temp = temperature if callable(temperature) else (lambda k, _t=float(temperature): _t)
    if bandwidth is None:
        bandwidth = median_bandwidth

    def drift(swarm, rng):
        T = temp(swarm.iteration)
        if T <= 0:
            raise ConfigError("temperature must be > 0")
        h = bandwidth(swarm.positions) if callable(bandwidth) else float(bandwidth)
        scores = -_gradients(grad, swarm.positions) / T
        return stein_drift(swarm.positions, scores, h)

    return Dynamics(drift, None, dt)


def annealed_temperature(t0: float) -> Callable[[int], float]:
    return lambda k: t0 / math.log(k + math.e)


# ----------------------------------------------------------------------------
# particle swarm


def pso_velocity(v, x, pbest, gbest, w, c1, c2, r1, r2):
    return w * v + c1 * r1 * (pbest - x) + c2 * r2 * (gbest - x)


def pso_step(swarm: Swarm, w: float, c1: float, c2: float, rng: np.random.Generator, bounds: Bounds, mode: str = "clamp") -> Swarm:
    """Velocity/position update; personal and global bests are refreshed by the caller."""
    dyn = pso_dynamics(w, c1, c2)
    return euler_maruyama_step(swarm, dyn, bounds, rng, mode=mode)


def pso_dynamics(w: float, c1: float, c2: float) -> Dynamics:
    if w < 0 or c1 < 0 or c2 < 0:
        raise ConfigError("PSO needs w, c1, c2 >= 0")

    def drift(swarm, rng):
        aux = swarm.aux
        X = swarm.positions
        r1 = rng.random(X.shape)
        r2 = rng.random(X.shape)
        v = pso_velocity(aux["velocity"], X, aux["pbest"], aux["gbest"], w, c1, c2, r1, r2)
        aux["velocity"] = v
        return v

    return Dynamics(drift, None, 1.0)


def update_bests(swarm: Swarm) -> None:
    aux = swarm.aux
    better = swarm.values < aux["pbest_f"]
    aux["pbest"] = np.where(better[:, None], swarm.positions, aux["pbest"])
    aux["pbest_f"] = np.where(better, swarm.values, aux["pbest_f"])
    k = int(np.argmin(aux["pbest_f"]))
    aux["gbest"] = aux["pbest"][k].copy()


# ----------------------------------------------------------------------------
# family template


class ParticleOptimizer(Optimizer):
    """Family base: owns the loop and the plugin hooks.

    Subclasses implement :meth:`dynamics` and may override :meth:`init_state`,
    :meth:`statistics`, :meth:`schedule`, :meth:`after_evaluate` and
    :meth:`on_resample`.
    """

    family = "particles"
    boundary_default = "reflect"
    defaults = {"n_particles": 20, "boundary": None, "common_noise": None, "filter": None}

    def dynamics(self, swarm: Swarm, ev) -> Dynamics:
        raise NotImplementedError

    def init_state(self, swarm: Swarm, ev) -> None:
        pass

    def statistics(self, swarm: Swarm) -> tuple[Array, Array]:
        return population_stats(swarm.positions)

    def schedule(self, swarm: Swarm, dyn: Dynamics) -> Dynamics:
        return dyn

    def after_evaluate(self, swarm: Swarm) -> None:
        pass

    def on_resample(self, swarm: Swarm, idx: Array) -> None:
        pass

    def _optimize(self, ev, rng):
        p = self.params
        bounds = ev.bounds
        n = int(p["n_particles"])
        if n < 1:
            raise ConfigError("n_particles must be >= 1")
        mode = p["boundary"] or self.boundary_default
        noise_cfg = common_noise_config(p["common_noise"])
        filt = filter_config(p["filter"])

        swarm = Swarm(uniform_sample(bounds, rng, n))
        self.swarm = swarm
        swarm.values = ev.batch(swarm.positions)
        self.init_state(swarm, ev)
        dyn = self.dynamics(swarm, ev)
        past = collections.deque([swarm.positions.copy()], maxlen=(filt.window + 1) if filt else 1)
        while True:
            dyn = self.schedule(swarm, dyn)
            if noise_cfg is not None and noise_cfg.scheme == "smd" and noise_cfg.scale > 0:
                mean, var = self.statistics(swarm)
                m2, v2 = smd_perturb(mean, var, noise_cfg, rng)
                swarm.stats = PopulationStats(m2, v2, mean, var)
            swarm = euler_maruyama_step(swarm, dyn, bounds, rng, noise_cfg, mode)
            self.swarm = swarm
            swarm.values = ev.batch(swarm.positions)
            self.after_evaluate(swarm)
            if filt is None:
                continue
            past.append(swarm.positions.copy())
            if swarm.iteration % filt.cadence == 0 and len(past) > filt.window:
                disp = np.linalg.norm(swarm.positions - past[0], axis=1)
                swarm, idx = quantile_filter(swarm, filt, swarm.values, disp, bounds, rng)
                if idx.size:
                    self.swarm = swarm
                    swarm.values = swarm.values.copy()
                    for i in idx:
                        swarm.values[i] = ev(swarm.positions[i])
                    for snap in past:
                        snap[idx] = swarm.positions[idx]
                    self.on_resample(swarm, idx)


@register_optimizer
class CBO(ParticleOptimizer):
    name = "cbo"
    defaults = {
        "n_particles": 50,
        "dt": 0.1,
        "lambda": 1.0,
        "sigma": 0.7,
        "alpha": 30.0,
        "anisotropic": True,
        "alpha_double_every": 0,
    }

    def _dyn(self, alpha):
        p = self.params
        return cbo_dynamics(p["lambda"], p["sigma"], alpha, bool(p["anisotropic"]), p["dt"])

    def dynamics(self, swarm, ev):
        self._alpha = float(self.params["alpha"])
        return self._dyn(self._alpha)

    def statistics(self, swarm):
        return population_stats(swarm.positions, consensus_weights(swarm.values, self._alpha))

    def schedule(self, swarm, dyn):
        every = int(self.params["alpha_double_every"])
        if every > 0 and swarm.iteration > 0 and swarm.iteration % every == 0:
            self._alpha *= 2.0
            return self._dyn(self._alpha)
        return dyn


@register_optimizer
class Langevin(ParticleOptimizer):
    name = "langevin"
    defaults = {"dt": 0.1, "beta": 10.0}

    def dynamics(self, swarm, ev):
        return langevin_dynamics(self.params["beta"], ev.gradient, self.params["dt"])


@register_optimizer
class SBS(ParticleOptimizer):
    name = "sbs"
    defaults = {"dt": 0.1, "t0": None}

    def dynamics(self, swarm, ev):
        t0 = self.params["t0"]
        if t0 is None:
            finite = swarm.values[np.isfinite(swarm.values)]
            spread = float(finite.max() - finite.min()) if finite.size else 0.0
            t0 = spread if spread > 0 else 1.0
        return sbs_dynamics(annealed_temperature(float(t0)), ev.gradient, dt=self.params["dt"])


@register_optimizer
class MSGD(ParticleOptimizer):
    name = "msgd"
    defaults = {"n_particles": 10, "eta": 0.1}

    def dynamics(self, swarm, ev):
        return msgd_dynamics(self.params["eta"], ev.gradient)


@register_optimizer
class PSO(ParticleOptimizer):
    name = "pso"
    boundary_default = "clamp"
    defaults = {"n_particles": 20, "w": 0.729, "c1": 1.494, "c2": 1.494}

    def init_state(self, swarm, ev):
        swarm.aux["velocity"] = np.zeros_like(swarm.positions)
        swarm.aux["pbest"] = swarm.positions.copy()
        swarm.aux["pbest_f"] = swarm.values.copy()
        k = int(np.argmin(swarm.values))
        swarm.aux["gbest"] = swarm.positions[k].copy()

    def dynamics(self, swarm, ev):
        return pso_dynamics(self.params["w"], self.params["c1"], self.params["c2"])

    def after_evaluate(self, swarm):
        update_bests(swarm)

    def on_resample(self, swarm, idx):
        swarm.aux["velocity"][idx] = 0.0
        update_bests(swarm)
