"""Decision-based family: history-driven choice of the next evaluation point.

The loop is shared: draw the first point uniformly, then at every step either
explore (uniform draw, with the rule's exploration probability) or sample
uniform proposals until the rule accepts one. The region of acceptable points
is never represented explicitly; it is the set where ``rule.accept`` holds,
sampled by rejection.

Concrete rules: AdaLIPO+ (Lipschitz upper envelope with an adaptive constant
chosen on a geometric grid) and ECP (same envelope with a radius ``eps`` that
grows when proposals keep getting rejected).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Array,
    Bounds,
    ConfigError,
    Evaluator,
    Optimizer,
    RunResult,
    StopRun,
    StoppingCriterion,
    make_rng,
    register_optimizer,
    uniform_sample,
)
from .plugins import TrustRegionConfig, trust_region_config, trust_region_refine


class EvalHistory:
    """Growable record of evaluated points and values (minimization)."""

    def __init__(self, dim: int, capacity: int = 64):
        self.dim = dim
        self._points = np.empty((capacity, dim))
        self._values = np.empty(capacity)
        self._best = np.empty(capacity)
        self.size = 0
        self.best_index = -1

    def __len__(self):
        return self.size

    @classmethod
    def from_arrays(cls, points, values) -> EvalHistory:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        h = cls(points.shape[1], max(1, len(points)))
        for x, v in zip(points, values):
            h.append(x, v)
        return h

    def append(self, x: Array, value: float) -> None:
        if self.size == len(self._values):
            cap = 2 * len(self._values)
            self._points = np.resize(self._points, (cap, self.dim))
            self._values = np.resize(self._values, cap)
            self._best = np.resize(self._best, cap)
        value = float(value)
        if not math.isfinite(value):
            value = math.inf
        self._points[self.size] = x
        self._values[self.size] = value
        # strict comparison: earliest evaluation wins ties
        if self.best_index < 0 or value < self._values[self.best_index]:
            self.best_index = self.size
        self._best[self.size] = self._values[self.best_index]
        self.size += 1

    @property
    def points(self) -> Array:
        return self._points[: self.size]

    @property
    def values(self) -> Array:
        return self._values[: self.size]

    @property
    def best_so_far(self) -> Array:
        return self._best[: self.size]

    @property
    def best_point(self) -> Array:
        return self._points[self.best_index].copy()

    @property
    def best_value(self) -> float:
        return float(self._values[self.best_index])

    def finite(self) -> tuple[Array, Array]:
        mask = np.isfinite(self.values)
        if mask.all():
            return self.points, self.values
        return self.points[mask], self.values[mask]


# ----------------------------------------------------------------------------
# acceptance predicates


def _envelope_accepts(points: Array, values: Array, best: float, slope: float, candidates: Array) -> Array:
    """``max_i [f_i - slope * |c - x_i|] <= best`` for each row ``c``."""
    dist = np.sqrt(((candidates[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
    return np.max(values[None, :] - slope * dist, axis=1) <= best


class _RejecterCache:
    """Indices of history points that recently rejected proposals.

    Candidates are tested against these first and only the survivors
    against the whole history. The outcome is identical to the full test;
    only the amount of work changes.
    """

    SIZE = 256

    def __init__(self):
        self.indices = np.empty(0, dtype=np.intp)

    def add(self, idx: Array) -> None:
        if idx.size:
            merged = np.concatenate([np.unique(idx), self.indices])
            _, first = np.unique(merged, return_index=True)
            self.indices = merged[np.sort(first)][: self.SIZE]


def _accepts(history: EvalHistory, slope: float, candidates: Array, cache: _RejecterCache | None = None) -> Array:
    points, values = history.finite()
    candidates = np.atleast_2d(candidates)
    if values.size == 0:
        return np.ones(len(candidates), dtype=bool)
    best = float(values.min())
    if cache is None or values.size <= 2 * cache.SIZE:
        return _envelope_accepts(points, values, best, slope, candidates)
    hint = cache.indices
    ok = _envelope_accepts(points[hint], values[hint], best, slope, candidates) if hint.size else np.ones(len(candidates), dtype=bool)
    survivors = np.flatnonzero(ok)
    if survivors.size:
        sub = candidates[survivors]
        dist = np.sqrt(((sub[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
        lower = values[None, :] - slope * dist
        rejected = np.max(lower, axis=1) > best
        ok[survivors] = ~rejected
        cache.add(np.argmax(lower[rejected], axis=1))
    return ok


@dataclass(frozen=True)
class LipschitzEstimate:
    grid_base: float = 0.01
    k_hat: float = 0.0


def lipschitz_grid_value(slope: float, alpha: float) -> float:
    """Smallest ``(1 + alpha)**i`` (integer ``i``) that is >= ``slope``; 0 for ``slope <= 0``."""
    if slope <= 0:
        return 0.0
    if not math.isfinite(slope):
        return math.inf
    base = 1.0 + alpha
    i = math.ceil(math.log(slope) / math.log(base))
    # correct for rounding in the logarithms
    while base ** (i - 1) >= slope:
        i -= 1
    while base**i < slope:
        i += 1
    return base**i


def max_pairwise_slope(points: Array, values: Array) -> float:
    """Largest ``|f_i - f_j| / |x_i - x_j|`` over pairs of distinct points with finite values."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = np.isfinite(values)
    points, values = points[mask], values[mask]
    best = 0.0
    for j in range(1, len(values)):
        dist = np.linalg.norm(points[:j] - points[j], axis=1)
        ok = dist > 0
        if ok.any():
            best = max(best, float(np.max(np.abs(values[:j][ok] - values[j]) / dist[ok])))
    return best


def adalipo_accept(history: EvalHistory, est: LipschitzEstimate | float, candidate: Array) -> bool:
    """Is ``candidate`` a potential minimizer under the Lipschitz constant of ``est``?

    Minimization form of the LIPO rule: accept iff the lower envelope
    ``max_i [f(x_i) - k |candidate - x_i|]`` does not exceed the best value
    seen. Points with non-finite values are ignored.
    """
    k = float(getattr(est, "k_hat", est))
    return bool(_accepts(history, k, np.asarray(candidate, dtype=float)[None, :])[0])


def adalipo_update_k(history: EvalHistory, est: LipschitzEstimate) -> LipschitzEstimate:
    """Grid estimate dominating every observed pairwise slope; never decreases."""
    slope = max_pairwise_slope(history.points, history.values)
    k = max(est.k_hat, lipschitz_grid_value(slope, est.grid_base))
    return LipschitzEstimate(est.grid_base, k)


def ecp_accept(history: EvalHistory, eps: float, candidate: Array) -> bool:
    """ECP acceptance: the envelope test with the growing radius ``eps``."""
    return bool(_accepts(history, float(eps), np.asarray(candidate, dtype=float)[None, :])[0])


def ecp_schedule(consecutive_rejections: int, eps: float, growth: float, patience: int = 20) -> float:
    if growth <= 1:
        raise ConfigError("ECP growth must be > 1")
    return eps * growth if consecutive_rejections > patience else eps


# ----------------------------------------------------------------------------
# rules


class DecisionRule:
    """Callbacks consumed by :func:`decision_loop`.

    ``accept_batch`` must be pure given the rule's current state. Rules whose
    state changes after a number of rejections report that number through
    ``rejections_until_change`` so the loop can batch proposals without
    changing the sequential semantics.
    """

    def exploration_prob(self, t: int) -> float:
        return 0.0

    def accept_batch(self, history: EvalHistory, candidates: Array) -> Array:
        return np.ones(len(candidates), dtype=bool)

    def rejections_until_change(self) -> int | None:
        return None

    def on_rejections(self, n: int) -> None:
        pass

    def on_accept(self) -> None:
        pass

    def update(self, history: EvalHistory) -> None:
        pass

    def envelope_slope(self) -> float | None:
        """Slope of the envelope test while it stays fixed across rejections.

        Rules that reject iff ``f_i - slope |c - x_i| > best`` for some ``i``
        return the slope, which lets the sampler skip proposals that are
        certainly rejected. ``None`` disables that shortcut.
        """
        return None


class AcceptAll(DecisionRule):
    pass


class RejectAll(DecisionRule):
    def accept_batch(self, history, candidates):
        return np.zeros(len(candidates), dtype=bool)


class AdaLipoRule(DecisionRule):
    def __init__(self, alpha: float = 0.01, explore_floor: float = 0.05, freeze_window: int = 50):
        if alpha <= 0:
            raise ConfigError("alpha must be > 0")
        if not 0 <= explore_floor <= 1:
            raise ConfigError("explore_floor must lie in [0, 1]")
        self.alpha = alpha
        self.explore_floor = explore_floor
        self.freeze_window = int(freeze_window)
        self.max_slope = 0.0
        self.k_hat = 0.0
        self.unchanged = 0
        self.frozen_at: int | None = None
        self._p_frozen = 1.0
        self._seen = 0
        self._cache = _RejecterCache()

    @property
    def estimate(self) -> LipschitzEstimate:
        return LipschitzEstimate(self.alpha, self.k_hat)

    def exploration_prob(self, t):
        p = 1.0 / math.log(t + math.e)
        if self.frozen_at is None:
            return p
        return max(self.explore_floor, self._p_frozen * self.frozen_at / max(t, 1))

    def accept_batch(self, history, candidates):
        return _accepts(history, self.k_hat, candidates, self._cache)

    def envelope_slope(self):
        return self.k_hat if self.k_hat > 0 else None

    def update(self, history):
        pts, vals = history.points, history.values
        for j in range(self._seen, len(history)):
            self._seen = j + 1
            if self.frozen_at is not None:
                continue
            if j > 0 and math.isfinite(vals[j]):
                prev = np.isfinite(vals[:j])
                dist = np.linalg.norm(pts[:j][prev] - pts[j], axis=1)
                ok = dist > 0
                if ok.any():
                    slopes = np.abs(vals[:j][prev][ok] - vals[j]) / dist[ok]
                    self.max_slope = max(self.max_slope, float(slopes.max()))
            k = max(self.k_hat, lipschitz_grid_value(self.max_slope, self.alpha))
            if k == self.k_hat:
                self.unchanged += 1
            else:
                self.k_hat = k
                self.unchanged = 0
            if self.freeze_window > 0 and self.unchanged >= self.freeze_window:
                self.frozen_at = j + 1
                self._p_frozen = 1.0 / math.log(self.frozen_at + math.e)


class EcpRule(DecisionRule):
    def __init__(self, eps0_frac: float = 1e-2, growth: float = 1.5, patience: int = 20):
        if growth <= 1:
            raise ConfigError("growth must be > 1")
        if eps0_frac <= 0:
            raise ConfigError("eps0_frac must be > 0")
        self.eps0_frac = eps0_frac
        self.growth = growth
        self.patience = int(patience)
        self.eps: float | None = None
        self.rejections = 0
        self._cache = _RejecterCache()

    def accept_batch(self, history, candidates):
        if self.eps is None:
            return np.ones(len(candidates), dtype=bool)
        return _accepts(history, self.eps, candidates, self._cache)

    def rejections_until_change(self):
        if self.eps is None:
            return None
        return self.patience - self.rejections + 1

    def on_rejections(self, n):
        self.rejections += n
        new = ecp_schedule(self.rejections, self.eps, self.growth, self.patience)
        if new != self.eps:
            self.eps = new
            self.rejections = 0

    def on_accept(self):
        self.rejections = 0

    def update(self, history):
        if self.eps is None:
            _, vals = history.finite()
            if vals.size and vals.max() > vals.min():
                self.eps = self.eps0_frac * float(vals.max() - vals.min())


# ----------------------------------------------------------------------------
# loop


class _RejectionCover:
    """Grid cells lying entirely inside one exclusion ball.

    A proposal ``c`` is rejected when ``|c - x_i| < r_i`` for some ``i``, with
    ``r_i = (f_i - best) / slope``. A cell inside such a ball (with a relative
    safety margin, so the floating-point test agrees) can only yield
    rejections. Radii grow as ``best`` decreases, so cells marked under an
    older ``best`` stay valid; a change of slope forces a rebuild.
    """

    CELLS = 1 << 14
    MARGIN = 1e-9

    def __init__(self, bounds: Bounds):
        d = bounds.dim
        self.dim = d
        self.g = max(2, int(round(self.CELLS ** (1.0 / d))))
        self.lower = bounds.lower
        self.width = bounds.extent / self.g
        self.covered = np.zeros((self.g,) * d, dtype=bool)
        self.slope: float | None = None
        self.seen = 0
        self.rebuilt_at = 0
        self.best_at_rebuild = math.inf
        self._free: Array | None = None

    @staticmethod
    def usable(rule: DecisionRule, bounds: Bounds) -> bool:
        return type(rule).envelope_slope is not DecisionRule.envelope_slope and bounds.dim <= 14

    def sync(self, points: Array, values: Array, slope: float) -> None:
        best = float(values.min())
        t = len(values)
        stale = best < self.best_at_rebuild and t >= 1.25 * self.rebuilt_at
        if slope != self.slope or stale:
            self.covered[...] = False
            self.slope = slope
            self.seen = 0
            self.rebuilt_at = t
            self.best_at_rebuild = best
        if self.seen < t:
            for i in range(self.seen, t):
                self._mark(points[i], values[i], best)
            self.seen = t
            self._free = None

    def _mark(self, x: Array, f: float, best: float) -> None:
        gap = f - best
        if not gap > 1e-6 * max(1.0, abs(f), abs(best)):
            return
        r = gap / self.slope * (1.0 - self.MARGIN)
        if r <= float(np.linalg.norm(self.width)):
            return
        u = (x - self.lower) / self.width
        lo = np.clip(np.floor(u - r / self.width), 0, self.g).astype(int)
        hi = np.clip(np.ceil(u + r / self.width), 0, self.g).astype(int)
        axes = [np.arange(a, b) for a, b in zip(lo, hi)]
        if any(a.size == 0 for a in axes):
            return
        # squared farthest-corner distance separates over axes
        far = [np.maximum(np.abs(a * w + l - xi), np.abs((a + 1) * w + l - xi)) ** 2
               for a, w, l, xi in zip(axes, self.width, self.lower, x)]
        dist2 = far[0]
        for k in range(1, self.dim):
            dist2 = np.add.outer(dist2, far[k])
        block = tuple(slice(a, b) for a, b in zip(lo, hi))
        self.covered[block] |= dist2 < r * r

    @property
    def free(self) -> Array:
        if self._free is None:
            self._free = np.flatnonzero(~self.covered.ravel())
        return self._free

    def fraction_free(self) -> float:
        return self.free.size / self.covered.size

    def sample_free(self, rng, n: int) -> Array:
        cells = self.free[rng.integers(0, self.free.size, n)]
        idx = np.stack(np.unravel_index(cells, self.covered.shape), axis=-1)
        pts = self.lower + (idx + rng.random((n, self.dim))) * self.width
        return np.minimum(pts, self.lower + self.g * self.width)


COVER_MIN_HISTORY = 64


def _draw_accepted(rule: DecisionRule, history: EvalHistory, bounds: Bounds, rng, cover: _RejectionCover | None = None) -> Array:
    """Rejection sampling over uniform proposals, capped at ``10 d t`` proposals.

    With a ``cover`` the proposals that fall in certainly-rejecting cells are
    not drawn: the number of proposals up to the next one landing in a free
    cell is geometric, and that proposal is uniform over the free cells. The
    accepted point and the proposal count have the same law as plain
    rejection sampling.
    """
    cap = 10 * bounds.dim * len(history)
    tried = 0
    batch = 16
    # keep the (m, t, d) distance tensor around a few MB
    max_batch = max(1, (1 << 19) // max(1, len(history) * bounds.dim))
    slope = rule.envelope_slope() if cover is not None else None
    if slope is not None and len(history) >= COVER_MIN_HISTORY:
        points, values = history.finite()
        cover.sync(points, values, slope)
        q = cover.fraction_free()
        if q == 0.0:
            rule.on_rejections(cap)
            return uniform_sample(bounds, rng)
        while tried < cap:
            m = min(batch, max_batch)
            skips = np.cumsum(rng.geometric(q, m)) + tried
            cand = cover.sample_free(rng, m)
            ok = rule.accept_batch(history, cand) & (skips <= cap)
            hit = np.flatnonzero(ok)
            if hit.size:
                j = int(hit[0])
                rule.on_rejections(int(skips[j]) - 1 - tried)
                rule.on_accept()
                return cand[j]
            rule.on_rejections(min(cap, int(skips[-1])) - tried)
            tried = int(skips[-1])
            batch = min(2 * batch, 4096)
        return uniform_sample(bounds, rng)

    while tried < cap:
        m = min(batch, max_batch, cap - tried)
        limit = rule.rejections_until_change()
        if limit is not None:
            m = min(m, max(1, limit))
        cand = uniform_sample(bounds, rng, m)
        ok = rule.accept_batch(history, cand)
        hit = np.flatnonzero(ok)
        if hit.size:
            j = int(hit[0])
            rule.on_rejections(j)
            rule.on_accept()
            return cand[j]
        rule.on_rejections(m)
        tried += m
        batch = min(2 * batch, 4096)
    return uniform_sample(bounds, rng)


def run_decision(
    rule: DecisionRule,
    ev: Evaluator,
    rng: np.random.Generator,
    trust_region: TrustRegionConfig | None = None,
) -> EvalHistory:
    """Drive ``rule`` on a counted evaluator until it stops the run.

    Returns the history; :class:`StopRun` is swallowed here because the
    evaluator already holds the result.
    """
    bounds = ev.bounds
    history = EvalHistory(bounds.dim)

    def evaluate(x):
        try:
            value = ev(x)
        except StopRun:
            history.append(x, ev.last_value)
            raise
        history.append(x, value)
        return value

    cover = _RejectionCover(bounds) if _RejectionCover.usable(rule, bounds) else None
    radius = trust_region.radius0 if trust_region else 0.0
    last_refine = 0
    try:
        evaluate(uniform_sample(bounds, rng))
        rule.update(history)
        t = 1
        while True:
            if rng.random() < rule.exploration_prob(t):
                x = uniform_sample(bounds, rng)
            else:
                x = _draw_accepted(rule, history, bounds, rng, cover)
            evaluate(x)
            rule.update(history)
            t += 1
            if trust_region is not None and len(history) - last_refine >= trust_region.window:
                past = history.best_so_far[len(history) - 1 - trust_region.window]
                now = history.best_value
                gain = (past - now) / max(abs(past), 1e-12) if math.isfinite(past) else math.inf
                if gain < trust_region.trigger:
                    before = history.best_value
                    trust_region_refine(history, trust_region, ev, bounds, rng, radius=radius)
                    rule.update(history)
                    if history.best_value < before:
                        radius = min(0.5, radius * trust_region.expand)
                    else:
                        radius = max(1e-6, radius * trust_region.shrink)
                    last_refine = len(history)
    except StopRun:
        rule.update(history)
    return history


def decision_loop(
    rule: DecisionRule,
    objective,
    bounds: Bounds,
    budget: int,
    stop: StoppingCriterion | None = None,
    rng: np.random.Generator | int = 0,
    trust_region: TrustRegionConfig | None = None,
) -> RunResult:
    ev = Evaluator(objective, bounds, budget, stop)
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(rng)
    run_decision(rule, ev, rng, trust_region)
    return ev.result()


class DecisionOptimizer(Optimizer):
    """Family base: subclasses only build their rule."""

    family = "decision"
    defaults = {"trust_region": None}

    def make_rule(self, bounds: Bounds) -> DecisionRule:
        raise NotImplementedError

    def _optimize(self, ev, rng):
        tr = trust_region_config(self.params["trust_region"])
        if tr is not None:
            tr.budget_for(ev.bounds.dim)
        self.history = run_decision(self.make_rule(ev.bounds), ev, rng, tr)


@register_optimizer
class AdaLIPOPlus(DecisionOptimizer):
    name = "adalipo"
    defaults = {"alpha": 0.01, "explore_floor": 0.05, "freeze_window": 50}

    def make_rule(self, bounds):
        return AdaLipoRule(self.params["alpha"], self.params["explore_floor"], self.params["freeze_window"])


@register_optimizer
class ECP(DecisionOptimizer):
    name = "ecp"
    defaults = {"eps0_frac": 1e-2, "growth": 1.5, "patience": 20}

    def make_rule(self, bounds):
        return EcpRule(self.params["eps0_frac"], self.params["growth"], self.params["patience"])
