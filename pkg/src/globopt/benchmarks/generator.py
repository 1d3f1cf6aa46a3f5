"""Random test functions with declared minima, in the spirit of GKLS.

The function lives on ``[-1, 1]^d``. Outside a set of disjoint balls it is
the paraboloid ``base(x) = |x - v|^2 + t``. Inside ball ``m`` (centre
``c_m``, radius ``rho_m``, bottom value ``f_m``) it is the blend

    f = (1 - S(r)) q(r) + S(r) base(x),     r = |x - c_m| / rho_m,
    q(r) = f_m + A_m r^p,                   A_m = min_ball(base) - f_m,

with ``S(r) = 6r^5 - 15r^4 + 10r^3, p = 2`` (C2: value and two derivatives
match the paraboloid on the sphere) or ``S(r) = r, p = 1`` (C0 cone). As a
convex combination of ``q >= f_m`` and ``base > f_m`` the well never drops
below ``f_m`` and meets it only at its centre, so the declared minima are
exact by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Array, Bounds, ConfigError, derive_seed, make_rng

GLOBAL_VALUE = -1.0
LOCAL_SPREAD = 0.5
BASE_MARGIN = 0.1
MIN_RADIUS = 1e-3
PLACEMENT_TRIES = 1000
SHRINK = 0.7


def _smoothstep(r: Array) -> Array:
    return r * r * r * (10.0 + r * (-15.0 + 6.0 * r))


@dataclass(frozen=True, eq=False)
class GeneratedFunction:
    seed: int
    dim: int
    n_minima: int
    gap: float
    smoothness: str
    vertex: Array
    base_value: float
    centers: Array  # (M, d)
    radii: Array  # (M,)
    values: Array  # (M,)
    global_index: int

    @property
    def global_min_point(self) -> Array:
        return self.centers[self.global_index].copy()

    @property
    def global_min_value(self) -> float:
        return float(self.values[self.global_index])

    @property
    def local_minima(self) -> list[tuple[Array, float, float]]:
        return [
            (self.centers[m].copy(), float(self.values[m]), float(self.radii[m]))
            for m in range(self.n_minima)
            if m != self.global_index
        ]

    @property
    def bounds(self) -> Bounds:
        return Bounds.cube(-1.0, 1.0, self.dim)

    @property
    def name(self) -> str:
        return f"generated[seed={self.seed},M={self.n_minima},{self.smoothness}]"

    def base(self, X: Array) -> Array:
        return np.sum((X - self.vertex) ** 2, axis=-1) + self.base_value

    def _ball_base_min(self, m: int) -> float:
        dist = float(np.linalg.norm(self.centers[m] - self.vertex))
        return max(0.0, dist - float(self.radii[m])) ** 2 + self.base_value

    def __call__(self, X: Array) -> Array:
        X = np.asarray(X, dtype=float)
        out = self.base(X)
        scalar = out.ndim == 0
        out = np.atleast_1d(out).astype(float, copy=True)
        Xf = X.reshape(-1, self.dim)
        base = out.copy()
        for m in range(self.n_minima):
            r = np.linalg.norm(Xf - self.centers[m], axis=-1) / self.radii[m]
            inside = r < 1.0
            if not inside.any():
                continue
            ri = r[inside]
            amp = self._ball_base_min(m) - self.values[m]
            if self.smoothness == "C2":
                q = self.values[m] + amp * ri**2
                s = _smoothstep(ri)
            else:
                q = self.values[m] + amp * ri
                s = ri
            out[inside] = (1.0 - s) * q + s * base[inside]
        return out[0] if scalar else out.reshape(X.shape[:-1])

    def benchmark(self):
        from . import Benchmark

        return Benchmark(self.name, self.dim, self, self.bounds, self.global_min_value, [self.global_min_point])

    def __eq__(self, other):
        if not isinstance(other, GeneratedFunction):
            return NotImplemented
        return (
            (self.seed, self.dim, self.n_minima, self.gap, self.smoothness, self.global_index, self.base_value)
            == (other.seed, other.dim, other.n_minima, other.gap, other.smoothness, other.global_index, other.base_value)
            and np.array_equal(self.vertex, other.vertex)
            and np.array_equal(self.centers, other.centers)
            and np.array_equal(self.radii, other.radii)
            and np.array_equal(self.values, other.values)
        )


def _place(rng: np.random.Generator, radii: Array, dim: int) -> Array | None:
    centers = []
    for rho in radii:
        for _ in range(PLACEMENT_TRIES):
            c = rng.uniform(-1.0, 1.0, dim)
            if all(np.linalg.norm(c - o) > rho + ro for o, ro in zip(centers, radii)):
                centers.append(c)
                break
        else:
            return None
    return np.array(centers)


def generate_random_function(
    seed: int, d: int, M: int = 5, gap: float = 0.1, smoothness: str = "C2"
) -> GeneratedFunction:
    """Build a reproducible multimodal function with declared minima.

    One well bottoms out at -1 (the global minimum); the other ``M - 1``
    bottom values are drawn from ``[-1 + gap, -1 + gap + 0.5]``. When the
    wells cannot be placed disjointly, every radius shrinks by 0.7 and
    placement is retried; radii below 1e-3 raise ``ConfigError``.
    """
    if M < 2:
        raise ConfigError("generated functions need n_minima >= 2")
    if d < 1:
        raise ConfigError("generated functions need d >= 1")
    if not (gap > 0 and math.isfinite(gap)):
        raise ConfigError("gap must be a positive finite number")
    if smoothness not in ("C2", "C0"):
        raise ConfigError(f"smoothness must be 'C2' or 'C0', got {smoothness!r}")

    rng = make_rng(derive_seed(int(seed), "generated", d, M))
    vertex = rng.uniform(-1.0, 1.0, d)
    values = np.empty(M)
    values[0] = GLOBAL_VALUE
    values[1:] = GLOBAL_VALUE + gap + LOCAL_SPREAD * rng.random(M - 1)
    base_value = float(values.max() + BASE_MARGIN)
    order = rng.permutation(M)
    values = values[order]
    global_index = int(np.argmin(values))

    # cover about a third of the box in total, with some spread between wells
    rho0 = 0.5 * (1.0 / M) ** (1.0 / d)
    radii = rho0 * rng.uniform(0.5, 1.0, M)
    while True:
        if radii.min() < MIN_RADIUS:
            raise ConfigError(f"could not place {M} separated wells in dimension {d}")
        centers = _place(rng, radii, d)
        if centers is not None:
            break
        radii = radii * SHRINK

    return GeneratedFunction(
        seed=int(seed),
        dim=d,
        n_minima=M,
        gap=float(gap),
        smoothness=smoothness,
        vertex=vertex,
        base_value=base_value,
        centers=centers,
        radii=radii,
        values=values,
        global_index=global_index,
    )
