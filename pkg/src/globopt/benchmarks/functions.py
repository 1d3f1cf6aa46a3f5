"""Analytical test functions, vectorized over leading axes.

Every function takes ``x`` of shape ``(..., d)`` and returns shape ``(...)``.
"""
from __future__ import annotations

import numpy as np

PI = np.pi


def _idx(d):
    return np.arange(1, d + 1, dtype=float)


# unimodal


def sphere(x):
    return np.sum(x**2, axis=-1)


def ellipsoid(x):
    d = x.shape[-1]
    if d == 1:
        return x[..., 0] ** 2
    scale = 10.0 ** (6.0 * np.arange(d) / (d - 1))
    return np.sum(scale * x**2, axis=-1)


def bentcigar(x):
    return x[..., 0] ** 2 + 1e6 * np.sum(x[..., 1:] ** 2, axis=-1)


def hyperellipsoid(x):
    return np.sum(np.cumsum(x**2, axis=-1), axis=-1)


def zakharov(x):
    s = np.sum(0.5 * _idx(x.shape[-1]) * x, axis=-1)
    return np.sum(x**2, axis=-1) + s**2 + s**4


def trid(x):
    return np.sum((x - 1.0) ** 2, axis=-1) - np.sum(x[..., 1:] * x[..., :-1], axis=-1)


def sumpow(x):
    return np.sum(np.abs(x) ** (_idx(x.shape[-1]) + 1.0), axis=-1)


def rosenbrock(x):
    return np.sum(100.0 * (x[..., 1:] - x[..., :-1] ** 2) ** 2 + (x[..., :-1] - 1.0) ** 2, axis=-1)


def dixonprice(x):
    i = _idx(x.shape[-1])[1:]
    return (x[..., 0] - 1.0) ** 2 + np.sum(i * (2.0 * x[..., 1:] ** 2 - x[..., :-1]) ** 2, axis=-1)


# multimodal


def rastrigin(x):
    d = x.shape[-1]
    return 10.0 * d + np.sum(x**2 - 10.0 * np.cos(2.0 * PI * x), axis=-1)


def ackley(x, a=20.0, b=0.2, c=2.0 * PI):
    d = x.shape[-1]
    s1 = np.sqrt(np.sum(x**2, axis=-1) / d)
    s2 = np.sum(np.cos(c * x), axis=-1) / d
    return -a * np.exp(-b * s1) - np.exp(s2) + a + np.e


SCHWEFEL_OFFSET = 418.9829


def schwefel(x):
    d = x.shape[-1]
    return SCHWEFEL_OFFSET * d - np.sum(x * np.sin(np.sqrt(np.abs(x))), axis=-1)


def levy(x):
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(PI * w[..., 0]) ** 2
    mid = np.sum((w[..., :-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(PI * w[..., :-1] + 1.0) ** 2), axis=-1)
    tail = (w[..., -1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * PI * w[..., -1]) ** 2)
    return head + mid + tail


MICHALEWICZ_M = 10


def michalewicz(x, m=MICHALEWICZ_M):
    i = _idx(x.shape[-1])
    return -np.sum(np.sin(x) * np.sin(i * x**2 / PI) ** (2 * m), axis=-1)


LANGERMANN_A = np.array([[3.0, 5.0], [5.0, 2.0], [2.0, 1.0], [1.0, 4.0], [7.0, 9.0]])
LANGERMANN_C = np.array([1.0, 2.0, 5.0, 2.0, 3.0])


def langermann_matrix(d):
    """Standard 5x2 matrix, columns cycled for ``d > 2``."""
    return LANGERMANN_A[:, np.arange(d) % 2]


def langermann(x):
    A = langermann_matrix(x.shape[-1])
    r2 = np.sum((x[..., None, :] - A) ** 2, axis=-1)
    return np.sum(LANGERMANN_C * np.exp(-r2 / PI) * np.cos(PI * r2), axis=-1)


def deb(x):
    return -np.mean(np.sin(5.0 * PI * x) ** 6, axis=-1)


def griewank(x):
    i = _idx(x.shape[-1])
    return 1.0 + np.sum(x**2, axis=-1) / 4000.0 - np.prod(np.cos(x / np.sqrt(i)), axis=-1)


def styblinski_tang(x):
    return 0.5 * np.sum(x**4 - 16.0 * x**2 + 5.0 * x, axis=-1)


FUNCTIONS = {
    "sphere": sphere,
    "ellipsoid": ellipsoid,
    "bentcigar": bentcigar,
    "hyperellipsoid": hyperellipsoid,
    "zakharov": zakharov,
    "trid": trid,
    "sumpow": sumpow,
    "rosenbrock": rosenbrock,
    "dixonprice": dixonprice,
    "rastrigin": rastrigin,
    "ackley": ackley,
    "schwefel": schwefel,
    "levy": levy,
    "michalewicz": michalewicz,
    "langermann": langermann,
    "deb": deb,
    "griewank": griewank,
    "styblinski_tang": styblinski_tang,
}
