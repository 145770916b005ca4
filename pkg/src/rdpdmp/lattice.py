"""Periodic 1-D lattice: sites, macrosites, projection, discrete Laplacian.

Sites are ``I_j = ((j-1)/N, j/N]`` for ``j = 1..N``; public functions take
1-based indices and store fields as 0-based numpy arrays. The inner product
is ``<f, g> = N^-1 sum f_j g_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import IndexOutOfRange, InsufficientSamples
from .network import WeightFunction

SIMPSON_PANELS = 8


@dataclass(frozen=True)
class Grid:
    n_sites: int
    n_macro: int = 1

    def __post_init__(self):
        if self.n_sites < 1 or self.n_macro < 1:
            raise ValueError("grid sizes must be positive")
        if self.n_sites % self.n_macro:
            raise ValueError(f"N={self.n_sites} is not a multiple of k={self.n_macro}")

    @property
    def site_length(self) -> float:
        return 1.0 / self.n_sites

    @property
    def sites_per_macro(self) -> int:
        return self.n_sites // self.n_macro

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n_sites + 1) / self.n_sites

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_sites) + 0.5) / self.n_sites

    def macro_index(self) -> np.ndarray:
        """0-based macrosite of every 0-based site."""
        return np.arange(self.n_sites) // self.sites_per_macro

    def macro_range(self, ell: int) -> tuple[int, int]:
        """1-based inclusive site range of macrosite ``ell``."""
        if not 1 <= ell <= self.n_macro:
            raise IndexOutOfRange(f"macrosite {ell} outside 1..{self.n_macro}")
        m = self.sites_per_macro
        return (ell - 1) * m + 1, ell * m


@dataclass(frozen=True)
class EigenPair:
    m: int
    kind: str  # "constant", "cos", "sin" or "alternating"
    beta: float
    vector: np.ndarray


def macrosite_of(j: int, grid: Grid) -> int:
    """``ceil(j k / N)`` for a 1-based site index."""
    if not 1 <= j <= grid.n_sites:
        raise IndexOutOfRange(f"site {j} outside 1..{grid.n_sites}")
    return -(-j * grid.n_macro // grid.n_sites)


def _simpson_site_means(f: Callable, grid: Grid) -> np.ndarray:
    n = grid.n_sites
    p = SIMPSON_PANELS
    x = np.arange(n * p + 1) / (n * p)
    y = np.asarray(f(x), dtype=float) * np.ones_like(x)
    return _simpson_from_samples(y, n, p)


def _simpson_from_samples(y: np.ndarray, n: int, p: int) -> np.ndarray:
    # y sampled at i / (n p), i = 0..n p; p even panels per site
    w = np.ones(p + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    idx = np.arange(n)[:, None] * p + np.arange(p + 1)[None, :]
    return (y[idx] @ w) / (3.0 * p)


def project(f, grid: Grid) -> np.ndarray:
    """Canonical projection: entry j is ``N * integral of f over I_j``.

    ``f`` may be a callable, a ``numpy.polynomial.Polynomial`` (integrated
    exactly), a length-N array (already a lattice field; returned as is), or
    dense samples at ``x_i = i/L`` for ``i = 0..L`` with ``L >= 8N``,
    ``L % N == 0`` and ``L/N`` even.
    """
    n = grid.n_sites
    if isinstance(f, np.polynomial.Polynomial):
        anti = f.integ()
        return n * np.diff(anti(grid.edges))
    if isinstance(f, WeightFunction):
        return n * np.diff(f.poly.integ()(grid.edges))
    if callable(f):
        return _simpson_site_means(f, grid)
    y = np.asarray(f, dtype=float)
    if y.ndim != 1:
        raise InsufficientSamples("samples must be one-dimensional")
    if y.size == n:
        return y.copy()
    L = y.size - 1
    if L < 8 * n or L % n or (L // n) % 2:
        raise InsufficientSamples(
            f"need samples at i/L, i=0..L with L >= {8 * n}, L multiple of N and L/N even; got {y.size} samples"
        )
    return _simpson_from_samples(y, n, L // n)


def discrete_laplacian(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = v.size
    return n * n * (np.roll(v, 1) - 2.0 * v + np.roll(v, -1))


def beta(m: int, n: int) -> float:
    return 2.0 * n * n * (1.0 - math.cos(math.pi * m / n))


def eigenpairs(grid: Grid) -> list[EigenPair]:
    """Orthonormal eigenbasis of the periodic Laplacian.

    Modes are indexed as ``cos(pi m j / N)`` and ``sin(pi m j / N)`` with m
    even; for even N the alternating mode ``cos(pi j)`` (m = N) closes the
    basis. Ordered by m, cosine before sine.
    """
    n = grid.n_sites
    j = np.arange(1, n + 1)
    s2 = math.sqrt(2.0)
    pairs = [EigenPair(0, "constant", 0.0, np.ones(n))]
    m_top = n - 2 if n % 2 == 0 else n - 1
    for m in range(2, m_top + 1, 2):
        b = beta(m, n)
        pairs.append(EigenPair(m, "cos", b, s2 * np.cos(np.pi * m * j / n)))
        pairs.append(EigenPair(m, "sin", b, s2 * np.sin(np.pi * m * j / n)))
    if n % 2 == 0:
        pairs.append(EigenPair(n, "alternating", beta(n, n), np.cos(np.pi * j)))
    return pairs


def inner(f, g) -> float:
    f = np.asarray(f, dtype=float)
    return float(np.dot(f, g) / f.size)


def norms(v) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return 0.0, 0.0
    return float(np.max(np.abs(v))), math.sqrt(inner(v, v))


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def heat_symbol(n: int) -> np.ndarray:
    """``beta`` for every rfft frequency of an n-point periodic grid."""
    q = np.arange(n // 2 + 1)
    return 2.0 * n * n * (1.0 - np.cos(2.0 * np.pi * q / n))


def heat_semigroup(v, t: float, grid: Grid | None = None) -> np.ndarray:
    """``T_N(t) v``: exact spectral solution of ``u' = Delta_N u``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    v = np.asarray(v, dtype=float)
    n = v.size
    if t == 0:
        return v.copy()
    if _is_pow2(n):
        return np.fft.irfft(np.fft.rfft(v) * np.exp(-t * heat_symbol(n)), n)
    out = np.zeros(n)
    for p in eigenpairs(grid or Grid(n)):
        out += math.exp(-p.beta * t) * inner(v, p.vector) * p.vector
    return out


def macro_weights(w: WeightFunction, grid: Grid, ell: int | None = None, kind: str = "a") -> np.ndarray:
    """Per-site weights ``a_j = int_{I_j} a`` or ``b_j = N int_{I_j} b``.

    With ``ell`` given (1-based) only the sites of that macrosite are
    returned; otherwise all N.
    """
    site_int = np.diff(w.poly.integ()(grid.edges))
    if kind == "a":
        vals = site_int
    elif kind == "b":
        vals = grid.n_sites * site_int
    else:
        raise ValueError(f"kind must be 'a' or 'b', got {kind!r}")
    if ell is None:
        return vals
    lo, hi = grid.macro_range(ell)
    return vals[lo - 1 : hi]
