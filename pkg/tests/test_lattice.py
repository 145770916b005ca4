from __future__ import annotations

import math

import numpy as np
import pytest

from rdpdmp.errors import IndexOutOfRange, InsufficientSamples
from rdpdmp.lattice import (
    Grid,
    beta,
    discrete_laplacian,
    eigenpairs,
    heat_semigroup,
    inner,
    macro_weights,
    macrosite_of,
    norms,
    project,
)
from rdpdmp.network import WeightFunction


def test_grid_requires_divisibility():
    with pytest.raises(ValueError):
        Grid(15, 4)
    g = Grid(16, 4)
    assert g.sites_per_macro == 4
    assert g.macro_range(2) == (5, 8)


def test_macrosite_of():
    g = Grid(16, 4)
    assert macrosite_of(1, g) == 1
    assert macrosite_of(4, g) == 1
    assert macrosite_of(5, g) == 2
    assert macrosite_of(16, g) == 4
    with pytest.raises(IndexOutOfRange):
        macrosite_of(0, g)
    with pytest.raises(IndexOutOfRange):
        macrosite_of(17, g)
    assert np.array_equal(g.macro_index() + 1, [macrosite_of(j, g) for j in range(1, 17)])


def test_projection_examples():
    assert np.allclose(project(lambda x: 3.0 + 0 * x, Grid(8)), 3.0)
    assert np.allclose(project(np.polynomial.Polynomial([0, 1]), Grid(2)), [0.25, 0.75], atol=1e-15)
    assert np.allclose(project(lambda x: x, Grid(2)), [0.25, 0.75], rtol=1e-12)


def test_projection_smooth_accuracy():
    g = Grid(16)
    got = project(lambda x: np.sin(2 * np.pi * x), g)
    e = g.edges
    exact = 16 * (np.cos(2 * np.pi * e[:-1]) - np.cos(2 * np.pi * e[1:])) / (2 * np.pi)
    assert np.allclose(got, exact, rtol=0, atol=1e-7)


def test_projection_from_samples():
    g = Grid(4)
    x = np.arange(33) / 32
    assert np.allclose(project(x**2, g), project(lambda t: t**2, g), rtol=1e-12)
    with pytest.raises(InsufficientSamples):
        project(np.zeros(17), g)


def test_projection_idempotent():
    g = Grid(32)
    pf = project(lambda x: np.exp(np.sin(2 * np.pi * x)), g)
    assert np.array_equal(project(pf, g), pf)


@pytest.mark.parametrize("n", [8, 16, 32, 64])
def test_projection_convergence_rate(n):
    g = Grid(n)
    pf = project(lambda x: np.sin(2 * np.pi * x), g)
    xs = np.linspace(0, 1, 4001)[1:]
    idx = np.ceil(xs * n).astype(int) - 1
    err = np.max(np.abs(pf[idx] - np.sin(2 * np.pi * xs)))
    assert err <= 2 * np.pi / n


def test_laplacian_examples():
    assert np.allclose(discrete_laplacian(np.full(8, 2.5)), 0.0)
    assert np.array_equal(discrete_laplacian(np.array([1.0, 0, 0, 0])), 16 * np.array([-2.0, 1, 0, 1]))


def test_laplacian_symmetry_and_conservation():
    rng = np.random.default_rng(3)
    for n in (5, 16, 33):
        f, g = rng.normal(size=n), rng.normal(size=n)
        lhs, rhs = inner(discrete_laplacian(f), g), inner(f, discrete_laplacian(g))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10 * n * n)
        assert abs(discrete_laplacian(f).sum()) <= 1e-9 * n * n * np.max(np.abs(f))


def test_eigen_examples():
    assert beta(2, 4) == pytest.approx(32.0)
    pairs = eigenpairs(Grid(4))
    assert pairs[0].beta == 0.0 and np.allclose(pairs[0].vector, 1.0)
    assert [p.kind for p in pairs] == ["constant", "cos", "sin", "alternating"]


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7, 8, 12, 16])
def test_eigenpairs_form_orthonormal_basis(n):
    pairs = eigenpairs(Grid(n))
    assert len(pairs) == n
    V = np.array([p.vector for p in pairs])
    assert np.allclose(V @ V.T / n, np.eye(n), atol=1e-12)
    for p in pairs:
        assert p.beta == 2 * n * n * (1 - math.cos(math.pi * p.m / n)) or p.beta == 0.0
        assert np.max(np.abs(discrete_laplacian(p.vector) + p.beta * p.vector)) <= 1e-8 * max(p.beta, 1.0)


def test_heat_semigroup_trivial_cases():
    v = np.random.default_rng(0).random(16)
    assert np.array_equal(heat_semigroup(v, 0.0), v)
    assert np.allclose(heat_semigroup(np.full(16, 0.3), 0.7), 0.3)
    assert np.allclose(heat_semigroup(np.full(12, 0.3), 0.7), 0.3)


def test_heat_semigroup_matches_eigen_sum():
    rng = np.random.default_rng(5)
    v = rng.random(16)
    g = Grid(16)
    direct = sum(math.exp(-p.beta * 0.01) * inner(v, p.vector) * p.vector for p in eigenpairs(g))
    assert np.allclose(heat_semigroup(v, 0.01), direct, atol=1e-12)


def test_heat_semigroup_commutes_with_laplacian():
    rng = np.random.default_rng(6)
    for n in (16, 10):
        f = rng.random(n)
        a = heat_semigroup(discrete_laplacian(f), 0.003)
        b = discrete_laplacian(heat_semigroup(f, 0.003))
        assert np.allclose(a, b, rtol=1e-8, atol=1e-8 * np.max(np.abs(a)))


def test_heat_semigroup_rejects_negative_time():
    with pytest.raises(ValueError):
        heat_semigroup(np.ones(4), -1.0)


def test_macro_weights_examples():
    g8 = Grid(8)
    a = macro_weights(WeightFunction.constant(), g8, kind="a")
    assert np.allclose(a, 1 / 8) and a.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(macro_weights(WeightFunction.constant(), Grid(5), kind="b"), 1.0)
    assert np.allclose(macro_weights(WeightFunction((0.0, 2.0)), Grid(2), kind="a"), [0.25, 0.75])
    part = macro_weights(WeightFunction.constant(), Grid(8, 2), ell=2, kind="a")
    assert part.shape == (4,) and part.sum() == pytest.approx(0.5)


def test_norms_examples():
    assert norms(np.full(4, -2.0)) == pytest.approx((2.0, 2.0))
    e = np.zeros(9)
    e[3] = 3.0  # sqrt(N) times an indicator
    assert norms(e)[1] == pytest.approx(1.0)
    assert norms(np.zeros(5)) == (0.0, 0.0)
