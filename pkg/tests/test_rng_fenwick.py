from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from rdpdmp._fenwick import build, fw_add, fw_find, fw_prefix, fw_total
from rdpdmp._rng import fill_poisson, fill_uniform, new_stream, replicate_generator, replicate_key


def test_streams_are_deterministic_and_distinct():
    a = np.empty(1000)
    b = np.empty(1000)
    fill_uniform(new_stream(replicate_key(1, 0)), a)
    fill_uniform(new_stream(replicate_key(1, 0)), b)
    assert np.array_equal(a, b)
    fill_uniform(new_stream(replicate_key(1, 1)), b)
    assert not np.array_equal(a, b)
    assert replicate_key(1, 0, stream=2) != replicate_key(1, 0)


def test_stream_resumes_from_counter():
    full = np.empty(10)
    fill_uniform(new_stream(99, 0), full)
    tail = np.empty(5)
    fill_uniform(new_stream(99, 5), tail)
    assert np.array_equal(full[5:], tail)


def test_uniform_distribution():
    u = np.empty(20000)
    fill_uniform(new_stream(replicate_key(3, 0)), u)
    assert np.all((u >= 0) & (u < 1))
    assert stats.kstest(u, "uniform").pvalue > 0.001


@pytest.mark.parametrize("lam", [0.3, 4.0, 25.0, 400.0])
def test_poisson_moments(lam):
    out = np.empty(20000, dtype=np.int64)
    fill_poisson(new_stream(replicate_key(4, int(lam * 10))), lam, out)
    se = np.sqrt(lam / out.size)
    assert abs(out.mean() - lam) < 4 * se
    assert out.var() == pytest.approx(lam, rel=0.08)


def test_replicate_generator_reproducible():
    assert replicate_generator(5, 2).random() == replicate_generator(5, 2).random()


def test_fenwick_prefix_and_find():
    rng = np.random.default_rng(0)
    leaves = rng.random(13)
    leaves[4] = 0.0
    tree = build(leaves)
    assert fw_total(tree) == pytest.approx(leaves.sum())
    for i in range(14):
        assert fw_prefix(tree, i) == pytest.approx(leaves[:i].sum())
    cum = np.cumsum(leaves)
    for w in rng.random(200) * leaves.sum():
        i, res = fw_find(tree, leaves, w)
        assert i == int(np.searchsorted(cum, w, side="right"))
        assert 0 <= res < leaves[i]


def test_fenwick_updates():
    leaves = np.array([1.0, 2.0, 3.0])
    tree = build(leaves)
    fw_add(tree, 1, -2.0)
    leaves[1] = 0.0
    assert fw_total(tree) == pytest.approx(4.0)
    assert fw_find(tree, leaves, 1.5)[0] == 2


def test_fenwick_selection_frequencies():
    leaves = np.array([1.0, 0.0, 3.0])
    tree = build(leaves)
    picks = [fw_find(tree, leaves, w)[0] for w in np.random.default_rng(1).random(4000) * 4.0]
    counts = np.bincount(picks, minlength=3)
    assert counts[1] == 0
    assert counts[2] / 4000 == pytest.approx(0.75, abs=0.03)
