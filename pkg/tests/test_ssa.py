from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from rdpdmp.errors import EventBudgetExceeded, ExtinctTotal, NegativeInitial, NegativityBreach
from rdpdmp.lattice import Grid, heat_semigroup
from rdpdmp.network import (
    NetworkSpec,
    RatePolynomial,
    Reaction,
    ReactionClass,
    WeightFunction,
    diffusion_only_spec,
    linear_spec,
    toggle_field,
    validate_network,
)
from rdpdmp.ssa import (
    RecorderSpec,
    init_state,
    make_rng,
    positivity_guard,
    propensities_from_scratch,
    simulate,
    step,
    total_propensity,
)


def net_of(*reactions, **kw):
    return validate_network(NetworkSpec(list(reactions), **kw))


def consumer(guard_weight=1.0):
    """RDC reaction removing ``guard_weight`` molecules per site when it fires."""
    return net_of(
        Reaction(
            ReactionClass.RDC_SLOW, -1, 1, RatePolynomial.from_triples([(1, 0, 5.0), (1, 1, -5.0)]),
            WeightFunction.constant(), WeightFunction.constant(guard_weight),
        ),
        d_max=1,
    )


def test_init_state_examples():
    s = init_state(lambda x: 1.0 + 0 * x, [0], Grid(8), 100)
    assert np.all(s.X == 100)
    s = init_state(lambda x: x, [0], Grid(2), 4)
    assert list(s.X) == [1, 3]
    s = init_state(lambda x: 1.0 + 0 * x, (0, 1, 0, 1), Grid(8, 4), 10)
    assert list(s.u_d) == [0, 1, 0, 1]
    with pytest.raises(NegativeInitial):
        init_state(lambda x: x - 0.5, [0], Grid(8), 10)


def test_init_state_rounding_bound():
    g = Grid(16)
    f = lambda x: 1 + 0.5 * np.sin(2 * np.pi * x)
    from rdpdmp.lattice import project

    s = init_state(f, [0], g, 37)
    assert np.max(np.abs(s.u_c - project(f, g))) <= 0.5 / 37 + 1e-15


def test_step_diffusion_conserves_molecules():
    net = validate_network(diffusion_only_spec())
    s = init_state(lambda x: 1 + x, [0], Grid(16), 20, net)
    rng = make_rng(1)
    total = s.X.sum()
    for _ in range(2000):
        ev, s = step(s, rng)
        assert ev.kind in ("DiffLeft", "DiffRight") and 1 <= ev.index <= 16
        assert s.X.sum() == total and s.X.min() >= 0


def test_step_waiting_time_is_exponential():
    net = net_of(Reaction(ReactionClass.RD, 0, 1, RatePolynomial.constant(2.0)), d_max=1)
    s = init_state(lambda x: 0 * x, [0], Grid(1), 10, net)
    rng = make_rng(2)
    times = np.empty(10_000)
    last = 0.0
    for i in range(times.size):
        ev, s = step(s, rng)
        times[i] = ev.t - last
        last = ev.t
    assert ev.kind == "SlowPure" and s.D[0] == times.size
    assert stats.kstest(times, "expon", args=(0, 0.5)).pvalue > 0.01


def test_pure_birth_count():
    a, n, mu, t = 1.5, 8, 10.0, 0.5
    net = net_of(Reaction(ReactionClass.RC, 1, 0, RatePolynomial.constant(a)))
    s0 = init_state(lambda x: 0 * x, [0], Grid(n), mu, net)
    births = np.array([simulate(s0, t, RecorderSpec(t), make_rng(3, i)).X[-1].sum() for i in range(500)])
    expected = n * mu * a * t
    assert abs(births.mean() - expected) <= 3 * np.sqrt(expected / births.size)


def test_extinct_state_raises():
    s = init_state(lambda x: 0 * x, [0], Grid(4), 10, validate_network(diffusion_only_spec()))
    with pytest.raises(ExtinctTotal):
        step(s, make_rng(0))
    assert total_propensity(s) == 0.0


def test_total_propensity_single_channel():
    net = net_of(Reaction(ReactionClass.RD, 0, 1, RatePolynomial.constant(0.7)), d_max=5)
    s = init_state(lambda x: 0 * x, [0], Grid(1), 10, net)
    assert total_propensity(s) == pytest.approx(0.7)


def test_positivity_guard_examples():
    g = Grid(8, 2)
    producer = net_of(
        Reaction(
            ReactionClass.RDC_SLOW, 1, 1, RatePolynomial.from_triples([(0, 0, 1.0), (0, 1, -1.0)]),
            WeightFunction.constant(), WeightFunction.constant(),
        ),
        d_max=1,
    )
    s = init_state(lambda x: 0 * x, [0, 0], g, 10, producer)
    assert positivity_guard(s, 0, 1) == 1
    s = init_state(lambda x: 1 + 0 * x, [0, 0], g, 10, consumer())
    s.X[1] = 0
    assert positivity_guard(s, 0, 1) == 0
    assert positivity_guard(s, 0, 2) == 1


def test_guard_off_allows_breach():
    g = Grid(4, 1)
    net = consumer(guard_weight=30.0)
    s = init_state(lambda x: 1 + 0 * x, [0], g, 3, net, guard=False)
    s.X[:] = [0, 0, 0, 40]
    with pytest.raises(NegativityBreach):
        simulate(s, 5.0, RecorderSpec(1.0), make_rng(4), kernel="direct")
    guarded = init_state(lambda x: 1 + 0 * x, [0], g, 3, net, guard=True)
    guarded.X[:] = [0, 0, 0, 40]
    traj = simulate(guarded, 5.0, RecorderSpec(1.0), make_rng(4), kernel="direct")
    assert traj.X.min() >= 0 and np.all(traj.D == 0)


def test_slow_mixed_jump_is_quantized():
    g = Grid(4, 1)
    net = consumer(guard_weight=2.6)
    s = init_state(lambda x: 1 + 0 * x, [0], g, 10, net)
    assert np.array_equal(s.model.bq[0], [-3, -3, -3, -3])
    traj = simulate(s, 2.0, RecorderSpec(2.0), make_rng(5), kernel="direct")
    ev = traj.events
    assert ev["t"].size == 1 and ev["l"][0] == 1 and ev["r"][0] == 0 and ev["gamma_d"][0] == 1
    assert traj.X[-1].sum() == 40 - 12


def test_zero_network_is_constant():
    s = init_state(lambda x: 0 * x, [1, 0], Grid(8, 2), 10, net_of())
    traj = simulate(s, 1.0, RecorderSpec(0.1), make_rng(0))
    assert traj.times.size == 11
    assert np.all(traj.X == 0) and np.all(traj.D == [1, 0])
    assert traj.times[-1] == 1.0


@pytest.mark.parametrize("kernel", ["thinning", "direct"])
def test_diffusion_mean_matches_heat_semigroup(kernel):
    g = Grid(32)
    net = validate_network(diffusion_only_spec())
    s0 = init_state(lambda x: 1 + np.cos(2 * np.pi * x), [0], g, 100, net)
    t = 0.02
    finals = np.array([simulate(s0, t, RecorderSpec(t), make_rng(6, i), kernel=kernel).u_c[-1] for i in range(200)])
    oracle = heat_semigroup(s0.u_c, t)
    se = finals.std(axis=0, ddof=1) / np.sqrt(finals.shape[0])
    assert np.mean(np.abs(finals.mean(axis=0) - oracle) <= 3 * se) >= 0.9
    assert np.allclose(finals.sum(axis=1), s0.u_c.sum(), rtol=0, atol=1e-9)


@pytest.mark.parametrize("kernel", ["thinning", "direct"])
def test_determinism(kernel):
    net = toggle_field()
    s0 = init_state(lambda x: 1 + 0.5 * np.sin(2 * np.pi * x), [0, 1, 0, 1], Grid(16, 4), 50, net)
    a = simulate(s0, 0.5, RecorderSpec(0.05), make_rng(9, 3), kernel=kernel)
    b = simulate(s0, 0.5, RecorderSpec(0.05), make_rng(9, 3), kernel=kernel)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.D, b.D)
    assert np.array_equal(a.events["t"], b.events["t"])
    c = simulate(s0, 0.5, RecorderSpec(0.05), make_rng(9, 4), kernel=kernel)
    assert not np.array_equal(a.X, c.X)


def test_incremental_propensities_match_recomputation():
    net = toggle_field()
    s = init_state(lambda x: 1 + 0.5 * np.sin(2 * np.pi * x), [0, 1, 0, 1], Grid(8, 4), 5, net)
    rng = make_rng(10)
    for i in range(20_000):
        _, s = step(s, rng)
        if i % 997 == 0:
            fast, slow, diff = propensities_from_scratch(s)
            ref = fast.sum() + slow.sum() + diff
            assert total_propensity(s) == pytest.approx(ref, rel=1e-9)
            assert s.X.min() >= 0 and s.D.min() >= 0


def test_event_log_records_only_discrete_jumps():
    net = toggle_field()
    s0 = init_state(lambda x: 1 + 0 * x, [0, 1, 0, 1], Grid(16, 4), 50, net)
    traj = simulate(s0, 1.0, RecorderSpec(0.1), make_rng(11))
    ev = traj.events
    assert ev["t"].size > 0
    assert np.all(np.diff(ev["t"]) >= 0)
    assert set(np.unique(ev["kind"])) <= {2, 3}
    assert ev["l"].min() >= 1 and ev["l"].max() <= 4
    d = np.array([0, 1, 0, 1])
    for l, gd in zip(ev["l"], ev["gamma_d"]):
        d[l - 1] += gd
    assert np.array_equal(d, traj.D[-1])


def test_positivity_over_many_seeds():
    net = toggle_field()
    s0 = init_state(lambda x: 1 + 0.5 * np.sin(2 * np.pi * x), [0, 1, 0, 1], Grid(16, 4), 20, net)
    for seed in range(200):
        traj = simulate(s0, 0.3, RecorderSpec(0.05), make_rng(seed))
        assert traj.X.min() >= 0 and traj.D.min() >= 0 and traj.D.max() <= 1


def test_event_budget_returns_partial():
    net = validate_network(linear_spec())
    s0 = init_state(lambda x: 1 + 0 * x, [0], Grid(8), 50, net)
    with pytest.raises(EventBudgetExceeded) as info:
        simulate(s0, 1.0, RecorderSpec(0.1), make_rng(12), max_events=10, kernel="direct")
    partial = info.value.partial
    assert partial.truncated and partial.n_events <= 10
    assert partial.times.size < 11
