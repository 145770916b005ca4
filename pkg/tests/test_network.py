from __future__ import annotations

import numpy as np
import pytest

from rdpdmp.errors import (
    BadArity,
    BadStoichiometry,
    MixedFastWithDJump,
    NegativeRate,
    NegativeRateAtRuntime,
    NetworkError,
    UnnormalizedWeight,
)
from rdpdmp.network import (
    NetworkSpec,
    RatePolynomial,
    Reaction,
    ReactionClass,
    TruncationSpec,
    WeightFunction,
    debit_F,
    eval_rate,
    linear_spec,
    toggle_field,
    validate_network,
)

RC, S1, RDC, RD = ReactionClass.RC, ReactionClass.S1, ReactionClass.RDC_SLOW, ReactionClass.RD


def poly(*triples):
    return RatePolynomial.from_triples(triples)


def net_of(*reactions, **kw):
    return validate_network(NetworkSpec(list(reactions), **kw))


def test_pure_birth_is_valid():
    net = net_of(Reaction(RC, 1, 0, RatePolynomial.constant(2.0)))
    assert len(net.reactions) == 1
    assert net.fast == [0] and net.slow == []


def test_s1_with_d_jump_is_rejected():
    with pytest.raises(MixedFastWithDJump):
        net_of(Reaction(S1, -1, 1, poly((1, 1, 1.0))))


def test_weight_normalization():
    good = Reaction(RDC, -1, 1, poly((1, 0, 1.0), (1, 1, -1.0)), WeightFunction((0.0, 2.0)), WeightFunction.constant())
    net_of(good)
    bad = Reaction(RDC, -1, 1, poly((1, 0, 1.0), (1, 1, -1.0)), WeightFunction((0.0, 1.0)), WeightFunction.constant())
    with pytest.raises(UnnormalizedWeight):
        net_of(bad)


def test_weight_normalize_flag_rescales():
    r = Reaction(RDC, 0, 1, poly((1, 0, 1.0), (1, 1, -1.0)), WeightFunction((0.0, 1.0), normalize=True),
                 WeightFunction.constant())
    net = net_of(r)
    assert net.reactions[0].a_weight.integral(0.0, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_missing_weights_rejected():
    with pytest.raises(UnnormalizedWeight):
        net_of(Reaction(RDC, 0, 1, poly((1, 0, 1.0), (1, 1, -1.0))))


def test_arity_checks():
    with pytest.raises(BadArity):
        net_of(Reaction(RC, 1, 0, poly((0, 1, 1.0))))
    with pytest.raises(BadArity):
        net_of(Reaction(RD, 0, -1, poly((1, 1, 1.0))))


def test_stoichiometry_checks():
    with pytest.raises(BadStoichiometry):
        net_of(Reaction(RD, 1, -1, poly((0, 1, 1.0))))
    with pytest.raises(BadStoichiometry):
        net_of(Reaction(RD, 0, 0, poly((0, 1, 1.0))))


def test_negative_rate_reports_point():
    with pytest.raises(NegativeRate) as info:
        net_of(Reaction(RC, 1, 0, poly((0, 0, 1.0), (1, 0, -1.0))), u_max=5.0)
    assert info.value.point is not None
    y1, _ = info.value.point
    assert 1.0 - y1 < 0


def test_all_violations_are_listed():
    with pytest.raises(NetworkError) as info:
        net_of(Reaction(S1, -1, 1, poly((1, 1, 1.0))), Reaction(RC, 1, 0, poly((0, 1, 1.0))))
    kinds = {type(v) for v in info.value.violations}
    assert MixedFastWithDJump in kinds and BadArity in kinds


def test_eval_rate_examples():
    sq = Reaction(RC, -1, 0, poly((2, 0, 1.0)))
    assert eval_rate(sq, 3.0) == 9.0
    # |y|^2 / n^2 = 9 / 2 >= 2 puts y outside the bump's support
    assert eval_rate(sq, 3.0, trunc=TruncationSpec(np.sqrt(2.0))) == 0.0
    mixed = Reaction(S1, -1, 0, poly((1, 1, 1.0)))
    assert eval_rate(mixed, 1.5, 2) == pytest.approx(3.0)


def test_eval_rate_negative_at_runtime():
    r = Reaction(RC, 1, 0, poly((0, 0, 1.0), (1, 0, -1.0)))
    with pytest.raises(NegativeRateAtRuntime):
        eval_rate(r, 2.0)


def test_truncation_is_identity_inside_unit_ball():
    r = Reaction(S1, -1, 0, poly((1, 1, 2.0), (2, 0, 0.5)))
    trunc = TruncationSpec(10.0)
    rng = np.random.default_rng(1)
    for _ in range(200):
        y1 = rng.uniform(0, 7)
        y2 = float(rng.integers(0, 7))
        if y1 * y1 + y2 * y2 <= 100.0:
            assert eval_rate(r, y1, y2, trunc) == eval_rate(r, y1, y2)


def test_truncation_profile_bounds():
    s = np.linspace(0, 3, 301)
    eta = TruncationSpec.eta(s)
    assert np.all((eta >= 0) & (eta <= 1))
    assert np.all(eta[s <= 1] == 1.0) and np.all(eta[s >= 2] == 0.0)
    assert np.all(np.diff(eta) <= 0)


def test_debit_examples():
    net = validate_network(linear_spec(2.0, 1.0))
    assert debit_F(0.5, 0, net) == pytest.approx(1.5)
    empty = net_of()
    assert debit_F(0.7, 1, empty) == 0.0
    rep = net_of(Reaction(S1, -1, 0, poly((1, 1, 1.0))), d_max=3)
    assert debit_F(1.0, 3, rep) == pytest.approx(-3.0)


def test_debit_derivative_matches_finite_difference():
    net = toggle_field()
    rng = np.random.default_rng(7)
    coeff = {}
    for i in net.fast:
        r = net.reactions[i]
        for a, b, c in r.rate.terms:
            coeff[(a, b)] = coeff.get((a, b), 0.0) + r.gamma_c * c
    for _ in range(100):
        y1 = rng.uniform(0.1, 5.0)
        y2 = int(rng.integers(0, 2))
        exact = sum(c * a * y1 ** (a - 1) * y2**b for (a, b), c in coeff.items() if a > 0)
        h = 1e-6 * max(1.0, y1)
        fd = (debit_F(y1 + h, y2, net) - debit_F(y1 - h, y2, net)) / (2 * h)
        assert fd == pytest.approx(exact, rel=1e-8, abs=1e-8)


def test_rates_nonnegative_on_box():
    net = toggle_field()
    u = np.linspace(0, net.u_max, 41)
    for r in net.reactions:
        for d in range(net.d_max + 1):
            assert np.all(eval_rate(r, u, d) >= 0)


def test_assumption_warnings():
    quiet = toggle_field()
    assert not quiet.warnings
    growing = validate_network(NetworkSpec([Reaction(RC, 1, 0, RatePolynomial.constant(1.0))], rho1=1.0))
    assert any("rho1" in w for w in growing.warnings)
    empty = net_of()
    assert any("identically zero" in w for w in empty.warnings)


def test_slow_rate_not_vanishing_is_warned():
    r = Reaction(RD, 0, -1, RatePolynomial.constant(1.0))
    net = net_of(r)
    assert any("negative" in w for w in net.warnings)


def test_dict_round_trip():
    net = toggle_field()
    again = validate_network(net.to_dict())
    assert again == net


def test_preset_by_name():
    net = validate_network({"preset": "toggle_field", "params": {"c": 3.0}})
    act = [r for r in net.reactions if r.name == "activation"][0]
    assert act.rate(1.0, 0) == pytest.approx(3.0)
