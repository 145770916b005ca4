"""Acceptance gate: one printed PASS/FAIL line per criterion.

Each test computes its criterion at the stated tolerance, prints the line
(also echoed in the pytest terminal summary) and then asserts it. Runtime
limits are part of the criteria and are checked on this machine.

Run alone with ``pytest -v tests/test_acceptance.py`` or
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import hashlib
import math
import time

import numpy as np
import pytest
from scipy import stats

from _models import constant_hazard, linear_hazard, two_channel
from conftest import ACCEPTANCE_LINES
from rdpdmp import analysis as an
from rdpdmp.config import Profile
from rdpdmp.io import trajectory_csv
from rdpdmp.lattice import Grid, beta, discrete_laplacian, eigenpairs, heat_semigroup, norms
from rdpdmp.network import diffusion_only_spec, linear_spec, toggle_field, validate_network
from rdpdmp.pdmp import advance_to_jump, init_pdmp_state, sample_transition
from rdpdmp.ssa import RecorderSpec, init_state, make_rng, simulate

pytestmark = pytest.mark.acceptance

SINE0 = Profile("sine", mean=1.0, amplitude=0.5)
TOGGLE_INIT = an.InitialCondition(SINE0, (0, 1, 0, 1))


def report(n: int, ok: bool, seconds: float, limit: float | None, detail: str) -> bool:
    ok = bool(ok and (limit is None or seconds < limit))
    budget = "no time limit" if limit is None else f"limit {limit:g}s"
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  [{seconds:.1f}s, {budget}]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


# -- 1. spectral exactness ------------------------------------------------------


def test_c1_spectral_exactness():
    t0 = time.perf_counter()
    worst_beta, worst_res = 0.0, 0.0
    for n in (4, 8, 16, 32):
        for p in eigenpairs(Grid(n)):
            exact = beta(p.m, n)
            exact_formula = 2.0 * n * n * (1.0 - math.cos(math.pi * p.m / n))
            assert exact == exact_formula
            rel = abs(p.beta - exact) / exact if exact else abs(p.beta)
            res = float(np.max(np.abs(discrete_laplacian(p.vector) + p.beta * p.vector)))
            worst_beta = max(worst_beta, rel)
            # the m = 0 pair has beta = 0 and needs an exact zero residual
            worst_res = max(worst_res, res / exact if exact else res)
    dt = time.perf_counter() - t0
    ok = worst_beta <= 1e-12 and worst_res <= 1e-8
    assert report(1, ok, dt, 1.0, f"max rel eigenvalue error {worst_beta:.2e} (<=1e-12), "
                                   f"max residual/beta {worst_res:.2e} (<=1e-8)")


# -- 2. semigroup contraction and composition ------------------------------------------


def test_c2_semigroup():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_ratio, worst_comp = 0.0, 0.0
    for _ in range(1000):
        n = int(rng.choice([4, 8, 16, 32, 64, 33]))
        f = rng.normal(size=n) * 10 ** rng.uniform(-3, 3)
        s, t = 10 ** rng.uniform(-6, 0, size=2)
        sup = norms(f)[0]
        worst_ratio = max(worst_ratio, norms(heat_semigroup(f, t))[0] / sup)
        comp = heat_semigroup(heat_semigroup(f, t), s) - heat_semigroup(f, s + t)
        worst_comp = max(worst_comp, float(np.max(np.abs(comp))) / sup)
    dt = time.perf_counter() - t0
    # contraction up to floating-point rounding of the FFT (one part in 1e12)
    ok = worst_ratio <= 1 + 1e-12 and worst_comp <= 1e-10
    assert report(2, ok, dt, 5.0, f"max |T(t)f|/|f| = {worst_ratio:.15f}, "
                                   f"max composition error {worst_comp:.2e} (<=1e-10, relative to |f|)")


# -- 3. SSA conservation ---------------------------------------------------------------


def test_c3_ssa_conservation():
    net = validate_network(diffusion_only_spec())
    grid = Grid(64)
    t0 = time.perf_counter()
    s0 = init_state(SINE0, [0], grid, 100, net)
    total = int(s0.X.sum())
    bad_runs, events, traced = 0, 0, 0
    for seed in range(100):
        # full horizon with snapshots every 0.01
        tr = simulate(s0, 1.0, RecorderSpec(0.01), make_rng(3, seed))
        events += tr.n_events
        sums = tr.X.sum(axis=1)
        if np.any(sums != total) or tr.final.X.sum() != total or tr.X.min() < 0:
            bad_runs += 1
            continue
        # every single event, recorded one by one, on a short stretch
        tr = simulate(s0, 2e-4, RecorderSpec(2e-4, trace=True), make_rng(3, 1000 + seed))
        traced += tr.X.shape[0] - 1
        if np.any(tr.X.sum(axis=1) != total):
            bad_runs += 1
    dt = time.perf_counter() - t0
    assert report(3, bad_runs == 0, dt, 60.0,
                  f"{100 - bad_runs}/100 seeds conserve {total} molecules exactly "
                  f"({events:.3g} events at 101 snapshots each, {traced} events checked one by one)")


# -- 4 and 9. mean-field oracle and determinism ------------------------------------------------


def _c4_ensemble():
    a, b, N, mu, R, T = 2.0, 1.0, 32, 100.0, 500, 1.0
    net = validate_network(linear_spec(a, b))
    s0 = init_state(SINE0, [0], Grid(N), mu, net)
    means = np.zeros((11, N))
    sq = np.zeros((11, N))
    digests = []
    times = None
    for i in range(R):
        tr = simulate(s0, T, RecorderSpec(0.1), make_rng(4, i))
        u = tr.u_c
        means += u
        sq += u * u
        times = tr.times
        csv_text = trajectory_csv(tr.times, tr.u_c, tr.D)
        digests.append(hashlib.sha256(csv_text.encode()).hexdigest())
    mean = means / R
    var = (sq - R * mean * mean) / (R - 1)
    u0 = s0.X / mu
    oracle = np.array([math.exp(-b * t) * heat_semigroup(u0, t) + (a / b) * (1 - math.exp(-b * t)) for t in times])
    return times, mean, np.sqrt(np.maximum(var, 0) / R), oracle, digests


_C4 = {}


def test_c4_mean_field_oracle():
    t0 = time.perf_counter()
    times, mean, se, oracle, digests = _c4_ensemble()
    dt = time.perf_counter() - t0
    _C4["digests"] = digests
    cells = np.abs(mean[1:] - oracle[1:]) <= 3 * se[1:]
    frac = float(cells.mean())
    assert report(4, frac >= 0.95, dt, 300.0,
                  f"{int(cells.sum())}/{cells.size} (site, time) cells within 3 SE ({frac:.1%}, need >=95%); "
                  f"max |z| {float(np.max(np.abs(mean[1:] - oracle[1:]) / se[1:])):.2f}")


def test_c9_determinism():
    if "digests" not in _C4:
        _C4["digests"] = _c4_ensemble()[4]
    t0 = time.perf_counter()
    again = _c4_ensemble()[4]
    dt = time.perf_counter() - t0
    same = sum(x == y for x, y in zip(_C4["digests"], again))
    assert report(9, same == len(again) == 500, dt, None,
                  f"{same}/{len(again)} trajectory CSVs byte-identical on rerun with the same root seed")


# -- 5. jump-time law ----------------------------------------------------------------


def _first_jump_times(net, n, seed):
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    for i in range(n):
        st = init_pdmp_state(lambda x: 0 * x, [0], 4, 1, rng)
        st, jumped = advance_to_jump(st, 100.0, net, rng, h=0.25)
        assert jumped
        out[i] = st.t
    return out


def test_c5_jump_time_law():
    t0 = time.perf_counter()
    pv = {}
    for c in (0.5, 2.0):
        times = _first_jump_times(constant_hazard(c), 10_000, 50 + int(c * 2))
        pv[f"const {c:g}"] = stats.kstest(times, "expon", args=(0, 1 / c)).pvalue
    times = _first_jump_times(linear_hazard(), 10_000, 59)
    pv["linear"] = stats.kstest(times, lambda t: 1 - np.exp(-0.5 * t * t)).pvalue
    dt = time.perf_counter() - t0
    ok = all(p > 0.01 for p in pv.values())
    detail = ", ".join(f"{k}: p={v:.3f}" for k, v in pv.items())
    assert report(5, ok, dt, 30.0, f"KS on 1e4 first-jump times each ({detail}; need p>0.01)")


# -- 6. transition measure ---------------------------------------------------------------


def test_c6_transition_frequencies():
    t0 = time.perf_counter()
    net = two_channel(1.0, 3.0)
    rng = np.random.default_rng(6)
    field = np.ones(4)
    picks = np.array([sample_transition(field, [0], net, rng)[2] for _ in range(10_000)])
    p = float(np.mean(picks == 1))
    se = math.sqrt(p * (1 - p) / picks.size)
    dt = time.perf_counter() - t0
    assert report(6, abs(p - 0.75) <= 3 * se, dt, 10.0,
                  f"frequency of the rate-3 channel {p:.4f} vs 0.75 (|diff| {abs(p - 0.75):.4f}, 3 SE {3 * se:.4f})")


# -- 7. Dynkin residuals ---------------------------------------------------------------------


def test_c7_dynkin_residuals():
    net = toggle_field()
    k, T, R = 4, 1.0, 500
    at = [0.25, 0.5, 1.0]
    t0 = time.perf_counter()
    lines = []
    fails = 0
    runs = [
        ("micro(16,50)", an.SsaEngine(16, 50.0), an.MicroGenerator(net, 16, 50.0, k)),
        ("limit", an.PdmpEngine(256, 1e-3), an.LimitGenerator(net, 256, k)),
    ]
    for label, engine, gen in runs:
        trajs = [an.simulate_replicate(engine, net, TOGGLE_INIT, T, 7, i, 0.005) for i in range(R)]
        for phi in an.cylinder_catalog(k):
            res = an.dynkin_residual(trajs, phi, gen, at)
            fails += int(np.sum(~res.passes()))
            z = res.mean / np.where(res.se > 0, res.se, np.inf)
            lines.append(f"{label} {phi.name}: z=" + "/".join(f"{v:+.2f}" for v in z))
        del trajs
    dt = time.perf_counter() - t0
    for line in lines:
        print("   ", line)
    cells = 2 * 3 * len(at)
    assert report(7, fails == 0, dt, 600.0, f"{cells - fails}/{cells} residual means within 3 SE "
                                            f"(max |z| {max(abs(float(v)) for l in lines for v in l.split('z=')[1].split('/')):.2f})")


# -- 8. convergence ladder ------------------------------------------------------------------


def test_c8_convergence_ladder():
    net = toggle_field()
    obs = [an.inner_product(Profile("constant", value=1.0), "<u,1>"),
           an.inner_product(Profile("sine", amplitude=1.0), "<u,sin2pix>")]
    obs += [an.macro_count(ell) for ell in range(1, 5)]
    t0 = time.perf_counter()
    rep = an.convergence_ladder(net, TOGGLE_INIT, 1.0, [(16, 50), (32, 100), (64, 200)], 300, obs, [0.5, 1.0],
                                root_seed=8)
    dt = time.perf_counter() - t0
    v = rep.verdict
    for p in v["pairs"]:
        print(f"    {p['observable']:>12} t={p['t']}: {p['first']:.4f} -> {p['last']:.4f} "
              f"(excess {p['first_excess']:.4f} -> {p['last_excess']:.4f}) {'ok' if p['pass'] else 'NO'}")
    n = len(v["pairs"])
    assert report(8, v["pass"], dt, 1800.0,
                  f"{v['passed']}/{n} (observable, time) pairs pass after noise-floor subtraction "
                  f"(need >=80%; raw distance fell in {v['raw_decreases']}/{n}, excess fell in "
                  f"{v['excess_decreases']}/{n}); last-rung TV max {v['tv_last_max']:.3f} (<=0.1)")


if __name__ == "__main__":
    raise SystemExit(pytest.main(["-v", "-s", __file__]))
