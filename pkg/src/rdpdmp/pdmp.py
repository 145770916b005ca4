"""The limiting piecewise deterministic Markov process.

Between jumps the continuous field follows the reaction-diffusion equation
``v' = Delta v + F(v, nu)`` on an M-point periodic grid, integrated by Strang
splitting (exact spectral heat half steps around a pointwise RK4 reaction
step). The discrete vector ``nu`` jumps at rate ``Lambda(v, nu)``; jump times
are found by accumulating the hazard along the flow until it reaches an
Exp(1) threshold.

Steps are aligned with the global grid ``n * h`` (and with output times), so
stopping at an output time and resuming reproduces an uninterrupted run bit
for bit.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from numba import njit

from ._kernels import fast_rate, slow_rate
from .errors import (
    JumpBudgetExceeded,
    NegativeRateAtRuntime,
    NegativityBreach,
    StepRejected,
    WallClockExceeded,
    ZeroHazard,
)
from .lattice import Grid, heat_symbol, macro_weights, project
from .network import ReactionClass, ReactionNetwork
from .ssa import _pack_terms, output_times

log = logging.getLogger(__name__)

DEFAULT_M = 256
DEFAULT_H = 1e-3
DEFAULT_MAX_JUMPS = 10**6


@dataclass(frozen=True)
class Solver:
    """Network compiled for an M-point solver grid with k macrosites."""

    M: int
    k: int
    fast: tuple
    slow: tuple
    slow_glob: np.ndarray
    slow_gd: np.ndarray
    macro: np.ndarray
    u_max: float = math.inf
    coef_cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def grid(self) -> Grid:
        return Grid(self.M, self.k)


@lru_cache(maxsize=32)
def solver_for(net: ReactionNetwork, M: int, k: int) -> Solver:
    grid = Grid(M, k)
    rx = net.reactions
    f_off, f_ti, f_tj, f_tc = _pack_terms([rx[i].rate for i in net.fast])
    s_off, s_ti, s_tj, s_tc = _pack_terms([rx[i].rate for i in net.slow])
    aw = np.zeros((len(net.slow), M))
    for q, i in enumerate(net.slow):
        if rx[i].cls is ReactionClass.RDC_SLOW:
            aw[q] = macro_weights(rx[i].a_weight, grid, kind="a")
    tn = float(net.truncation.n) if net.truncation is not None else 0.0
    fast = (
        np.array([rx[i].gamma_c for i in net.fast], dtype=np.float64),
        f_off, f_ti, f_tj, f_tc,
        np.array([rx[i].cls is ReactionClass.S1 for i in net.fast], dtype=np.int64),
        tn,
    )
    slow = (
        s_off, s_ti, s_tj, s_tc,
        np.array([rx[i].cls is ReactionClass.RD for i in net.slow], dtype=np.int64),
        aw,
        tn,
    )
    return Solver(
        M, k, fast, slow,
        np.array(net.slow, dtype=np.int64),
        np.array([rx[i].gamma_d for i in net.slow], dtype=np.int64),
        grid.macro_index().astype(np.int64),
        float(net.u_max),
    )


# -- compiled pointwise pieces -------------------------------------------------


@njit(inline="always")
def _F(gc, f_off, f_ti, f_tj, f_tc, f_d2, tn, u, d):
    s = 0.0
    for r in range(gc.size):
        v = fast_rate(f_off, f_ti, f_tj, f_tc, f_d2, tn, r, u, d)
        if v < 0.0:
            return np.nan
        s += gc[r] * v
    return s


@njit(cache=True)
def _rk4(field, nu, macro, h, gc, f_off, f_ti, f_tj, f_tc, f_d2, tn):
    out = np.empty_like(field)
    for i in range(field.size):
        d = float(nu[macro[i]])
        u = field[i]
        k1 = _F(gc, f_off, f_ti, f_tj, f_tc, f_d2, tn, u, d)
        k2 = _F(gc, f_off, f_ti, f_tj, f_tc, f_d2, tn, u + 0.5 * h * k1, d)
        k3 = _F(gc, f_off, f_ti, f_tj, f_tc, f_d2, tn, u + 0.5 * h * k2, d)
        k4 = _F(gc, f_off, f_ti, f_tj, f_tc, f_d2, tn, u + h * k3, d)
        out[i] = u + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return out


@njit(inline="always")
def _horner(coef, ell, deg, y):
    p = coef[ell, deg]
    for q in range(deg - 1, -1, -1):
        p = p * y + coef[ell, q]
    return p


@njit(cache=True)
def _rk4_horner(field, nu_idx, macro, h, coef):
    """RK4 for ``u' = sum_i coef[l, i] u^i`` with l the point's macrosite."""
    out = np.empty_like(field)
    deg = coef.shape[1] - 1
    for i in range(field.size):
        ell = macro[i]
        u = field[i]
        k1 = _horner(coef, ell, deg, u)
        k2 = _horner(coef, ell, deg, u + 0.5 * h * k1)
        k3 = _horner(coef, ell, deg, u + 0.5 * h * k2)
        k4 = _horner(coef, ell, deg, u + h * k3)
        out[i] = u + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return out


@njit(cache=True)
def _scan(v):
    """(min, all finite) in one pass."""
    lo = np.inf
    ok = True
    for x in v:
        if not np.isfinite(x):
            ok = False
        elif x < lo:
            lo = x
    return lo, ok


@njit(cache=True)
def _channel_rates(field, nu, macro, s_off, s_ti, s_tj, s_tc, s_isrd, aw, tn):
    """Slow rates per (macrosite, reaction); -1 entries flag a negative rate."""
    k = nu.size
    ns = s_isrd.size
    y = np.zeros((ns, k))
    for r in range(ns):
        if s_isrd[r]:
            continue
        for j in range(field.size):
            y[r, macro[j]] += aw[r, j] * field[j]
    out = np.zeros((k, ns))
    for ell in range(k):
        d = float(nu[ell])
        for r in range(ns):
            out[ell, r] = slow_rate(s_off, s_ti, s_tj, s_tc, s_isrd, False, tn, r, y[r, ell], d, 0)
    return out


@njit(cache=True)
def _hazard_total(field, nu, macro, s_off, s_ti, s_tj, s_tc, s_isrd, aw, tn):
    """Sum of :func:`_channel_rates`, or -1.0 if any channel is negative."""
    rates = _channel_rates(field, nu, macro, s_off, s_ti, s_tj, s_tc, s_isrd, aw, tn)
    tot = 0.0
    for x in rates.ravel():
        if x < 0.0:
            return -1.0
        tot += x
    return tot


# -- public operations ---------------------------------------------------------


@lru_cache(maxsize=256)
def _heat_multiplier(t: float, M: int) -> np.ndarray:
    return np.exp(-t * heat_symbol(M))


def _heat(v: np.ndarray, t: float, M: int) -> np.ndarray:
    return np.fft.irfft(np.fft.rfft(v) * _heat_multiplier(t, M), M)


def flow_step(field_, nu, h: float, net: ReactionNetwork, k: int | None = None) -> np.ndarray:
    """One Strang step: heat(h/2), RK4 reaction step of length h, heat(h/2)."""
    if not h > 0:
        raise ValueError("step size must be positive")
    field_ = np.asarray(field_, dtype=float)
    nu = np.asarray(nu, dtype=np.int64)
    sol = solver_for(net, field_.size, k or nu.size)
    return _flow(field_, nu, h, sol)


def _debit_coefficients(sol: Solver, nu: np.ndarray) -> np.ndarray:
    """Coefficients of ``F(u, nu_l)`` as a polynomial in u, one row per macrosite."""
    key = nu.tobytes()
    hit = sol.coef_cache.get(key)
    if hit is not None:
        return hit
    gc, f_off, f_ti, f_tj, f_tc = sol.fast[:5]
    deg = int(f_ti.max()) if f_ti.size else 0
    coef = np.zeros((sol.k, deg + 1))
    for r in range(gc.size):
        for q in range(f_off[r], f_off[r + 1]):
            coef[:, f_ti[q]] += gc[r] * f_tc[q] * nu.astype(float) ** f_tj[q]
    if len(sol.coef_cache) < 4096:
        sol.coef_cache[key] = coef
    return coef


def _flow(field_: np.ndarray, nu: np.ndarray, h: float, sol: Solver) -> np.ndarray:
    v = _heat(field_, 0.5 * h, sol.M)
    if sol.fast[0].size:
        if sol.fast[6] > 0:
            v = _rk4(v, nu, sol.macro, h, *sol.fast)
        else:
            # without truncation F is one polynomial per macrosite; individual
            # rates are nonnegative on the validated box, checked below
            v = _rk4_horner(v, nu, sol.macro, h, _debit_coefficients(sol, nu))
            if v.size and v.max() > sol.u_max:
                _check_fast_rates(v, nu, sol)
    v = _heat(v, 0.5 * h, sol.M)
    if not _scan(v)[1]:
        if sol.fast[0].size and np.any(np.isnan(v)):
            raise NegativeRateAtRuntime("a fast rate went negative inside the flow (field left the validated box)")
        raise StepRejected("field developed NaN or Inf")
    return v


def _check_fast_rates(v: np.ndarray, nu: np.ndarray, sol: Solver):
    gc, f_off, f_ti, f_tj, f_tc = sol.fast[:5]
    d = nu[sol.macro].astype(float)
    for r in range(gc.size):
        val = np.zeros_like(v)
        scale = np.zeros_like(v)
        for q in range(f_off[r], f_off[r + 1]):
            term = f_tc[q] * v ** f_ti[q] * d ** f_tj[q]
            val += term
            scale += np.abs(term)
        if np.any(val < -1e-12 * scale):
            raise NegativeRateAtRuntime("a fast rate went negative inside the flow (field left the validated box)")


def channel_rates(field_, nu, net: ReactionNetwork, sol: Solver | None = None) -> np.ndarray:
    field_ = np.asarray(field_, dtype=float)
    nu = np.asarray(nu, dtype=np.int64)
    sol = sol or solver_for(net, field_.size, nu.size)
    rates = _channel_rates(field_, nu, sol.macro, *sol.slow)
    if np.any(rates < 0):
        raise NegativeRateAtRuntime("a slow rate went negative along the flow")
    return rates


def hazard(field_, nu, net: ReactionNetwork, sol: Solver | None = None) -> float:
    """Total jump rate ``Lambda(field, nu)``."""
    if sol is None:
        return float(channel_rates(field_, nu, net, sol).sum())
    tot = _hazard_total(field_, nu, sol.macro, *sol.slow)
    if tot < 0:
        raise NegativeRateAtRuntime("a slow rate went negative along the flow")
    return tot


@dataclass
class PdmpState:
    t: float
    field: np.ndarray
    nu: np.ndarray
    hazard_accum: float = 0.0
    exp_threshold: float = math.inf
    clamps: list = field(default_factory=list)

    def copy(self) -> "PdmpState":
        return PdmpState(self.t, self.field.copy(), self.nu.copy(), self.hazard_accum, self.exp_threshold,
                         list(self.clamps))


@dataclass
class PdmpTrajectory:
    times: np.ndarray
    fields: np.ndarray  # (n_snap, M)
    nu: np.ndarray  # (n_snap, k)
    jumps: dict = field(default_factory=dict)  # t, l, r, nu_before, nu_after
    truncated: bool = False
    final: Optional[PdmpState] = None
    clamps: list = field(default_factory=list)
    M: int = DEFAULT_M
    h: float = DEFAULT_H

    @property
    def u_c(self) -> np.ndarray:
        return self.fields

    @property
    def u_d(self) -> np.ndarray:
        return self.nu


def init_pdmp_state(f0, d0, M: int, k: int, rng: np.random.Generator) -> PdmpState:
    fld = project(f0, Grid(M, k))
    return PdmpState(0.0, fld, np.asarray(d0, dtype=np.int64).copy(), 0.0, float(rng.exponential()))


def _check_field(state: PdmpState, v: np.ndarray, t: float) -> np.ndarray:
    if _scan(v)[0] < 0:
        lo = float(v.min())
        n_neg = int(np.sum(v < 0))
        msg = f"PDMP field negative at t={t!r}: min {lo!r} on {n_neg} points; clamped to 0"
        log.warning(msg)
        state.clamps.append({"t": t, "min": lo, "points": n_neg})
        v = np.maximum(v, 0.0)
    return v


def _solve_crossing(state, sol, net, lam0, dt, target, t_tol):
    """Sub-step length s in (0, dt] where the trapezoid hazard hits ``target``.

    g(s) = s/2 (lam0 + lam(s)) - target. A quadratic guess (exact for linear
    Lambda) seeds an Illinois false-position search on the bracket [0, dt].
    """
    def g(s):
        v = _flow(state.field, state.nu, s, sol)
        lam = hazard(v, state.nu, net, sol)
        return 0.5 * s * (lam0 + lam) - target, v

    lo, hi = 0.0, dt
    glo = -target
    ghi, vhi = g(dt)
    if ghi <= 0:
        return dt, vhi
    # quadratic guess from the linear-Lambda model
    lam1 = 2.0 * (ghi + target) / dt - lam0
    a = 0.5 * (lam1 - lam0) / dt
    if abs(a) * dt > 1e-14 * max(lam0, 1e-300):
        disc = lam0 * lam0 + 4.0 * a * target
        s = (-lam0 + math.sqrt(max(disc, 0.0))) / (2.0 * a)
    else:
        s = target / lam0 if lam0 > 0 else 0.5 * dt
    if not lo < s < hi:
        s = 0.5 * (lo + hi)
    best = (hi, vhi)
    side = 0
    for _ in range(200):
        gs, vs = g(s)
        if abs(gs) <= 1e-12 * max(1.0, target):
            return s, vs
        if gs > 0:
            hi, ghi, best = s, gs, (s, vs)
            if side == 1:
                glo *= 0.5
            side = 1
        else:
            lo, glo = s, gs
            if side == -1:
                ghi *= 0.5
            side = -1
        if hi - lo <= t_tol:
            return best
        s = hi - ghi * (hi - lo) / (ghi - glo)
        if not lo < s < hi:
            s = 0.5 * (lo + hi)
    return best


def _next_stop(t: float, h: float, horizon: float) -> float:
    n = math.floor(t / h * (1 + 1e-14) + 1e-9)
    nxt = (n + 1) * h
    if nxt - t < 1e-12 * max(1.0, h):
        nxt += h
    return min(nxt, horizon)


def advance_to_jump(state: PdmpState, horizon: float, net: ReactionNetwork, rng=None,
                    h: float = DEFAULT_H, sol: Solver | None = None) -> tuple[PdmpState, bool]:
    """Flow until the accumulated hazard reaches the threshold or ``horizon``.

    Mutates and returns ``state``. ``jumped`` is False when the horizon came
    first (a valid outcome: the chain just did not jump yet).
    """
    sol = sol or solver_for(net, state.field.size, state.nu.size)
    if not math.isfinite(state.exp_threshold):
        if rng is None:
            raise ValueError("state has no jump threshold and no rng was given")
        state.exp_threshold = float(rng.exponential())
    lam0 = hazard(state.field, state.nu, net, sol)
    while state.t < horizon:
        t_end = _next_stop(state.t, h, horizon)
        dt = t_end - state.t
        v = _flow(state.field, state.nu, dt, sol)
        lam1 = hazard(v, state.nu, net, sol)
        inc = 0.5 * dt * (lam0 + lam1)
        if state.hazard_accum + inc >= state.exp_threshold and inc > 0:
            target = state.exp_threshold - state.hazard_accum
            t_tol = 1e-8 / max(1.0, lam0, lam1)
            s, v = _solve_crossing(state, sol, net, lam0, dt, target, t_tol)
            state.t = state.t + s
            state.field = _check_field(state, v, state.t)
            state.hazard_accum = state.exp_threshold
            return state, True
        state.hazard_accum += inc
        state.t = t_end
        state.field = _check_field(state, v, state.t)
        lam0 = lam1
    return state, False


def sample_transition(field_, nu, net: ReactionNetwork, rng: np.random.Generator, sol: Solver | None = None):
    """Draw ``(l, r)`` with probability ``lam_r / Lambda``; return ``(nu', l, r)``.

    ``l`` is 1-based and ``r`` the global reaction index; the field is not changed.
    """
    nu = np.asarray(nu, dtype=np.int64)
    sol = sol or solver_for(net, np.asarray(field_).size, nu.size)
    rates = channel_rates(field_, nu, net, sol)
    total = rates.sum()
    if not total > 0:
        raise ZeroHazard("no slow channel is active")
    flat = rates.ravel()
    idx = int(np.searchsorted(np.cumsum(flat), rng.random() * total, side="right"))
    idx = min(idx, flat.size - 1)
    while flat[idx] <= 0:
        idx -= 1
    ell, q = divmod(idx, rates.shape[1])
    new = nu.copy()
    new[ell] += sol.slow_gd[q]
    if new[ell] < 0:
        raise NegativityBreach(f"slow reaction {int(sol.slow_glob[q])} would make nu[{ell + 1}] negative")
    return new, ell + 1, int(sol.slow_glob[q])


def simulate_pdmp(
    init: PdmpState | tuple,
    T: float,
    net: ReactionNetwork,
    rng: np.random.Generator,
    dt_out: float | None = None,
    h: float = DEFAULT_H,
    max_jumps: int = DEFAULT_MAX_JUMPS,
    wall_seconds: float | None = None,
) -> PdmpTrajectory:
    """Run the PDMP over ``[t0, t0 + T]`` from ``init`` (a state or ``(field0, nu0)``).

    A state passed in is not modified; its threshold and accumulated hazard
    carry over, which is what makes restarts exact.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    if isinstance(init, PdmpState):
        state = init.copy()
    else:
        f0, nu0 = init
        state = PdmpState(0.0, np.asarray(f0, dtype=float).copy(), np.asarray(nu0, dtype=np.int64).copy())
    if not math.isfinite(state.exp_threshold):
        state.exp_threshold = float(rng.exponential())
    sol = solver_for(net, state.field.size, state.nu.size)
    t0 = state.t
    horizon = t0 + T
    tout = output_times(t0, T, dt_out or T)
    times, fields, nus = [], [], []
    jumps = {"t": [], "l": [], "r": [], "nu_before": [], "nu_after": []}
    started = time.monotonic()

    def result(truncated: bool) -> PdmpTrajectory:
        return PdmpTrajectory(
            np.array(times), np.array(fields).reshape(len(times), -1), np.array(nus).reshape(len(times), -1),
            {k: np.array(v) for k, v in jumps.items()}, truncated, state, list(state.clamps), state.field.size, h,
        )

    for t_next in tout:
        while state.t < t_next:
            state, jumped = advance_to_jump(state, t_next, net, h=h, sol=sol)
            if not jumped:
                break
            before = state.nu.copy()
            state.nu, ell, r = sample_transition(state.field, state.nu, net, rng, sol)
            jumps["t"].append(state.t)
            jumps["l"].append(ell)
            jumps["r"].append(r)
            jumps["nu_before"].append(before)
            jumps["nu_after"].append(state.nu.copy())
            state.hazard_accum = 0.0
            state.exp_threshold = float(rng.exponential())
            if len(jumps["t"]) >= max_jumps:
                raise JumpBudgetExceeded(f"jump budget of {max_jumps} exhausted at t={state.t!r}", result(True))
            if wall_seconds is not None and time.monotonic() - started > wall_seconds:
                raise WallClockExceeded(f"wall-clock budget of {wall_seconds}s exhausted", result(True))
        state.t = t_next  # exact output time (the last step ended there up to rounding)
        times.append(t_next)
        fields.append(state.field.copy())
        nus.append(state.nu.copy())
    return result(False)
