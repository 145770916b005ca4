"""Exact simulation of the scaled lattice jump process.

Molecule counts are integers (``X_j`` for C on site j, ``D_l`` for D on
macrosite l); concentrations are ``u_j = X_j / mu``. The compiled event
loops live in :mod:`rdpdmp._kernels`; this module builds their inputs,
handles resumption (buffer growth, wall-clock checks) and turns the result
into a :class:`Trajectory`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels as K
from ._fenwick import tree_size
from ._rng import new_stream, replicate_key
from .errors import (
    EventBudgetExceeded,
    ExtinctTotal,
    NegativeInitial,
    NegativeRateAtRuntime,
    NegativityBreach,
    SimulationError,
    WallClockExceeded,
)
from .lattice import Grid, macro_weights, project
from .network import ReactionClass, ReactionNetwork, eval_rate

KIND_NAMES = ("FastOnsite", "FastMixed", "SlowMixed", "SlowPure", "DiffLeft", "DiffRight")
DEFAULT_MAX_EVENTS = 10**10
EMPTY_NETWORK = ReactionNetwork((), 1.0, 1)


@dataclass(frozen=True)
class CompiledModel:
    arrays: tuple
    max_add: int
    fast_glob: np.ndarray
    slow_glob: np.ndarray
    max_degree_u: int

    @property
    def bq(self) -> np.ndarray:
        return self.arrays[19]

    @property
    def a_w(self) -> np.ndarray:
        return self.arrays[18]


def _pack_terms(polys):
    off = [0]
    ti, tj, tc = [], [], []
    for p in polys:
        for i, j, c in p.terms:
            ti.append(i)
            tj.append(j)
            tc.append(c)
        off.append(len(tc))
    return (
        np.array(off, dtype=np.int64),
        np.array(ti, dtype=np.int64),
        np.array(tj, dtype=np.int64),
        np.array(tc, dtype=np.float64),
    )


def compile_model(net: ReactionNetwork, grid: Grid, mu: float, guard: bool = True) -> CompiledModel:
    n = grid.n_sites
    fast = net.fast
    slow = net.slow
    rx = net.reactions
    f_off, f_ti, f_tj, f_tc = _pack_terms([rx[i].rate for i in fast])
    s_off, s_ti, s_tj, s_tc = _pack_terms([rx[i].rate for i in slow])
    a_w = np.zeros((len(slow), n))
    bq = np.zeros((len(slow), n), dtype=np.int64)
    for q, i in enumerate(slow):
        r = rx[i]
        if r.cls is ReactionClass.RDC_SLOW:
            a_w[q] = macro_weights(r.a_weight, grid, kind="a")
            bq[q] = np.rint(r.gamma_c * macro_weights(r.b_weight, grid, kind="b")).astype(np.int64)
    macro = grid.macro_index().astype(np.int64)
    spm = grid.sites_per_macro
    arrays = (
        float(mu),
        float(n * n),
        macro,
        spm,
        np.array([rx[i].gamma_c for i in fast], dtype=np.int64),
        f_off, f_ti, f_tj, f_tc,
        np.array([rx[i].cls is ReactionClass.S1 for i in fast], dtype=np.int64),
        np.array([rx[i].gamma_c for i in slow], dtype=np.int64),
        np.array([rx[i].gamma_d for i in slow], dtype=np.int64),
        s_off, s_ti, s_tj, s_tc,
        np.array([rx[i].cls is ReactionClass.RD for i in slow], dtype=np.int64),
        np.array(slow, dtype=np.int64),
        a_w,
        bq,
        float(net.truncation.n) if net.truncation is not None else 0.0,
        bool(guard),
    )
    max_add = max([rx[i].gamma_c for i in fast] + [0])
    if len(slow):
        per_macro = np.add.reduceat(np.maximum(bq, 0), np.arange(0, n, spm), axis=1)
        max_add = max(max_add, int(per_macro.max()))
    deg = max([rx[i].rate.degree_y1 for i in fast] + [0])
    return CompiledModel(arrays, int(max_add), np.array(fast), np.array(slow), deg)


@dataclass
class MicroState:
    """Lattice state: integer counts plus cached propensity structures."""

    t: float
    X: np.ndarray
    D: np.ndarray
    mu: float
    grid: Grid
    net: ReactionNetwork = EMPTY_NETWORK
    guard: bool = True
    _model: Optional[CompiledModel] = field(default=None, repr=False)
    _pos: Optional[np.ndarray] = field(default=None, repr=False)
    _cache: Optional[dict] = field(default=None, repr=False)
    _pos_nmol: int = field(default=-1, repr=False)

    @property
    def u_c(self) -> np.ndarray:
        return self.X / self.mu

    @property
    def u_d(self) -> np.ndarray:
        return self.D

    @property
    def model(self) -> CompiledModel:
        if self._model is None:
            self._model = compile_model(self.net, self.grid, self.mu, self.guard)
        return self._model

    @property
    def macro_avgs(self) -> np.ndarray:
        """``sum_{j in J_l} a_j u_j`` per (slow reaction, macrosite); rows of RD reactions are zero."""
        if self._cache is None:
            self._ensure_cache()
        return self._cache["avg"]

    def positions(self) -> np.ndarray:
        if self._pos is None or self._pos_nmol != int(self.X.sum()):
            self._pos = np.repeat(np.arange(self.grid.n_sites, dtype=np.int64), self.X)
            self._pos_nmol = self._pos.size
        return self._pos

    def _ensure_cache(self):
        n, k = self.grid.n_sites, self.grid.n_macro
        ns = len(self.model.slow_glob)
        nleaf = n + k
        self._cache = {
            "avg": np.zeros((ns, k)),
            "deff": np.zeros((ns, k), dtype=np.int64),
            "ft": np.zeros(n),
            "st": np.zeros(k),
            "tree": np.zeros(tree_size(nleaf) + 1),
            "leaves": np.zeros(nleaf),
        }
        K.rebuild_direct(self.model.arrays, self.X, self.D, *self._cache.values())

    def copy(self) -> "MicroState":
        new = replace(self, X=self.X.copy(), D=self.D.copy(), _pos=None, _cache=None)
        return new


@dataclass(frozen=True)
class Event:
    kind: str
    index: int  # 1-based site or macrosite
    reaction: Optional[int]  # global reaction index, None for diffusion
    t: float


@dataclass
class RecorderSpec:
    dt_out: float
    log_events: bool = True
    trace: bool = False  # record the state after every event (small systems only)


@dataclass
class Trajectory:
    times: np.ndarray
    X: np.ndarray  # (n_snap, N) integer counts
    D: np.ndarray  # (n_snap, k)
    mu: float
    grid: Grid
    events: dict = field(default_factory=dict)
    truncated: bool = False
    n_events: int = 0
    final: Optional[MicroState] = None
    kernel: str = ""

    @property
    def u_c(self) -> np.ndarray:
        return self.X / self.mu

    @property
    def u_d(self) -> np.ndarray:
        return self.D

    def state_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Piecewise-constant (right-continuous) state at time t."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = max(i, 0)
        return self.u_c[i], self.D[i]


def make_rng(root_seed: int, replicate: int = 0, stream: int | None = None) -> np.ndarray:
    return new_stream(replicate_key(root_seed, replicate, stream))


def init_state(f0, d0, grid: Grid, mu: float, net: ReactionNetwork | None = None, guard: bool = True) -> MicroState:
    """``X_j = round(mu * (P_N f0)_j)``."""
    pf = project(f0, grid)
    if np.any(pf < 0):
        raise NegativeInitial("initial concentration profile is negative somewhere")
    d0 = np.asarray(d0)
    if d0.shape != (grid.n_macro,):
        raise ValueError(f"d0 must have length k={grid.n_macro}, got shape {d0.shape}")
    if np.any(d0 < 0) or np.any(d0 != np.round(d0)):
        raise NegativeInitial("initial discrete counts must be nonnegative integers")
    X = np.rint(mu * pf).astype(np.int64)
    return MicroState(0.0, X, d0.astype(np.int64), float(mu), grid, net or EMPTY_NETWORK, guard)


def positivity_guard(state: MicroState, r: int, ell: int) -> int:
    """1 if firing RDC_SLOW reaction ``r`` (global index) on macrosite ``ell`` (1-based) keeps X >= 0."""
    rx = state.net.reactions[r]
    if rx.cls is not ReactionClass.RDC_SLOW:
        raise ValueError("the positivity guard applies to RDC_SLOW reactions only")
    q = list(state.model.slow_glob).index(r)
    lo, hi = state.grid.macro_range(ell)
    sl = slice(lo - 1, hi)
    return int(np.all(state.X[sl] + state.model.bq[q, sl] >= 0))


def propensities_from_scratch(state: MicroState) -> tuple[np.ndarray, np.ndarray, float]:
    """Reference evaluation of every channel with the network module.

    Returns ``(fast[N, n_fast], slow[k, n_slow], diffusion_total)``.
    """
    net, grid, mu = state.net, state.grid, state.mu
    u = state.X / mu
    macro = grid.macro_index()
    d = state.D[macro].astype(float)
    fast = np.zeros((grid.n_sites, len(net.fast)))
    for q, i in enumerate(net.fast):
        fast[:, q] = mu * eval_rate(net.reactions[i], u, d, net.truncation)
    slow = np.zeros((grid.n_macro, len(net.slow)))
    for q, i in enumerate(net.slow):
        r = net.reactions[i]
        for ell in range(grid.n_macro):
            dl = float(state.D[ell])
            if r.cls is ReactionClass.RD:
                slow[ell, q] = eval_rate(r, 0.0, dl, net.truncation)
                continue
            lo, hi = grid.macro_range(ell + 1)
            sl = slice(lo - 1, hi)
            y = float(np.dot(state.model.a_w[q, sl], state.X[sl])) / mu
            ok = (not state.guard) or positivity_guard(state, i, ell + 1)
            slow[ell, q] = eval_rate(r, y, dl, net.truncation) * ok
    diff = 2.0 * grid.n_sites**2 * float(state.X.sum())
    return fast, slow, diff


def total_propensity(state: MicroState) -> float:
    """Total jump rate from the cached index (diffusion plus reactions)."""
    if state._cache is None:
        state._ensure_cache()
    from ._fenwick import fw_total

    n = state.grid.n_sites
    return 2.0 * n * n * float(state.X.sum()) + max(0.0, float(fw_total(state._cache["tree"])))


class _Buffers:
    """Growable output buffers shared by both kernels."""

    def __init__(self, n_snap: int, n: int, k: int, log_cap: int = 1024):
        self.snapX = np.zeros((n_snap, n), dtype=np.int64)
        self.snapD = np.zeros((n_snap, k), dtype=np.int64)
        self.trace_t = np.zeros(n_snap if n_snap else 1)
        self.ev_t = np.zeros(log_cap)
        self.ev_kind = np.zeros(log_cap, dtype=np.int64)
        self.ev_l = np.zeros(log_cap, dtype=np.int64)
        self.ev_r = np.zeros(log_cap, dtype=np.int64)
        self.ev_gd = np.zeros(log_cap, dtype=np.int64)

    def grow_log(self):
        for name in ("ev_t", "ev_kind", "ev_l", "ev_r", "ev_gd"):
            a = getattr(self, name)
            setattr(self, name, np.concatenate([a, np.zeros_like(a)]))

    def grow_trace(self):
        self.snapX = np.concatenate([self.snapX, np.zeros_like(self.snapX)])
        self.snapD = np.concatenate([self.snapD, np.zeros_like(self.snapD)])
        self.trace_t = np.concatenate([self.trace_t, np.zeros_like(self.trace_t)])

    def events(self, nlog: int) -> dict:
        return {
            "t": self.ev_t[:nlog].copy(),
            "kind": self.ev_kind[:nlog].copy(),
            "l": self.ev_l[:nlog].copy(),
            "r": self.ev_r[:nlog].copy(),
            "gamma_d": self.ev_gd[:nlog].copy(),
        }


def output_times(t0: float, T: float, dt_out: float) -> np.ndarray:
    """``t0, t0 + dt, ..., t0 + T``; the last point is always exactly ``t0 + T``."""
    if T <= 0 or dt_out <= 0:
        raise ValueError("T and dt_out must be positive")
    n = int(math.floor(T / dt_out + 1e-9))
    times = t0 + dt_out * np.arange(n + 1)
    if abs(n * dt_out - T) <= 1e-9 * T:
        times[-1] = t0 + T
    else:
        times = np.append(times, t0 + T)
    return times


def _raise_for(status: int, message: str, partial=None):
    if status == K.BREACH:
        raise NegativityBreach(message)
    if status == K.NEG_RATE:
        raise NegativeRateAtRuntime(message)
    if status == K.BOUND_FAIL:
        raise SimulationError("internal error: propensity exceeded its thinning bound")
    raise SimulationError(f"unexpected kernel status {status}")


def step(state: MicroState, rng: np.ndarray) -> tuple[Event, MicroState]:
    """Advance by exactly one event (direct method). Mutates and returns ``state``."""
    if state._cache is None:
        state._ensure_cache()
    model = state.model
    pos = state.positions()
    nmol = int(state.X.sum())
    if nmol + model.max_add > pos.size:
        pos = np.concatenate([pos, np.zeros(max(pos.size, model.max_add + 16), dtype=np.int64)])
        state._pos = pos
    buf = _Buffers(0, state.grid.n_sites, state.grid.n_macro, log_cap=1)
    fstate = np.array([state.t])
    istate = np.zeros(K.N_ISTATE, dtype=np.int64)
    istate[K.I_NMOL] = nmol
    c = state._cache
    status = K.run_direct(
        state.X, state.D, pos, fstate, istate, rng, model.arrays, np.zeros(0), buf.snapX, buf.snapD,
        buf.ev_t, buf.ev_kind, buf.ev_l, buf.ev_r, buf.ev_gd, np.inf, DEFAULT_MAX_EVENTS, model.max_add,
        1 << 62, 1, False, buf.trace_t, c["avg"], c["deff"], c["ft"], c["st"], c["tree"], c["leaves"],
    )
    state._pos_nmol = int(istate[K.I_NMOL])
    if status == K.EXTINCT:
        raise ExtinctTotal("total propensity is zero; the state is absorbing")
    if status != K.STEP_DONE:
        _raise_for(status, "event would make a count negative" if status == K.BREACH else "negative rate")
    state.t = float(fstate[0])
    kind = int(istate[K.I_LAST_KIND])
    idx = int(istate[K.I_LAST_IDX])
    r = int(istate[K.I_LAST_R])
    if kind in (K.K_DIFF_LEFT, K.K_DIFF_RIGHT):
        glob = None
    elif kind in (K.K_FAST_ONSITE, K.K_FAST_MIXED):
        glob = int(model.fast_glob[r])
    else:
        glob = int(model.slow_glob[r])
    return Event(KIND_NAMES[kind], idx + 1, glob, state.t), state


def simulate(
    state0: MicroState,
    T: float,
    recorder: RecorderSpec,
    rng: np.ndarray,
    max_events: int = DEFAULT_MAX_EVENTS,
    wall_seconds: float | None = None,
    kernel: str = "auto",
) -> Trajectory:
    """Run from ``state0`` (not modified) over ``[t0, t0 + T]``."""
    if not T > 0:
        raise ValueError("horizon T must be positive")
    state = state0.copy()
    model = state.model
    n, k = state.grid.n_sites, state.grid.n_macro
    if kernel == "auto":
        kernel = "thinning" if model.max_degree_u <= 2 and not recorder.trace else "direct"
    if recorder.trace and kernel != "direct":
        raise ValueError("event tracing needs the direct kernel")

    t0 = state.t
    t_stop = t0 + T
    tout = np.zeros(0) if recorder.trace else output_times(t0, T, recorder.dt_out)
    buf = _Buffers(1024 if recorder.trace else tout.size, n, k)
    nmol = int(state.X.sum())
    pos = np.zeros(max(16, 2 * nmol + 4 * model.max_add + 16), dtype=np.int64)
    pos[:nmol] = np.repeat(np.arange(n, dtype=np.int64), state.X)
    fstate = np.array([t0])
    istate = np.zeros(K.N_ISTATE, dtype=np.int64)
    istate[K.I_NMOL] = nmol
    X0, D0 = state.X.copy(), state.D.copy()
    if kernel == "direct":
        state._ensure_cache()
        c = state._cache
    chunk = 1 << 24
    started = time.monotonic()

    def finish(truncated: bool) -> Trajectory:
        nrec = int(istate[K.I_IOUT])
        if recorder.trace:
            times = np.concatenate([[t0], buf.trace_t[:nrec]])
            Xs = np.vstack([X0[None, :], buf.snapX[:nrec]])
            Ds = np.vstack([D0[None, :], buf.snapD[:nrec]])
            if not truncated:
                times = np.append(times, t_stop)
                Xs = np.vstack([Xs, state.X[None, :]])
                Ds = np.vstack([Ds, state.D[None, :]])
        else:
            times, Xs, Ds = tout[:nrec], buf.snapX[:nrec], buf.snapD[:nrec]
        state.t = float(fstate[0])
        state._pos, state._pos_nmol = pos[: int(istate[K.I_NMOL])].copy(), int(istate[K.I_NMOL])
        state._cache = None
        return Trajectory(
            times=times.copy(),
            X=Xs.copy(),
            D=Ds.copy(),
            mu=state.mu,
            grid=state.grid,
            events=buf.events(int(istate[K.I_NLOG])) if recorder.log_events else {},
            truncated=truncated,
            n_events=int(istate[K.I_NEV]),
            final=state,
            kernel=kernel,
        )

    while True:
        if kernel == "thinning":
            status = K.run_thinning(
                state.X, state.D, pos, fstate, istate, rng, model.arrays, tout, buf.snapX, buf.snapD,
                buf.ev_t, buf.ev_kind, buf.ev_l, buf.ev_r, buf.ev_gd, t_stop, int(max_events),
                model.max_add, chunk,
            )
        else:
            status = K.run_direct(
                state.X, state.D, pos, fstate, istate, rng, model.arrays, tout, buf.snapX, buf.snapD,
                buf.ev_t, buf.ev_kind, buf.ev_l, buf.ev_r, buf.ev_gd, t_stop, int(max_events),
                model.max_add, chunk, 0, recorder.trace, buf.trace_t,
                c["avg"], c["deff"], c["ft"], c["st"], c["tree"], c["leaves"],
            )
        if status in (K.DONE, K.EXTINCT):
            return finish(False)
        if status == K.GROW:
            pos = np.concatenate([pos, np.zeros(pos.size + model.max_add, dtype=np.int64)])
        elif status == K.LOG_FULL:
            if recorder.trace and istate[K.I_IOUT] >= buf.trace_t.size:
                buf.grow_trace()
            else:
                buf.grow_log()
        elif status == K.CHUNK:
            pass
        elif status == K.BUDGET:
            partial = finish(True)
            raise EventBudgetExceeded(f"event budget of {max_events} exhausted at t={partial.final.t!r}", partial)
        else:
            _raise_for(status, f"kernel stopped at t={float(fstate[0])!r}")
        if wall_seconds is not None and time.monotonic() - started > wall_seconds:
            partial = finish(True)
            raise WallClockExceeded(f"wall-clock budget of {wall_seconds}s exhausted at t={partial.final.t!r}", partial)
