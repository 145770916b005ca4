"""Compiled event loops for the lattice jump process.

State: integer counts ``X[N]`` (molecules of C per site), ``D[k]`` (counts of
D per macrosite) and a molecule position array ``pos[:nmol]`` holding the
site of every C molecule. Diffusion picks a uniform molecule and a direction,
which samples the ``2N`` diffusion channels (each at rate ``N^2 X_j``) with
the right probabilities in O(1).

Two kernels are provided.

``run_direct``
    Gillespie direct method. Reaction channels live in a Fenwick tree with
    one leaf per site (all fast reactions of that site) and one leaf per
    macrosite (all slow reactions of that macrosite); rates are updated
    incrementally after each event.
``run_thinning``
    Exact thinning. Diffusion never changes the total molecule count or D,
    so an upper bound ``B`` on the reaction propensity can be computed from
    ``(sum X, D)`` alone and stays valid until the next reaction. Candidate
    reaction times come from a rate-``B`` Poisson clock; the diffusion moves
    in between are a Poisson number of uniform molecule hops. Each candidate
    is accepted with probability ``R_rx / B``.

Both kernels are resumable: they return a status code and leave all state
in the arrays passed in.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, uint64

from ._fenwick import fw_add, fw_build, fw_find, fw_total
from ._rng import GOLDEN, INV53, exponential, mix64, poisson, uniform

DONE = 0
LOG_FULL = 1
BUDGET = 2
EXTINCT = 3
BREACH = 4
NEG_RATE = 5
STEP_DONE = 6
GROW = 7
CHUNK = 8
BOUND_FAIL = 9

# istate slots
I_NEV = 0
I_NMOL = 1
I_IOUT = 2
I_NLOG = 3
I_LAST_KIND = 4
I_LAST_IDX = 5
I_LAST_R = 6
I_SINCE = 7
I_NACC = 8
I_NCAND = 9
N_ISTATE = 10

K_FAST_ONSITE = 0
K_FAST_MIXED = 1
K_SLOW_MIXED = 2
K_SLOW_PURE = 3
K_DIFF_LEFT = 4
K_DIFF_RIGHT = 5

REBUILD_EVERY = 1 << 20
NEG_TOL = 1e-12


@njit(inline="always")
def ipow(x, n):
    r = 1.0
    for _ in range(n):
        r *= x
    return r


@njit(inline="always")
def eta(s):
    if s <= 1.0:
        return 1.0
    if s >= 2.0:
        return 0.0
    x = s - 1.0
    p = math.exp(-1.0 / (1.0 - x))
    q = math.exp(-1.0 / x)
    return p / (p + q)


@njit(inline="always")
def poly(off, ti, tj, tc, r, y1, y2):
    """Rate polynomial value, or -1.0 if negative beyond roundoff."""
    v = 0.0
    a = 0.0
    for q in range(off[r], off[r + 1]):
        term = tc[q] * ipow(y1, ti[q]) * ipow(y2, tj[q])
        v += term
        a += abs(term)
    if v < 0.0:
        if v < -NEG_TOL * a:
            return -1.0
        return 0.0
    return v


# Hot helpers take plain arrays: passing the packed model tuple into a
# per-site call costs a reference-count round trip for every member.


@njit(inline="always")
def fast_rate(f_off, f_ti, f_tj, f_tc, f_d2, tn, r, u, d):
    v = poly(f_off, f_ti, f_tj, f_tc, r, u, d)
    if v > 0.0 and tn > 0.0:
        sq = u * u + (d * d if f_d2[r] else 0.0)
        v *= eta(sq / (tn * tn))
    return v


@njit(inline="always")
def slow_rate(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, r, y, d, deficit):
    if s_isrd[r]:
        y = 0.0
    elif guard and deficit > 0:
        return 0.0
    v = poly(s_off, s_ti, s_tj, s_tc, r, y, d)
    if v > 0.0 and tn > 0.0:
        v *= eta((y * y + d * d) / (tn * tn))
    return v


@njit(inline="always")
def site_total(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, X, D, j):
    """``mu * sum_r lam_r(u_j, d)`` over fast reactions; -1.0 on a negative rate."""
    u = X[j] / mu
    d = float(D[macro[j]])
    s = 0.0
    for r in range(f_d2.size):
        v = fast_rate(f_off, f_ti, f_tj, f_tc, f_d2, tn, r, u, d)
        if v < 0.0:
            return -1.0
        s += v
    return mu * s


@njit(inline="always")
def macro_total(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, ell):
    d = float(D[ell])
    s = 0.0
    for r in range(s_isrd.size):
        v = slow_rate(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, r, avg[r, ell], d, deff[r, ell])
        if v < 0.0:
            return -1.0
        s += v
    return s


@njit(inline="always")
def pick_fast(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, X, D, j, w):
    u = X[j] / mu
    d = float(D[macro[j]])
    last = -1
    for r in range(f_d2.size):
        v = mu * fast_rate(f_off, f_ti, f_tj, f_tc, f_d2, tn, r, u, d)
        if v > 0.0:
            last = r
            if w < v:
                return r
            w -= v
    return last


@njit(inline="always")
def pick_slow(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, ell, w):
    d = float(D[ell])
    last = -1
    for r in range(s_isrd.size):
        v = slow_rate(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, r, avg[r, ell], d, deff[r, ell])
        if v > 0.0:
            last = r
            if w < v:
                return r
            w -= v
    return last


@njit(cache=True)
def rebuild_macro_cache(mu, macro, s_isrd, a_w, bq, X, avg, deff):
    avg[:, :] = 0.0
    deff[:, :] = 0
    for r in range(s_isrd.size):
        if s_isrd[r]:
            continue
        for j in range(X.size):
            ell = macro[j]
            avg[r, ell] += a_w[r, j] * X[j]
            if X[j] + bq[r, j] < 0:
                deff[r, ell] += 1
        for ell in range(avg.shape[1]):
            avg[r, ell] /= mu


@njit(cache=True)
def add_molecules(pos, nmol, j, count):
    for _ in range(count):
        pos[nmol] = j
        nmol += 1
    return nmol


@njit(cache=True)
def remove_molecules(pos, nmol, j, count, rng):
    for _ in range(count):
        i = int(uniform(rng) * nmol)
        if i >= nmol:
            i = nmol - 1
        while pos[i] != j:
            i += 1
            if i == nmol:
                i = 0
        nmol -= 1
        pos[i] = pos[nmol]
    return nmol


@njit(cache=True)
def record_snapshot(snapX, snapD, iout, X, D):
    snapX[iout, :] = X
    snapD[iout, :] = D


@njit(cache=True)
def log_event(ev_t, ev_kind, ev_l, ev_r, ev_gd, nlog, t, kind, ell, rglob, gd):
    ev_t[nlog] = t
    ev_kind[nlog] = kind
    ev_l[nlog] = ell + 1
    ev_r[nlog] = rglob
    ev_gd[nlog] = gd


@njit(cache=True)
def reaction_bound(mu, spm, f_off, f_ti, f_tj, f_tc, s_off, s_ti, s_tj, s_tc, s_isrd, a_w, nmol, D):
    """Upper bound of the total reaction propensity given sum X and D.

    Negative terms are dropped. For a fast term ``c u^i d^j`` with i >= 1,
    ``sum_sites u^i <= (sum_sites u)^i``; for a slow term the macro average
    is at most ``max(a) * sum u``. Truncation and the guard only lower rates.
    """
    k = D.size
    dmax = 0.0
    for ell in range(k):
        dmax = max(dmax, float(D[ell]))
    utot = nmol / mu
    B = 0.0
    for r in range(f_off.size - 1):
        for q in range(f_off[r], f_off[r + 1]):
            c = f_tc[q]
            if c <= 0.0:
                continue
            i = f_ti[q]
            jj = f_tj[q]
            if i == 0:
                s = 0.0
                for ell in range(k):
                    s += ipow(float(D[ell]), jj)
                B += mu * c * spm * s
            else:
                B += mu * c * ipow(dmax, jj) * ipow(utot, i)
    for r in range(s_isrd.size):
        amax = 0.0
        if not s_isrd[r]:
            for j in range(a_w.shape[1]):
                amax = max(amax, a_w[r, j])
        for ell in range(k):
            d = float(D[ell])
            for q in range(s_off[r], s_off[r + 1]):
                c = s_tc[q]
                i = s_ti[q]
                if c <= 0.0 or (s_isrd[r] and i > 0):
                    continue
                B += c * ipow(amax * utot, i) * ipow(d, s_tj[q])
    return B


@njit(cache=True)
def diffuse(pos, X, nmol, nd, rng):
    """``nd`` uniform molecule hops, each left or right with probability 1/2."""
    n = X.size
    two = 2 * nmol
    key = rng[0]
    ctr = rng[1]
    one = uint64(1)
    for _ in range(nd):
        z = mix64(key + ctr * GOLDEN)
        ctr += one
        m = int(float(z >> uint64(11)) * INV53 * two)
        if m >= two:
            m = two - 1
        j = pos[m >> 1]
        nj = j + 2 * (m & 1) - 1  # branch-free direction
        if nj < 0:
            nj += n
        elif nj >= n:
            nj -= n
        pos[m >> 1] = nj
        X[j] -= 1
        X[nj] += 1
    rng[1] = ctr


@njit(cache=True)
def apply_fast(g, X, pos, nmol, j, rng):
    """Add ``g`` molecules at site j; returns new nmol, or -1 on a negativity breach."""
    if X[j] + g < 0:
        return -1
    X[j] += g
    if g > 0:
        nmol = add_molecules(pos, nmol, j, g)
    elif g < 0:
        nmol = remove_molecules(pos, nmol, j, -g, rng)
    return nmol


@njit(cache=True)
def apply_slow(spm, gd, isrd, bq_row, X, D, pos, nmol, ell, rng):
    """Fire a slow reaction on macrosite ell; returns new nmol, or -1 on a breach."""
    if D[ell] + gd < 0:
        return -1
    lo = ell * spm
    if not isrd:
        for j in range(lo, lo + spm):
            if X[j] + bq_row[j] < 0:
                return -1
        for j in range(lo, lo + spm):
            g = bq_row[j]
            X[j] += g
            if g > 0:
                nmol = add_molecules(pos, nmol, j, g)
            elif g < 0:
                nmol = remove_molecules(pos, nmol, j, -g, rng)
    D[ell] += gd
    return nmol


@njit(cache=True)
def run_thinning(X, D, pos, fstate, istate, rng, model, tout, snapX, snapD,
                 ev_t, ev_kind, ev_l, ev_r, ev_gd, t_stop, max_events, max_add, chunk):
    (mu, N2, macro, spm, f_gc, f_off, f_ti, f_tj, f_tc, f_d2,
     s_gc, s_gd, s_off, s_ti, s_tj, s_tc, s_isrd, s_glob, a_w, bq, tn, guard) = model
    n = X.size
    k = D.size
    ns = s_gc.size
    nout = tout.size
    t = fstate[0]
    nev = istate[I_NEV]
    nmol = istate[I_NMOL]
    iout = istate[I_IOUT]
    nlog = istate[I_NLOG]
    since = 0
    ft = np.empty(n)
    st = np.empty(k)
    avg = np.zeros((ns, k))
    deff = np.zeros((ns, k), dtype=np.int64)
    need_bound = True
    B = 0.0
    status = DONE
    while True:
        if iout < nout and tout[iout] <= t:
            record_snapshot(snapX, snapD, iout, X, D)
            iout += 1
            continue
        if t >= t_stop:
            status = DONE
            break
        if nlog >= ev_t.size:
            status = LOG_FULL
            break
        if nmol + max_add > pos.size:
            status = GROW
            break
        if since >= chunk:
            status = CHUNK
            break
        if need_bound:
            B = reaction_bound(mu, spm, f_off, f_ti, f_tj, f_tc, s_off, s_ti, s_tj, s_tc, s_isrd, a_w, nmol, D)
            need_bound = False
        rd = 2.0 * N2 * nmol
        t_next = t_stop
        if iout < nout and tout[iout] < t_next:
            t_next = tout[iout]
        tau = exponential(rng) / B if B > 0.0 else np.inf
        if t + tau >= t_next:
            nd = poisson(rng, rd * (t_next - t))
            if nev + nd > max_events:
                status = BUDGET
                break
            diffuse(pos, X, nmol, nd, rng)
            nev += nd
            since += nd
            t = t_next
            continue
        nd = poisson(rng, rd * tau)
        if nev + nd + 1 > max_events:
            status = BUDGET
            break
        diffuse(pos, X, nmol, nd, rng)
        nev += nd
        since += nd
        t += tau
        # candidate reaction: exact propensity from scratch
        istate[I_NCAND] += 1
        if ns > 0:
            rebuild_macro_cache(mu, macro, s_isrd, a_w, bq, X, avg, deff)
        R = 0.0
        for j in range(n):
            v = site_total(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, X, D, j)
            if v < 0.0:
                status = NEG_RATE
                break
            ft[j] = v
            R += v
        if status == NEG_RATE:
            break
        for ell in range(k):
            v = macro_total(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, ell)
            if v < 0.0:
                status = NEG_RATE
                break
            st[ell] = v
            R += v
        if status == NEG_RATE:
            break
        if R > B * (1.0 + 1e-12) + 1e-300:
            status = BOUND_FAIL
            break
        w = uniform(rng) * B
        if w >= R:
            continue
        istate[I_NACC] += 1
        # w is uniform on [0, R): reuse it to pick the channel
        chosen = -1
        found = False
        for j in range(n):
            if ft[j] > 0.0:
                chosen = j
                if w < ft[j]:
                    found = True
                    break
                w -= ft[j]
        if not found:
            for ell in range(k):
                if st[ell] > 0.0:
                    chosen = n + ell
                    if w < st[ell]:
                        break
                    w -= st[ell]
        if chosen < 0:
            continue
        if chosen < n:
            j = chosen
            if w >= ft[j]:
                w = ft[j] * 0.999999999999
            r = pick_fast(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, X, D, j, w)
            nmol = apply_fast(f_gc[r], X, pos, nmol, j, rng)
            if nmol < 0:
                status = BREACH
                break
            istate[I_LAST_KIND] = K_FAST_MIXED if f_d2[r] else K_FAST_ONSITE
            istate[I_LAST_IDX] = j
            istate[I_LAST_R] = r
        else:
            ell = chosen - n
            if w >= st[ell]:
                w = st[ell] * 0.999999999999
            r = pick_slow(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, ell, w)
            nmol = apply_slow(spm, s_gd[r], s_isrd[r], bq[r], X, D, pos, nmol, ell, rng)
            if nmol < 0:
                status = BREACH
                break
            kind = K_SLOW_PURE if s_isrd[r] else K_SLOW_MIXED
            log_event(ev_t, ev_kind, ev_l, ev_r, ev_gd, nlog, t, kind, ell, s_glob[r], s_gd[r])
            nlog += 1
            istate[I_LAST_KIND] = kind
            istate[I_LAST_IDX] = ell
            istate[I_LAST_R] = r
        nev += 1
        since += 1
        need_bound = True
    fstate[0] = t
    istate[I_NEV] = nev
    istate[I_NMOL] = nmol
    istate[I_IOUT] = iout
    istate[I_NLOG] = nlog
    return status


@njit(cache=True)
def rebuild_direct(model, X, D, avg, deff, ft, st, tree, leaves):
    (mu, N2, macro, spm, f_gc, f_off, f_ti, f_tj, f_tc, f_d2,
     s_gc, s_gd, s_off, s_ti, s_tj, s_tc, s_isrd, s_glob, a_w, bq, tn, guard) = model
    n = X.size
    k = D.size
    rebuild_macro_cache(mu, macro, s_isrd, a_w, bq, X, avg, deff)
    for j in range(n):
        v = site_total(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, X, D, j)
        if v < 0.0:
            return False
        ft[j] = v
        leaves[j] = v
    for ell in range(k):
        v = macro_total(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, ell)
        if v < 0.0:
            return False
        st[ell] = v
        leaves[n + ell] = v
    fw_build(tree, leaves)
    return True


@njit(inline="always")
def touch_site(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, s_isrd, a_w, bq,
               X, D, avg, deff, ft, tree, leaves, j, old):
    """Refresh caches after X[j] (or D on its macrosite) changed; False on a negative rate."""
    ell = macro[j]
    delta = X[j] - old
    if delta != 0:
        for r in range(s_isrd.size):
            if s_isrd[r]:
                continue
            avg[r, ell] += a_w[r, j] * delta / mu
            was = 1 if old + bq[r, j] < 0 else 0
            now = 1 if X[j] + bq[r, j] < 0 else 0
            deff[r, ell] += now - was
    v = site_total(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, X, D, j)
    if v < 0.0:
        return False
    fw_add(tree, j, v - ft[j])
    ft[j] = v
    leaves[j] = v
    return True


@njit(inline="always")
def touch_macro(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, st, tree, leaves, n, ell):
    v = macro_total(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, ell)
    if v < 0.0:
        return False
    fw_add(tree, n + ell, v - st[ell])
    st[ell] = v
    leaves[n + ell] = v
    return True


@njit(cache=True)
def run_direct(X, D, pos, fstate, istate, rng, model, tout, snapX, snapD,
               ev_t, ev_kind, ev_l, ev_r, ev_gd, t_stop, max_events, max_add, chunk,
               nsteps, trace, trace_t, avg, deff, ft, st, tree, leaves):
    (mu, N2, macro, spm, f_gc, f_off, f_ti, f_tj, f_tc, f_d2,
     s_gc, s_gd, s_off, s_ti, s_tj, s_tc, s_isrd, s_glob, a_w, bq, tn, guard) = model
    n = X.size
    nout = tout.size
    t = fstate[0]
    nev = istate[I_NEV]
    nmol = istate[I_NMOL]
    iout = istate[I_IOUT]
    nlog = istate[I_NLOG]
    since = 0
    steps = 0
    status = DONE
    if not rebuild_direct(model, X, D, avg, deff, ft, st, tree, leaves):
        return NEG_RATE
    since_rebuild = 0
    has_slow = s_gc.size > 0
    while True:
        if not trace and iout < nout and tout[iout] <= t:
            record_snapshot(snapX, snapD, iout, X, D)
            iout += 1
            continue
        if t >= t_stop:
            status = DONE
            break
        if nsteps > 0 and steps >= nsteps:
            status = STEP_DONE
            break
        if nlog >= ev_t.size:
            status = LOG_FULL
            break
        if trace and iout >= trace_t.size:
            status = LOG_FULL
            break
        if nmol + max_add > pos.size:
            status = GROW
            break
        if since >= chunk:
            status = CHUNK
            break
        if nev >= max_events:
            status = BUDGET
            break
        if since_rebuild >= REBUILD_EVERY:
            if not rebuild_direct(model, X, D, avg, deff, ft, st, tree, leaves):
                status = NEG_RATE
                break
            since_rebuild = 0
        rd = 2.0 * N2 * nmol
        rr = fw_total(tree)
        if rr < 0.0:
            rr = 0.0
        R = rd + rr
        t_next = t_stop
        if not trace and iout < nout and tout[iout] < t_next:
            t_next = tout[iout]
        if R <= 0.0:
            # absorbed: the state is frozen up to the horizon
            while not trace and iout < nout and tout[iout] <= t_stop:
                record_snapshot(snapX, snapD, iout, X, D)
                iout += 1
            if t_stop < np.inf:
                t = t_stop
            status = EXTINCT
            break
        tau = exponential(rng) / R
        if t + tau >= t_next:
            t = t_next
            continue
        t += tau
        w = uniform(rng) * R
        ok = True
        if w < rd:
            # w / N2 is uniform on [0, 2 nmol): molecule m >> 1, direction m & 1
            m = int(w / N2)
            if m >= 2 * nmol:
                m = 2 * nmol - 1
            mol = m >> 1
            j = pos[mol]
            if m & 1:
                nj = j + 1 if j + 1 < n else 0
                kind = K_DIFF_RIGHT
            else:
                nj = j - 1 if j > 0 else n - 1
                kind = K_DIFF_LEFT
            pos[mol] = nj
            X[j] -= 1
            X[nj] += 1
            ok = touch_site(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, s_isrd, a_w, bq,
                            X, D, avg, deff, ft, tree, leaves, j, X[j] + 1)
            if ok:
                ok = touch_site(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, s_isrd, a_w, bq,
                                X, D, avg, deff, ft, tree, leaves, nj, X[nj] - 1)
            if ok and has_slow:
                ok = touch_macro(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, st, tree, leaves, n, macro[j])
                if ok and macro[nj] != macro[j]:
                    ok = touch_macro(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, st, tree, leaves, n,
                                     macro[nj])
            istate[I_LAST_KIND] = kind
            istate[I_LAST_IDX] = j
            istate[I_LAST_R] = -1
        else:
            leaf, w = fw_find(tree, leaves, w - rd)
            if leaf < n:
                j = leaf
                r = pick_fast(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, X, D, j, w)
                old = X[j]
                nmol = apply_fast(f_gc[r], X, pos, nmol, j, rng)
                if nmol < 0:
                    status = BREACH
                    break
                ok = touch_site(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, s_isrd, a_w, bq,
                                X, D, avg, deff, ft, tree, leaves, j, old)
                if ok and has_slow:
                    ok = touch_macro(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, st, tree, leaves, n,
                                     macro[j])
                istate[I_LAST_KIND] = K_FAST_MIXED if f_d2[r] else K_FAST_ONSITE
                istate[I_LAST_IDX] = j
                istate[I_LAST_R] = r
            else:
                ell = leaf - n
                r = pick_slow(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, ell, w)
                lo = ell * spm
                olds = X[lo:lo + spm].copy()
                nmol = apply_slow(spm, s_gd[r], s_isrd[r], bq[r], X, D, pos, nmol, ell, rng)
                if nmol < 0:
                    status = BREACH
                    break
                for q in range(spm):
                    if ok:
                        ok = touch_site(mu, macro, f_off, f_ti, f_tj, f_tc, f_d2, tn, s_isrd, a_w, bq,
                                        X, D, avg, deff, ft, tree, leaves, lo + q, olds[q])
                if ok:
                    ok = touch_macro(s_off, s_ti, s_tj, s_tc, s_isrd, guard, tn, D, avg, deff, st, tree, leaves, n, ell)
                kind = K_SLOW_PURE if s_isrd[r] else K_SLOW_MIXED
                log_event(ev_t, ev_kind, ev_l, ev_r, ev_gd, nlog, t, kind, ell, s_glob[r], s_gd[r])
                nlog += 1
                istate[I_LAST_KIND] = kind
                istate[I_LAST_IDX] = ell
                istate[I_LAST_R] = r
        nev += 1
        since += 1
        steps += 1
        since_rebuild += 1
        if trace:
            trace_t[iout] = t
            record_snapshot(snapX, snapD, iout, X, D)
            iout += 1
        if not ok:
            status = NEG_RATE
            break
    fstate[0] = t
    istate[I_NEV] = nev
    istate[I_NMOL] = nmol
    istate[I_IOUT] = iout
    istate[I_NLOG] = nlog
    return status
