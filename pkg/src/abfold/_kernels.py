"""Compiled hot paths: geometry, energies, local movement and the DE2P loop.

Everything here works on plain numpy arrays so the public modules can wrap
it. Angle vectors use the layout ``[theta_1 .. theta_{L-2}, beta_1 ..
beta_{L-3}]``; monomer ``m`` (1-based) lives in row ``m - 1`` of a position
array.
"""

import math

import numpy as np
from numba import njit

PI = math.pi
TWO_PI = 2.0 * math.pi

# Integer run-state slots (``cnt`` array).
FIRST_PHASE = 0
STALL1 = 1           # phase-1 evaluations since the local best last improved
COMP_STALL = 2       # component reinits since the local best last improved
NSE = 3
NSE1 = 4
NSE2 = 5
PB_IDX = 6
N_COMP = 7
N_RAND = 8
N_GEN = 9
STATUS = 10
NSE_SUCCESS = 11
TRACE_N = 12
N_SWITCH = 13
STALL2 = 14           # phase-2 evaluations since the local best last improved
CNT_SIZE = 15

RUNNING = 0
HIT_TARGET = 1
HIT_NSE_LIMIT = 2

# Float run-state slots (``fst`` array).
BEST_EO = 0          # lowest E_o seen in any evaluation
TRACE_LAST = 1       # population-best baseline for trace events
FST_SIZE = 2

# Parameter slots (``prm`` array).
P_PB = 0
P_LB = 1
P_C = 2
P_HC = 3
P_LAM = 4
P_EO_STOP = 5        # stop once E_o <= this value (-inf disables)
P_NSE_LIMIT = 6      # inf disables
P_BASE_GLOBAL = 7    # 1.0 -> mutate around the global best
P_STALL_TOL = 8      # relative decrease of the local best that counts as a change
P_STALL_RESET = 9    # 1.0 -> stagnation counters restart at every phase switch
P_LS_GLOBAL = 10     # 1.0 -> local moves must match the global best to be kept
P_REBASE = 11        # 1.0 -> local best restarts from the population at phase 2
PRM_SIZE = 12

# Rows of the best arrays: global, local, population, and the best local
# best since the last random reinit (used when the local best is rebased).
G = 0
LB = 1
PB = 2
RB = 3
N_BEST = 4


@njit(cache=True)
def wrap(u):
    while u <= -PI:
        u += TWO_PI
    while u > PI:
        u -= TWO_PI
    return u


@njit(cache=True)
def positions(x, n_mono, out):
    out[0, 0] = 0.0
    out[0, 1] = 0.0
    out[0, 2] = 0.0
    out[1, 0] = 0.0
    out[1, 1] = 1.0
    out[1, 2] = 0.0
    out[2, 0] = math.cos(x[0])
    out[2, 1] = 1.0 + math.sin(x[0])
    out[2, 2] = 0.0
    for i in range(3, n_mono):
        th = x[i - 2]
        be = x[n_mono + i - 5]
        cb = math.cos(be)
        out[i, 0] = out[i - 1, 0] + math.cos(th) * cb
        out[i, 1] = out[i - 1, 1] + math.sin(th) * cb
        out[i, 2] = out[i - 1, 2] + math.sin(be)


@njit(cache=True)
def lj_term(d2, c):
    """Pair term without the leading factor 4; d2 is the squared distance."""
    s = d2 * d2 * d2
    if s == 0.0:
        return np.inf
    inv6 = 1.0 / s
    return inv6 * (inv6 - c)


@njit(cache=True)
def bend_energy(x, n_mono):
    e = 0.0
    for k in range(n_mono - 2):
        e += 1.0 - math.cos(x[k])
    return 0.25 * e


@njit(cache=True)
def lj_energy(pos, n_mono, cc):
    e = 0.0
    for i in range(n_mono - 2):
        xi = pos[i, 0]
        yi = pos[i, 1]
        zi = pos[i, 2]
        for j in range(i + 2, n_mono):
            dx = pos[j, 0] - xi
            dy = pos[j, 1] - yi
            dz = pos[j, 2] - zi
            e += lj_term(dx * dx + dy * dy + dz * dz, cc[i, j])
    return 4.0 * e


@njit(cache=True)
def core_energy(pos, n_mono, is_a):
    n_a = 0
    cx = 0.0
    cy = 0.0
    cz = 0.0
    for i in range(n_mono):
        if is_a[i]:
            n_a += 1
            cx += pos[i, 0]
            cy += pos[i, 1]
            cz += pos[i, 2]
    if n_a == 0:
        return 0.0, 0.0, 0.0, 0.0, 0
    cx /= n_a
    cy /= n_a
    cz /= n_a
    e = 0.0
    if n_a > 1:
        for i in range(n_mono):
            if is_a[i]:
                dx = pos[i, 0] - cx
                dy = pos[i, 1] - cy
                dz = pos[i, 2] - cz
                e += math.sqrt(dx * dx + dy * dy + dz * dz)
    return e, cx, cy, cz, n_a


@njit(cache=True)
def evaluate(x, n_mono, cc, is_a, lam, first_phase, pos):
    """Return (fitness, E_o) for the current phase."""
    positions(x, n_mono, pos)
    eo = bend_energy(x, n_mono) + lj_energy(pos, n_mono, cc)
    if first_phase:
        ehc = core_energy(pos, n_mono, is_a)[0]
        return (eo + ehc) + lam, eo
    return eo, eo


@njit(cache=True)
def angles_from_vector(vx, vy, vz, fallback_theta):
    norm = math.sqrt(vx * vx + vy * vy + vz * vz)
    vx /= norm
    vy /= norm
    vz /= norm
    if vz > 1.0:
        vz = 1.0
    elif vz < -1.0:
        vz = -1.0
    beta = math.asin(vz)
    if math.cos(beta) > 1e-12:
        theta = wrap(math.atan2(vy, vx))
    else:
        theta = fallback_theta
    return theta, beta


@njit(cache=True)
def _angle_gap(a, b):
    return abs(wrap(a - b))


@njit(cache=True)
def nearest_branch(theta, beta, old_theta, old_beta):
    """Pick between (theta, beta) and its twin (theta + pi, pi - beta).

    Both give the same bond direction but different bend energy; keeping the
    twin closest to the previous angles leaves untouched bonds as they were.
    """
    alt_t = wrap(theta + PI)
    alt_b = PI - beta if beta >= 0.0 else -PI - beta
    d0 = _angle_gap(theta, old_theta) + _angle_gap(beta, old_beta)
    d1 = _angle_gap(alt_t, old_theta) + _angle_gap(alt_b, old_beta)
    if d1 < d0:
        return alt_t, alt_b
    return theta, beta


@njit(cache=True)
def _circle_point(ax, ay, az, bx, by, bz, qx, qy, qz, out):
    """Point at unit distance from a and b nearest to q; False if none exists."""
    nx = bx - ax
    ny = by - ay
    nz = bz - az
    d = math.sqrt(nx * nx + ny * ny + nz * nz)
    if d > 2.0:
        return False
    if d < 1e-12:
        # spheres coincide: project q onto the sphere around a
        wx = qx - ax
        wy = qy - ay
        wz = qz - az
        w = math.sqrt(wx * wx + wy * wy + wz * wz)
        if w < 1e-12:
            wx, wy, wz, w = 1.0, 0.0, 0.0, 1.0
        out[0] = ax + wx / w
        out[1] = ay + wy / w
        out[2] = az + wz / w
        return True
    nx /= d
    ny /= d
    nz /= d
    mx = 0.5 * (ax + bx)
    my = 0.5 * (ay + by)
    mz = 0.5 * (az + bz)
    r2 = 1.0 - 0.25 * d * d
    r = math.sqrt(r2) if r2 > 0.0 else 0.0
    wx = qx - mx
    wy = qy - my
    wz = qz - mz
    t = wx * nx + wy * ny + wz * nz
    wx -= t * nx
    wy -= t * ny
    wz -= t * nz
    w = math.sqrt(wx * wx + wy * wy + wz * wz)
    if w < 1e-12:
        # q on the axis: every circle point is equally near, take a fixed one
        if abs(nx) < 0.9:
            wx, wy, wz = 0.0, -nz, ny
        else:
            wx, wy, wz = nz, 0.0, -nx
        w = math.sqrt(wx * wx + wy * wy + wz * wz)
    out[0] = mx + r * wx / w
    out[1] = my + r * wy / w
    out[2] = mz + r * wz / w
    return True


@njit(cache=True)
def local_move(x, pos, n_mono, cc, n, d_theta, d_beta, ebb, elj,
               ang_idx, ang_val, moved, new_pos):
    """Move the bond into monomer n + 1 (1-based n in 2..L-1).

    Writes changed angle indices/values into ``ang_idx``/``ang_val``, moved
    monomer rows into ``moved``/``new_pos`` and returns
    ``(feasible, n_angles, n_moved, new_ebb, new_elj)``. Inputs are not
    modified.
    """
    nb = n_mono - 2  # offset of beta_1
    it = n - 2
    th = wrap(x[it] + d_theta)
    ang_idx[0] = it
    ang_val[0] = th
    n_ang = 1
    if n >= 3:
        ib = nb + n - 3
        be = wrap(x[ib] + d_beta)
        ang_idx[1] = ib
        ang_val[1] = be
        n_ang = 2
        cb = math.cos(be)
        dx = math.cos(th) * cb
        dy = math.sin(th) * cb
        dz = math.sin(be)
    else:
        dx = math.cos(th)
        dy = math.sin(th)
        dz = 0.0
    p = n - 1  # row of monomer n
    new_pos[0, 0] = pos[p, 0] + dx
    new_pos[0, 1] = pos[p, 1] + dy
    new_pos[0, 2] = pos[p, 2] + dz
    moved[0] = n
    n_moved = 1
    if n + 3 <= n_mono:
        ok = _circle_point(new_pos[0, 0], new_pos[0, 1], new_pos[0, 2],
                           pos[n + 2, 0], pos[n + 2, 1], pos[n + 2, 2],
                           pos[n + 1, 0], pos[n + 1, 1], pos[n + 1, 2],
                           new_pos[1])
        if not ok:
            return False, 0, 0, ebb, elj
        moved[1] = n + 1
        n_moved = 2
        t1, b1 = angles_from_vector(new_pos[1, 0] - new_pos[0, 0],
                                    new_pos[1, 1] - new_pos[0, 1],
                                    new_pos[1, 2] - new_pos[0, 2], x[n - 1])
        t1, b1 = nearest_branch(t1, b1, x[n - 1], x[nb + n - 2])
        t2, b2 = angles_from_vector(pos[n + 2, 0] - new_pos[1, 0],
                                    pos[n + 2, 1] - new_pos[1, 1],
                                    pos[n + 2, 2] - new_pos[1, 2], x[n])
        t2, b2 = nearest_branch(t2, b2, x[n], x[nb + n - 1])
        ang_idx[n_ang] = n - 1
        ang_val[n_ang] = t1
        ang_idx[n_ang + 1] = nb + n - 2
        ang_val[n_ang + 1] = b1
        ang_idx[n_ang + 2] = n
        ang_val[n_ang + 2] = t2
        ang_idx[n_ang + 3] = nb + n - 1
        ang_val[n_ang + 3] = b2
        n_ang += 4
    elif n + 2 == n_mono:
        moved[1] = n + 1
        n_moved = 2
        new_pos[1, 0] = new_pos[0, 0] + (pos[n + 1, 0] - pos[n, 0])
        new_pos[1, 1] = new_pos[0, 1] + (pos[n + 1, 1] - pos[n, 1])
        new_pos[1, 2] = new_pos[0, 2] + (pos[n + 1, 2] - pos[n, 2])

    # bend energy: only theta entries change
    d_bb = 0.0
    for k in range(n_ang):
        i = ang_idx[k]
        if i < nb:
            d_bb += math.cos(x[i]) - math.cos(ang_val[k])
    new_ebb = ebb + 0.25 * d_bb

    if math.isfinite(elj):
        d_lj = 0.0
        mag = 0.0
        for k in range(n_moved):
            m = moved[k]
            for j in range(n_mono):
                if abs(j - m) < 2:
                    continue
                ox = pos[m, 0] - pos[j, 0]
                oy = pos[m, 1] - pos[j, 1]
                oz = pos[m, 2] - pos[j, 2]
                nx = new_pos[k, 0] - pos[j, 0]
                ny = new_pos[k, 1] - pos[j, 1]
                nz = new_pos[k, 2] - pos[j, 2]
                c = cc[m, j]
                t_new = lj_term(nx * nx + ny * ny + nz * nz, c)
                t_old = lj_term(ox * ox + oy * oy + oz * oz, c)
                d_lj += t_new - t_old
                mag += abs(t_new) + abs(t_old)
        new_elj = elj + 4.0 * d_lj
        # rounding error of the update scales with the magnitudes involved
        if (abs(elj) + 4.0 * mag) * 1e-14 <= 1e-11 * (1.0 + abs(new_ebb + new_elj)):
            return True, n_ang, n_moved, new_ebb, new_elj

    # cancellation too severe (or an infinite term): rebuild the full sum
    saved = np.empty((2, 3))
    for k in range(n_moved):
        for c in range(3):
            saved[k, c] = pos[moved[k], c]
            pos[moved[k], c] = new_pos[k, c]
    new_elj = lj_energy(pos, n_mono, cc)
    for k in range(n_moved):
        for c in range(3):
            pos[moved[k], c] = saved[k, c]
    return True, n_ang, n_moved, new_ebb, new_elj


# --------------------------------------------------------------------------
# optimizer


@njit(cache=True)
def _record(cnt, fst, tr_nse, tr_phase, tr_fit, fit):
    k = cnt[TRACE_N]
    if k < tr_nse.shape[0]:
        tr_nse[k] = cnt[NSE]
        tr_phase[k] = 1 if cnt[FIRST_PHASE] else 2
        tr_fit[k] = fit
        cnt[TRACE_N] = k + 1
    fst[TRACE_LAST] = fit


@njit(cache=True)
def _count(cnt, fst, prm, eo, x, eo_best_x):
    """Book one energy evaluation; returns True when the run must stop."""
    cnt[NSE] += 1
    if cnt[FIRST_PHASE]:
        cnt[NSE1] += 1
        cnt[STALL1] += 1
    else:
        cnt[NSE2] += 1
        cnt[STALL2] += 1
    if eo < fst[BEST_EO]:
        fst[BEST_EO] = eo
        eo_best_x[:] = x
    if eo <= prm[P_EO_STOP]:
        cnt[STATUS] = HIT_TARGET
        cnt[NSE_SUCCESS] = cnt[NSE]
        return True
    if cnt[NSE] >= prm[P_NSE_LIMIT]:
        cnt[STATUS] = HIT_NSE_LIMIT
        return True
    return False


@njit(cache=True)
def best_index(fit):
    b = 0
    for i in range(1, fit.shape[0]):
        if fit[i] < fit[b]:
            b = i
    return b


@njit(cache=True)
def _set_pop_best(pop_x, pop_fit, pop_eo, best_x, best_fit, best_eo, cnt):
    b = best_index(pop_fit)
    cnt[PB_IDX] = b
    best_x[PB, :] = pop_x[b]
    best_fit[PB] = pop_fit[b]
    best_eo[PB] = pop_eo[b]


@njit(cache=True)
def random_angle(rng):
    return wrap(-PI + TWO_PI * rng.random())


@njit(cache=True)
def _evaluate_population(pop_x, pop_fit, pop_eo, n_mono, cc, is_a, cnt, fst,
                         prm, eo_best_x, pos):
    for i in range(pop_x.shape[0]):
        f, eo = evaluate(pop_x[i], n_mono, cc, is_a, prm[P_LAM],
                         cnt[FIRST_PHASE] != 0, pos)
        pop_fit[i] = f
        pop_eo[i] = eo
        if _count(cnt, fst, prm, eo, pop_x[i], eo_best_x):
            # unevaluated slots must never be picked as best
            for k in range(i + 1, pop_x.shape[0]):
                pop_fit[k] = np.inf
                pop_eo[k] = np.inf
            return True
    return False


@njit(cache=True)
def init_population(pop_x, pop_f, pop_cr, pop_fit, pop_eo, best_x, best_fit,
                    best_eo, eo_best_x, cnt, fst, prm, n_mono, cc, is_a, rng,
                    tr_nse, tr_phase, tr_fit):
    np_, d = pop_x.shape
    cnt[FIRST_PHASE] = 1
    for i in range(np_):
        for j in range(d):
            pop_x[i, j] = random_angle(rng)
        pop_f[i] = 0.5
        pop_cr[i] = 0.9
    pos = np.empty((n_mono, 3))
    _evaluate_population(pop_x, pop_fit, pop_eo, n_mono, cc, is_a, cnt, fst,
                         prm, eo_best_x, pos)
    _set_pop_best(pop_x, pop_fit, pop_eo, best_x, best_fit, best_eo, cnt)
    for r in (G, LB, RB):
        best_x[r, :] = best_x[PB]
        best_fit[r] = best_fit[PB]
        best_eo[r] = best_eo[PB]
    _record(cnt, fst, tr_nse, tr_phase, tr_fit, best_fit[PB])
    return cnt[STATUS]


@njit(cache=True)
def jde_sample(u_f, v_f, u_cr, v_cr, f_old, cr_old):
    """jDE rule given four uniform draws."""
    f = 0.1 + 0.9 * v_f if u_f < 0.1 else f_old
    cr = v_cr if u_cr < 0.1 else cr_old
    return f, cr


@njit(cache=True)
def jde_parameters(f_old, cr_old, rng):
    u_f = rng.random()
    v_f = rng.random() if u_f < 0.1 else 0.0
    u_cr = rng.random()
    v_cr = rng.random() if u_cr < 0.1 else 0.0
    return jde_sample(u_f, v_f, u_cr, v_cr, f_old, cr_old)


@njit(cache=True)
def pick_donors(np_, i, rng):
    r1 = rng.integers(0, np_)
    while r1 == i:
        r1 = rng.integers(0, np_)
    r2 = rng.integers(0, np_)
    while r2 == i or r2 == r1:
        r2 = rng.integers(0, np_)
    return r1, r2


@njit(cache=True)
def de_trial(pop_x, base, i, f, cr, rng, u):
    """DE/best/1/bin trial for individual i written into u; returns (r1, r2)."""
    np_, d = pop_x.shape
    r1, r2 = pick_donors(np_, i, rng)
    j_rand = rng.integers(0, d)
    for j in range(d):
        if rng.random() < cr or j == j_rand:
            u[j] = wrap(base[j] + f * (pop_x[r1, j] - pop_x[r2, j]))
        else:
            u[j] = pop_x[i, j]
    return r1, r2


@njit(cache=True)
def temporal_locality(base, u, xi, out):
    for j in range(base.shape[0]):
        out[j] = wrap(base[j] + 0.5 * (u[j] - xi[j]))


@njit(cache=True)
def component_reinit(src, c, rng, out, idx):
    """Copy src into out and redraw c distinct random components."""
    d = src.shape[0]
    out[:] = src
    for j in range(d):
        idx[j] = j
    for k in range(c):
        s = k + rng.integers(0, d - k)
        t = idx[k]
        idx[k] = idx[s]
        idx[s] = t
        out[idx[k]] = random_angle(rng)


@njit(cache=True)
def local_search(pop_x, pop_fit, pop_eo, best_x, best_fit, best_eo, xi,
                 n_mono, cc, cnt, fst, prm, eo_best_x, rng, tr_nse, tr_phase,
                 tr_fit, pos, ang_idx, ang_val, moved, new_pos):
    """Local movements around the population best; returns True on stop.

    Each feasible move costs one evaluation. Improvements (E_o <= current
    E_o of the population-best slot) are written into that slot.
    """
    b = cnt[PB_IDX]
    xb = pop_x[b]
    nb = n_mono - 2
    positions(xb, n_mono, pos)
    ebb = bend_energy(xb, n_mono)
    # fresh baseline so incremental drift cannot accumulate across calls
    elj = lj_energy(pos, n_mono, cc)
    saved = np.empty(6)
    for n in range(2, n_mono):
        d_theta = rng.random() * (xb[n - 2] - xi[n - 2])
        r_beta = rng.random()
        d_beta = 0.0
        if n >= 3:
            d_beta = r_beta * (xb[nb + n - 3] - xi[nb + n - 3])
        ok, n_ang, n_moved, new_ebb, new_elj = local_move(
            xb, pos, n_mono, cc, n, d_theta, d_beta, ebb, elj,
            ang_idx, ang_val, moved, new_pos)
        if not ok:
            continue
        e_v = new_ebb + new_elj
        if prm[P_LS_GLOBAL] != 0.0:
            accept = e_v <= best_fit[G]
        else:
            accept = e_v <= pop_eo[b]
        if accept or e_v < fst[BEST_EO]:
            for k in range(n_ang):
                saved[k] = xb[ang_idx[k]]
                xb[ang_idx[k]] = ang_val[k]
            stop = _count(cnt, fst, prm, e_v, xb, eo_best_x)
            if not accept:
                for k in range(n_ang):
                    xb[ang_idx[k]] = saved[k]
        else:
            stop = _count(cnt, fst, prm, e_v, xb, eo_best_x)
        if accept:
            for k in range(n_moved):
                for c in range(3):
                    pos[moved[k], c] = new_pos[k, c]
            ebb = new_ebb
            elj = new_elj
            pop_fit[b] = e_v
            pop_eo[b] = e_v
            best_x[PB, :] = xb
            best_fit[PB] = e_v
            best_eo[PB] = e_v
            if e_v < fst[TRACE_LAST]:
                _record(cnt, fst, tr_nse, tr_phase, tr_fit, e_v)
        if stop:
            return True
    return False


@njit(cache=True)
def _reexpress_as_eo(pop_x, pop_fit, pop_eo, best_x, best_fit, best_eo, cnt,
                     fst, prm):
    """Switch cached fitness from E_x to the stored E_o (no evaluations)."""
    for i in range(pop_x.shape[0]):
        pop_fit[i] = pop_eo[i]
    _set_pop_best(pop_x, pop_fit, pop_eo, best_x, best_fit, best_eo, cnt)
    if prm[P_REBASE] != 0.0:
        best_x[LB, :] = best_x[PB]
        best_fit[LB] = best_fit[PB]
        best_eo[LB] = best_eo[PB]
        if best_fit[PB] <= best_fit[G]:
            best_x[G, :] = best_x[PB]
            best_fit[G] = best_fit[PB]
            best_eo[G] = best_eo[PB]
    # otherwise the bests follow at the end of the next generation: an E_o
    # value always undercuts a stale E_x one, never a better E_o one.
    # Later phase-2 trace rows must improve on this starting point.
    fst[TRACE_LAST] = best_fit[PB]


@njit(cache=True)
def _improves(new, old, tol):
    if old == np.inf:
        return new < old
    return new < old - tol * (1.0 + abs(old))


@njit(cache=True)
def reinitialize(pop_x, pop_f, pop_cr, pop_fit, pop_eo, best_x, best_fit,
                 best_eo, eo_best_x, cnt, fst, prm, n_mono, cc, is_a, rng,
                 tr_nse, tr_phase, tr_fit):
    """End-of-generation phase control and restarts; returns True on stop."""
    np_, d = pop_x.shape
    tol = prm[P_STALL_TOL]
    rebase = prm[P_REBASE] != 0.0
    if best_fit[PB] <= best_fit[LB]:
        if _improves(best_fit[PB], best_fit[LB], tol):
            cnt[STALL1] = 0
            cnt[STALL2] = 0
            if not rebase:
                cnt[COMP_STALL] = 0
        best_x[LB, :] = best_x[PB]
        best_fit[LB] = best_fit[PB]
        best_eo[LB] = best_eo[PB]
    if rebase and _improves(best_fit[LB], best_fit[RB], tol):
        best_x[RB, :] = best_x[LB]
        best_fit[RB] = best_fit[LB]
        best_eo[RB] = best_eo[LB]
        cnt[COMP_STALL] = 0
    if cnt[FIRST_PHASE]:
        if cnt[STALL1] >= prm[P_HC] * d:
            cnt[FIRST_PHASE] = 0
            cnt[N_SWITCH] += 1
            if prm[P_STALL_RESET] != 0.0:
                cnt[STALL2] = 0
            _reexpress_as_eo(pop_x, pop_fit, pop_eo, best_x, best_fit,
                             best_eo, cnt, fst, prm)
        return False
    if cnt[STALL2] < prm[P_PB] * d:
        return False

    pos = np.empty((n_mono, 3))
    idx = np.empty(d, dtype=np.int64)
    c = int(prm[P_C])
    centre = RB if rebase else LB
    for i in range(np_):
        component_reinit(best_x[centre], c, rng, pop_x[i], idx)
    cnt[FIRST_PHASE] = 1
    cnt[N_SWITCH] += 1
    cnt[N_COMP] += 1
    if prm[P_STALL_RESET] != 0.0:
        cnt[STALL1] = 0
    cnt[COMP_STALL] += 1
    stop = _evaluate_population(pop_x, pop_fit, pop_eo, n_mono, cc, is_a, cnt,
                                fst, prm, eo_best_x, pos)
    _set_pop_best(pop_x, pop_fit, pop_eo, best_x, best_fit, best_eo, cnt)
    _record(cnt, fst, tr_nse, tr_phase, tr_fit, best_fit[PB])
    if stop:
        return True

    if cnt[COMP_STALL] >= prm[P_LB] * d:
        for i in range(np_):
            for j in range(d):
                pop_x[i, j] = random_angle(rng)
            pop_f[i] = 0.5
            pop_cr[i] = 0.9
        cnt[N_RAND] += 1
        stop = _evaluate_population(pop_x, pop_fit, pop_eo, n_mono, cc, is_a,
                                    cnt, fst, prm, eo_best_x, pos)
        # the local best is replaced, so every stagnation counter restarts
        cnt[STALL1] = 0
        cnt[STALL2] = 0
        cnt[COMP_STALL] = 0
        best_fit[RB] = np.inf
        _set_pop_best(pop_x, pop_fit, pop_eo, best_x, best_fit, best_eo, cnt)
        best_x[LB, :] = best_x[PB]
        best_fit[LB] = best_fit[PB]
        best_eo[LB] = best_eo[PB]
        _record(cnt, fst, tr_nse, tr_phase, tr_fit, best_fit[PB])
        if stop:
            return True
    return False


@njit(cache=True)
def generation(pop_x, pop_f, pop_cr, pop_fit, pop_eo, best_x, best_fit,
               best_eo, eo_best_x, cnt, fst, prm, n_mono, cc, is_a, rng,
               tr_nse, tr_phase, tr_fit):
    """One DE2P generation followed by the reinitialization step."""
    np_, d = pop_x.shape
    lam = prm[P_LAM]
    base_global = prm[P_BASE_GLOBAL] != 0.0
    u = np.empty(d)
    us = np.empty(d)
    pos = np.empty((n_mono, 3))
    ang_idx = np.empty(6, dtype=np.int64)
    ang_val = np.empty(6)
    moved = np.empty(2, dtype=np.int64)
    new_pos = np.empty((2, 3))

    for i in range(np_):
        first = cnt[FIRST_PHASE] != 0
        f, cr = jde_parameters(pop_f[i], pop_cr[i], rng)
        if base_global:
            base = best_x[G]
        else:
            base = pop_x[cnt[PB_IDX]]
        de_trial(pop_x, base, i, f, cr, rng, u)
        e_u, eo_u = evaluate(u, n_mono, cc, is_a, lam, first, pos)
        if _count(cnt, fst, prm, eo_u, u, eo_best_x):
            return True
        if e_u > pop_fit[i]:
            continue
        temporal_locality(base, u, pop_x[i], us)
        e_s, eo_s = evaluate(us, n_mono, cc, is_a, lam, first, pos)
        stop = _count(cnt, fst, prm, eo_s, us, eo_best_x)
        if e_s <= e_u:
            pop_x[i, :] = us
            pop_fit[i] = e_s
            pop_eo[i] = eo_s
        else:
            pop_x[i, :] = u
            pop_fit[i] = e_u
            pop_eo[i] = eo_u
        pop_f[i] = f
        pop_cr[i] = cr
        if i == cnt[PB_IDX]:
            best_x[PB, :] = pop_x[i]
            best_fit[PB] = pop_fit[i]
            best_eo[PB] = pop_eo[i]
        if pop_fit[i] < fst[TRACE_LAST]:
            _record(cnt, fst, tr_nse, tr_phase, tr_fit, pop_fit[i])
        if stop:
            return True
        if not first:
            if local_search(pop_x, pop_fit, pop_eo, best_x, best_fit, best_eo,
                            pop_x[i], n_mono, cc, cnt, fst, prm, eo_best_x,
                            rng, tr_nse, tr_phase, tr_fit, pos, ang_idx,
                            ang_val, moved, new_pos):
                return True

    _set_pop_best(pop_x, pop_fit, pop_eo, best_x, best_fit, best_eo, cnt)
    if best_fit[PB] <= best_fit[G]:
        best_x[G, :] = best_x[PB]
        best_fit[G] = best_fit[PB]
        best_eo[G] = best_eo[PB]
    cnt[N_GEN] += 1
    return reinitialize(pop_x, pop_f, pop_cr, pop_fit, pop_eo, best_x,
                        best_fit, best_eo, eo_best_x, cnt, fst, prm, n_mono,
                        cc, is_a, rng, tr_nse, tr_phase, tr_fit)


@njit(cache=True)
def advance(pop_x, pop_f, pop_cr, pop_fit, pop_eo, best_x, best_fit, best_eo,
            eo_best_x, cnt, fst, prm, n_mono, cc, is_a, rng, tr_nse, tr_phase,
            tr_fit, max_evals):
    """Run generations until a stop, a phase change or ``max_evals`` spent.

    Returns after whole generations only (unless the run stops), so a call
    never spans two phases; the caller can attribute its wall time to the
    phase that was active on entry. Also returns when the trace buffer is
    close to full.
    """
    np_ = pop_x.shape[0]
    room = tr_nse.shape[0] - np_ * (n_mono + 1) - 8
    start = cnt[NSE]
    phase = cnt[FIRST_PHASE]
    while cnt[STATUS] == RUNNING:
        generation(pop_x, pop_f, pop_cr, pop_fit, pop_eo, best_x, best_fit,
                   best_eo, eo_best_x, cnt, fst, prm, n_mono, cc, is_a, rng,
                   tr_nse, tr_phase, tr_fit)
        if cnt[FIRST_PHASE] != phase:
            break
        if cnt[NSE] - start >= max_evals or cnt[TRACE_N] >= room:
            break
    return cnt[STATUS]
