"""Per-path simulation loops compiled with numba.

Each batch function walks its paths one at a time and writes into
preallocated output arrays, so threads can fill disjoint slices without the
GIL.  ``_np_kernels`` holds the vectorised twins; both read the same
counter-based random numbers in the same order.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit
from .rng import ARRIVAL, KILL, MARK, NORMAL, THIN, normal, stream_key, uniform

# path status codes
OK, KILLED, FLOOR, ABORTED, OVERFLOW = 0, 1, 2, 3, 4
XI_MAX = 700.0

_N = np.uint64(NORMAL)
_A = np.uint64(ARRIVAL)
_M = np.uint64(MARK)
_K = np.uint64(KILL)
_T = np.uint64(THIN)


@njit
def _pick(cum, v):
    k = np.searchsorted(cum, v, side="right")
    if k >= cum.shape[0]:
        k = cum.shape[0] - 1
    return k


@njit
def line_integral(x, d, h, order):
    """``int_0^h (x + d s / h)^(order-1) ds``: the power integrated along the drift line.

    Expanded binomially as ``h * sum_k C(n,k)/n x^(n-k) d^(k-1)`` to avoid the
    cancellation in ``((x + d)^n - x^n) / (n d / h)``.
    """
    n = order
    acc = x ** (n - 1)
    c = 1.0
    for k in range(2, n + 1):
        c = c * (n - k + 1) / k
        acc += c * x ** (n - k) * d ** (k - 1)
    return h * acc


@njit
def lamperti_batch(seed, paths, z, targets, a, sx, dt, max_cells, lam, cum, locs, q, xi_floor,
                   out_z, out_t0, out_status, out_jumps):
    n_t = targets.shape[0]
    sq = sx * math.sqrt(dt)
    for row in range(paths.shape[0]):
        p = paths[row]
        kn = stream_key(seed, p, _N)
        ka = stream_key(seed, p, _A)
        km = stream_key(seed, p, _M)
        kk = stream_key(seed, p, _K)
        zeta = math.inf
        if q > 0.0:
            zeta = -math.log(uniform(kk, np.uint64(0))) / q
        j = 0
        s_jump = math.inf
        if lam > 0.0:
            s_jump = -math.log(uniform(ka, np.uint64(0))) / lam
        s = 0.0
        xi = 0.0
        big_i = 0.0
        jt = 0
        status = ABORTED
        t0 = math.inf
        done = False
        for i in range(max_cells):
            cell_end = (i + 1) * dt
            while True:
                seg_end = cell_end
                ev = 0
                if s_jump < seg_end:
                    seg_end = s_jump
                    ev = 1
                if zeta < seg_end:
                    seg_end = zeta
                    ev = 2
                delta = seg_end - s
                ex = math.exp(xi)
                x = a * delta
                phi = 1.0 if x == 0.0 else math.expm1(x) / x
                i_end = big_i + ex * delta * phi
                while jt < n_t and targets[jt] <= i_end:
                    out_z[row, jt] = z * max(ex + a * (targets[jt] - big_i), 0.0)
                    jt += 1
                big_i = i_end
                xi += x
                s = seg_end
                if jt == n_t:
                    status = OK
                    done = True
                    break
                if ev == 0:
                    break
                if ev == 1:
                    k = _pick(cum, uniform(km, np.uint64(j)) * lam)
                    xi += locs[k]
                    j += 1
                    s_jump = s - math.log(uniform(ka, np.uint64(j))) / lam
                    if xi < xi_floor:
                        status = FLOOR
                        t0 = z * big_i
                        done = True
                        break
                else:
                    status = KILLED
                    t0 = z * big_i
                    done = True
                    break
            if done:
                break
            xi += sq * normal(kn, np.uint64(i))
            if xi < xi_floor:
                status = FLOOR
                t0 = z * big_i
                break
            if xi > XI_MAX:
                status = OVERFLOW
                break
        fill = 0.0 if status in (KILLED, FLOOR) else math.nan
        for r in range(jt, n_t):
            out_z[row, r] = fill
        out_t0[row] = t0
        out_status[row] = status
        out_jumps[row] = j


@njit
def sde_batch(seed, paths, z, grid, is_out, b_pos, b_zero, s_eff, w1, cum_ev, locs, kill_rate, milstein,
              absorb, cap, max_sub, thin, order, a_n,
              out_z, out_cv, out_t0, out_status, out_counts, out_mart):
    """Simulate ``paths`` on ``grid``; ``is_out`` marks grid points that are outputs.

    ``out_counts`` columns: clamps, jumps, kills, substeps.  ``out_mart``
    columns: M1, M2, M3, int Z^(order-1) ds, all at the last grid point.
    """
    n_grid = grid.shape[0]
    n_jump = locs.shape[0]
    c = cum_ev[cum_ev.shape[0] - 1] if cum_ev.shape[0] > 0 else 0.0
    comp = 0.0
    for e in range(n_jump):
        prev = cum_ev[e - 1] if e > 0 else 0.0
        comp += (cum_ev[e] - prev) * math.expm1(locs[e])
    jfac = (comp - kill_rate) / c if c > 0.0 else 0.0
    s2 = s_eff * s_eff
    fo = float(order)
    for row in range(paths.shape[0]):
        p = paths[row]
        kn = stream_key(seed, p, _N)
        kt = stream_key(seed, p, _T)
        km = stream_key(seed, p, _M)
        x = z
        cv = z
        t0 = 0.0 if z == 0.0 else math.inf
        status = OK
        clamps = 0
        jumps = 0
        kills = 0
        k = 0
        m1 = 0.0
        m2 = 0.0
        m3 = 0.0
        integral = 0.0
        dead = False
        col = 0
        if is_out[0]:
            out_z[row, 0] = x
            out_cv[row, 0] = cv
            col = 1
        for g in range(n_grid - 1):
            big_h = grid[g + 1] - grid[g]
            t_cur = grid[g]
            rem = big_h
            while rem > 0.0 and not dead:
                h = rem
                rate = 0.0
                if x > 0.0 and c > 0.0:
                    rate = c / x
                    if rate * h > thin:
                        h = max(thin / rate, big_h / max_sub)
                        if h > rem or rem - h < 1e-9 * big_h:
                            h = rem
                b = b_pos if x > 0.0 else b_zero
                dw = 0.0
                if s_eff > 0.0:
                    dw = math.sqrt(h) * normal(kn, np.uint64(k))
                xn = x + b * h
                if x > 0.0 and s_eff > 0.0:
                    xn += s_eff * math.sqrt(x) * dw
                    if milstein:
                        xn += 0.25 * s2 * (dw * dw - h)
                if order > 0:
                    xm1 = x ** (order - 1) if order > 1 else 1.0
                    line = line_integral(x, b * h, h, order)
                    integral += line
                    if x > 0.0:
                        dm = fo * s_eff * x ** (fo - 0.5) * dw
                        if milstein:
                            dm += 0.5 * fo * (fo - 0.5) * s2 * xm1 * (dw * dw - h)
                        m1 += w1 * dm
                        m2 += (1.0 - w1) * dm - a_n * line
                        m3 += kill_rate * line
                if xn < 0.0:
                    xn = 0.0
                    clamps += 1
                pr = 0.0
                if rate > 0.0:
                    pr = -math.expm1(-rate * h)
                    if uniform(kt, np.uint64(k)) < pr:
                        e = _pick(cum_ev, uniform(km, np.uint64(k)) * c)
                        if e < n_jump:
                            if order > 0:
                                m2 += math.expm1(fo * locs[e]) * xn ** fo
                            xn *= math.exp(locs[e])
                            jumps += 1
                        else:
                            if order > 0:
                                m3 -= xn ** fo
                            xn = 0.0
                            kills += 1
                            if absorb:
                                dead = True
                cv += b * h + pr * (x + b * h) * jfac
                t_cur += h
                rem -= h
                k += 1
                if xn == 0.0 and x > 0.0 and t0 == math.inf:
                    t0 = t_cur
                x = xn
                if x > cap:
                    status = ABORTED
                    break
            if status == ABORTED:
                break
            if is_out[g + 1]:
                out_z[row, col] = x
                out_cv[row, col] = cv
                col += 1
        if status == ABORTED:
            for r in range(col, out_z.shape[1]):
                out_z[row, r] = math.nan
                out_cv[row, r] = math.nan
        elif dead:
            status = KILLED
        out_t0[row] = t0
        out_status[row] = status
        out_counts[row, 0] = clamps
        out_counts[row, 1] = jumps
        out_counts[row, 2] = kills
        out_counts[row, 3] = k
        out_mart[row, 0] = m1
        out_mart[row, 1] = m2
        out_mart[row, 2] = m3
        out_mart[row, 3] = integral
