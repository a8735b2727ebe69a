"""Vectorised numpy versions of the simulation loops.

Paths advance together; a path that needs extra work inside a cell (jumps,
sub-steps) keeps the inner loop running on just the rows that need it.  The
arithmetic mirrors ``_nb_kernels`` operation by operation so the backends agree
to round-off.
"""

from __future__ import annotations

import numpy as np

from ._nb_kernels import ABORTED, FLOOR, KILLED, OK, OVERFLOW, XI_MAX
from .rng import ARRIVAL, KILL, MARK, NORMAL, THIN, normals, stream_keys, uniforms


def _pick(cum, v):
    return np.minimum(np.searchsorted(cum, v, side="right"), cum.shape[0] - 1)


def lamperti_batch(seed, paths, z, targets, a, sx, dt, max_cells, lam, cum, locs, q, xi_floor,
                   out_z, out_t0, out_status, out_jumps):
    n = paths.shape[0]
    n_t = targets.shape[0]
    sq = sx * np.sqrt(dt)
    kn = stream_keys(seed, paths, NORMAL)
    ka = stream_keys(seed, paths, ARRIVAL)
    km = stream_keys(seed, paths, MARK)
    kk = stream_keys(seed, paths, KILL)
    zeta = np.full(n, np.inf)
    if q > 0:
        zeta = -np.log(uniforms(kk, np.zeros(n, dtype=np.uint64))) / q
    j = np.zeros(n, dtype=np.int64)
    s_jump = np.full(n, np.inf)
    if lam > 0:
        s_jump = -np.log(uniforms(ka, j)) / lam
    s = np.zeros(n)
    xi = np.zeros(n)
    big_i = np.zeros(n)
    jt = np.zeros(n, dtype=np.int64)
    status = np.full(n, ABORTED, dtype=np.int64)
    t0 = np.full(n, np.inf)
    active = np.arange(n)
    alive = np.ones(n, dtype=bool)
    rows_all = np.arange(n)

    for i in range(max_cells):
        if active.size == 0:
            break
        cell_end = (i + 1) * dt
        pend = active
        while pend.size:
            seg_end = np.full(pend.size, cell_end)
            ev = np.zeros(pend.size, dtype=np.int64)
            sj = s_jump[pend]
            m = sj < seg_end
            seg_end[m] = sj[m]
            ev[m] = 1
            zt = zeta[pend]
            m = zt < seg_end
            seg_end[m] = zt[m]
            ev[m] = 2
            delta = seg_end - s[pend]
            ex = np.exp(xi[pend])
            x = a * delta
            with np.errstate(invalid="ignore", divide="ignore"):
                phi = np.where(x == 0.0, 1.0, np.expm1(x) / np.where(x == 0.0, 1.0, x))
            i_end = big_i[pend] + ex * delta * phi
            i_prev = big_i[pend]
            while True:
                jp = jt[pend]
                open_ = jp < n_t
                hit = np.zeros(pend.size, dtype=bool)
                hit[open_] = targets[jp[open_]] <= i_end[open_]
                if not hit.any():
                    break
                rows = pend[hit]
                tj = targets[jp[hit]]
                out_z[rows, jp[hit]] = z * np.maximum(ex[hit] + a * (tj - i_prev[hit]), 0.0)
                jt[rows] += 1
            big_i[pend] = i_end
            xi[pend] += x
            s[pend] = seg_end
            fin = jt[pend] == n_t
            status[pend[fin]] = OK
            jump = (ev == 1) & ~fin
            kill = (ev == 2) & ~fin
            alive[pend[fin | kill]] = False
            if kill.any():
                rows = pend[kill]
                status[rows] = KILLED
                t0[rows] = z * big_i[rows]
            nxt = pend[jump]
            if nxt.size:
                k = _pick(cum, uniforms(km[nxt], j[nxt]) * lam)
                xi[nxt] += locs[k]
                j[nxt] += 1
                s_jump[nxt] = s[nxt] - np.log(uniforms(ka[nxt], j[nxt])) / lam
                low = xi[nxt] < xi_floor
                gone = nxt[low]
                status[gone] = FLOOR
                t0[gone] = z * big_i[gone]
                alive[gone] = False
                nxt = nxt[~low]
            pend = nxt
        active = active[alive[active]]
        if active.size == 0:
            break
        xi[active] += sq * normals(kn[active], np.full(active.size, i, dtype=np.uint64))
        low = xi[active] < xi_floor
        status[active[low]] = FLOOR
        t0[active[low]] = z * big_i[active[low]]
        high = xi[active] > XI_MAX
        status[active[high]] = OVERFLOW
        active = active[~(low | high)]

    for r in rows_all:
        fill = 0.0 if status[r] in (KILLED, FLOOR) else np.nan
        out_z[r, jt[r]:] = fill
    out_t0[:] = t0
    out_status[:] = status
    out_jumps[:] = j


def line_integral(x, d, h, order):
    """Vectorised twin of ``_nb_kernels.line_integral``."""
    n = order
    acc = x ** (n - 1)
    c = 1.0
    for k in range(2, n + 1):
        c = c * (n - k + 1) / k
        acc = acc + c * x ** (n - k) * d ** (k - 1)
    return h * acc


def sde_batch(seed, paths, z, grid, is_out, b_pos, b_zero, s_eff, w1, cum_ev, locs, kill_rate, milstein,
              absorb, cap, max_sub, thin, order, a_n,
              out_z, out_cv, out_t0, out_status, out_counts, out_mart, recorder=None):
    n = paths.shape[0]
    n_grid = grid.shape[0]
    n_jump = locs.shape[0]
    c = cum_ev[-1] if cum_ev.shape[0] else 0.0
    comp = 0.0
    for e in range(n_jump):
        prev = cum_ev[e - 1] if e > 0 else 0.0
        comp += (cum_ev[e] - prev) * np.expm1(locs[e])
    jfac = (comp - kill_rate) / c if c > 0.0 else 0.0
    s2 = s_eff * s_eff
    fo = float(order)
    kn = stream_keys(seed, paths, NORMAL)
    kt = stream_keys(seed, paths, THIN)
    km = stream_keys(seed, paths, MARK)

    x_all = np.full(n, float(z))
    cv_all = np.full(n, float(z))
    t0 = np.full(n, 0.0 if z == 0.0 else np.inf)
    status = np.full(n, OK, dtype=np.int64)
    counts = np.zeros((n, 4), dtype=np.int64)
    mart = np.zeros((n, 4))
    dead = np.zeros(n, dtype=bool)
    col = 0
    if is_out[0]:
        out_z[:, 0] = x_all
        out_cv[:, 0] = cv_all
        col = 1

    for g in range(n_grid - 1):
        big_h = grid[g + 1] - grid[g]
        live = np.flatnonzero(~dead & (status != ABORTED))
        rem = np.full(live.size, big_h)
        t_cur = np.full(live.size, grid[g])
        sub = np.arange(live.size)
        while sub.size:
            rows = live[sub]
            x = x_all[rows]
            h = rem[sub].copy()
            pos = x > 0.0
            rate = np.zeros(sub.size)
            if c > 0.0:
                rate[pos] = c / x[pos]
                adj = rate * h > thin
                if adj.any():
                    with np.errstate(divide="ignore"):
                        hn = np.maximum(thin / rate[adj], big_h / max_sub)
                    r_adj = rem[sub][adj]
                    hn = np.where((hn > r_adj) | (r_adj - hn < 1e-9 * big_h), r_adj, hn)
                    h[adj] = hn
            b = np.where(pos, b_pos, b_zero)
            ctr = counts[rows, 3].astype(np.uint64)
            if s_eff > 0.0:
                dw = np.sqrt(h) * normals(kn[rows], ctr)
            else:
                dw = np.zeros(sub.size)
            xn = x + b * h
            if s_eff > 0.0:
                xp = x[pos]
                xn[pos] += s_eff * np.sqrt(xp) * dw[pos]
                if milstein:
                    xn[pos] += 0.25 * s2 * (dw[pos] * dw[pos] - h[pos])
            if order > 0:
                xm1 = x ** (order - 1) if order > 1 else np.ones(sub.size)
                line = line_integral(x, b * h, h, order)
                mart[rows, 3] += line
                if pos.any():
                    rp = rows[pos]
                    dwp, hp, xmp, lp = dw[pos], h[pos], xm1[pos], line[pos]
                    dm = fo * s_eff * x[pos] ** (fo - 0.5) * dwp
                    if milstein:
                        dm += 0.5 * fo * (fo - 0.5) * s2 * xmp * (dwp * dwp - hp)
                    mart[rp, 0] += w1 * dm
                    mart[rp, 1] += (1.0 - w1) * dm - a_n * lp
                    mart[rp, 2] += kill_rate * lp
            neg = xn < 0.0
            xn[neg] = 0.0
            counts[rows[neg], 0] += 1
            x_mid = xn.copy()
            pr = np.zeros(sub.size)
            kind = np.zeros(sub.size, dtype=np.int64)
            u_ev = np.full(sub.size, np.nan)
            has = rate > 0.0
            if has.any():
                pr[has] = -np.expm1(-rate[has] * h[has])
                fire = np.zeros(sub.size, dtype=bool)
                fire[has] = uniforms(kt[rows[has]], ctr[has]) < pr[has]
                if fire.any():
                    e = _pick(cum_ev, uniforms(km[rows[fire]], ctr[fire]) * c)
                    fidx = np.flatnonzero(fire)
                    isj = e < n_jump
                    ji = fidx[isj]
                    if ji.size:
                        loc = locs[e[isj]]
                        if order > 0:
                            mart[rows[ji], 1] += np.expm1(fo * loc) * xn[ji] ** fo
                        xn[ji] *= np.exp(loc)
                        counts[rows[ji], 1] += 1
                        kind[ji] = 1
                        u_ev[ji] = loc
                    ki = fidx[~isj]
                    if ki.size:
                        if order > 0:
                            mart[rows[ki], 2] -= xn[ki] ** fo
                        xn[ki] = 0.0
                        counts[rows[ki], 2] += 1
                        kind[ki] = 2
                        if absorb:
                            dead[rows[ki]] = True
            cv_all[rows] += b * h + pr * (x + b * h) * jfac
            t_cur[sub] += h
            rem[sub] -= h
            counts[rows, 3] += 1
            hit0 = (xn == 0.0) & (x > 0.0) & (t0[rows] == np.inf)
            t0[rows[hit0]] = t_cur[sub][hit0]
            if recorder is not None:
                for q_ in range(sub.size):
                    recorder(t_cur[sub][q_] - h[q_], h[q_], x[q_], dw[q_], x_mid[q_], int(kind[q_]), u_ev[q_], b[q_])
            x_all[rows] = xn
            over = xn > cap
            if over.any():
                status[rows[over]] = ABORTED
                x_all[rows[over]] = np.nan
                cv_all[rows[over]] = np.nan
            keep = (rem[sub] > 0.0) & ~dead[rows] & ~over
            sub = sub[keep]
        if is_out[g + 1]:
            out_z[:, col] = x_all
            out_cv[:, col] = cv_all
            col += 1
    status[dead & (status != ABORTED)] = KILLED
    out_t0[:] = t0
    out_status[:] = status
    out_counts[:] = counts
    out_mart[:] = mart
