"""Compiled inner loops of the coupled time integration.

Everything here works on flat numpy arrays prepared by
:mod:`wtbridge.coupled_solver`; see that module for the meaning of the inputs.
Status codes returned by :func:`integrate`: 0 ok, 1 interaction iteration did
not converge, 2 non-finite state, 3 quasi-steady validity violation.
"""

import math

import numpy as np
from numba import njit

OK, NOT_CONVERGED, NON_FINITE, FLOW_REVERSAL = 0, 1, 2, 3

# stats slots
S_ITER_TOTAL, S_ITER_MAX, S_CLAMPS, S_SEPARATIONS, S_ACTIVE_MAX, S_ACTIVATIONS = range(6)
N_STATS = 6


@njit(cache=True)
def _lookup(ta, a):
    """Segment index and weight for linear interpolation, clamped at the ends."""
    n = ta.size
    if a <= ta[0]:
        return 0, 0.0, a < ta[0]
    if a >= ta[n - 1]:
        return n - 2, 1.0, a > ta[n - 1]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ta[mid] <= a:
            lo = mid
        else:
            hi = mid
    return lo, (a - ta[lo]) / (ta[lo + 1] - ta[lo]), False


@njit(cache=True)
def aero_modal(q, qd, U, u_row, w_row, feedback, Ph, Pp, Pa, ih, ip, ia, trib, ta, tCD, tCL, tCM,
               m_centre, B, rho, static_angle, printed, out, stats):
    """Generalised quasi-steady forces; returns False on flow reversal.

    ``ih``, ``ip``, ``ia`` list the modes with non-zero vertical, lateral and
    torsional shapes; other entries of the shape matrices are never read.
    """
    n_s, n_m = Ph.shape
    for m in range(n_m):
        out[m] = 0.0
    for j in range(n_s):
        hd = 0.0
        pd = 0.0
        al = 0.0
        ald = 0.0
        if feedback:
            for m in ih:
                hd -= Ph[j, m] * qd[m]  # aerodynamic h is positive downward
            for m in ip:
                pd += Pp[j, m] * qd[m]
            for m in ia:
                al += Pa[j, m] * q[m]
                ald += Pa[j, m] * qd[m]
        hor = U + u_row[j] - pd
        if not hor > 0.0:
            return False
        c = 0.5 * rho * B * trib[j]
        f_d = 0.0
        f_l = 0.0
        f_m = 0.0
        for i in range(3):
            ver = w_row[j] + hd + m_centre[i] * B * ald
            phi = math.atan(ver / hor)
            ae = static_angle + al + phi
            ur2 = ver * ver + hor * hor
            k, f, clamped = _lookup(ta, ae)
            if clamped:
                stats[S_CLAMPS] += 1
            if i == 2:
                cm = (1.0 - f) * tCM[k] + f * tCM[k + 1]
                f_m = c * ur2 * B * cm
                continue
            cd = (1.0 - f) * tCD[k] + f * tCD[k + 1]
            cl = (1.0 - f) * tCL[k] + f * tCL[k + 1]
            fd = c * ur2 * cd
            fl = c * ur2 * cl
            sp = math.sin(phi)
            cp = math.cos(phi)
            if i == 0:
                f_d = fl * sp - fd * cp if printed else fd * cp - fl * sp
            else:
                f_l = fl * cp - fd * sp if printed else fl * cp + fd * sp
        for m in ih:
            out[m] += Ph[j, m] * f_l
        for m in ip:
            out[m] += Pp[j, m] * f_d
        for m in ia:
            out[m] += Pa[j, m] * f_m
    return True


@njit(cache=True)
def _travel(pos, tr_t0, tr_dt, v, t):
    """Front-bumper travel coordinate and speed of vehicle ``v`` at ``t`` (NaN if absent)."""
    kk = (t - tr_t0) / tr_dt
    n_tt = pos.shape[1]
    if kk < 0.0 or kk > n_tt - 1:
        return np.nan, 0.0
    i = int(math.floor(kk))
    if i > n_tt - 2:
        i = n_tt - 2
    f = kk - i
    a = pos[v, i]
    b = pos[v, i + 1]
    if math.isnan(a) or math.isnan(b):
        return np.nan, 0.0
    return (1.0 - f) * a + f * b, (b - a) / tr_dt


@njit(cache=True)
def _any_on_deck(s, v, veh_dir, w_off, nw, w_front, deck_len):
    for k in range(w_off[v], w_off[v] + nw[v]):
        x = s - w_front[k]
        if veh_dir[v] < 0:
            x = deck_len - x
        if 0.0 <= x < deck_len:
            return True
    return False


@njit(cache=True)
def _wheel_geometry(v, s, speed, veh_dir, w_off, nw, w_front, w_y, w_track, grid, PhT, PaT,
                    rx0, rdx, rz, deck_len, g, gp, on_deck, zr, zslope, xdot):
    """Shape weights, roughness and convective speed at every wheel of ``v``."""
    n_m = PhT.shape[1]
    n_x = rz.shape[1]
    for k in range(w_off[v], w_off[v] + nw[v]):
        x = s - w_front[k]
        if veh_dir[v] < 0:
            x = deck_len - x
        xdot[k] = veh_dir[v] * speed
        r = (x - rx0) / rdx
        i = int(math.floor(r))
        if i < 0:
            i = 0
        elif i > n_x - 2:
            i = n_x - 2
        f = r - i
        tr = w_track[k]
        zr[k] = (1.0 - f) * rz[tr, i] + f * rz[tr, i + 1]
        zslope[k] = (rz[tr, i + 1] - rz[tr, i]) / rdx
        on_deck[k] = 0.0 <= x < deck_len
        if not on_deck[k]:
            for m in range(n_m):
                g[k, m] = 0.0
                gp[k, m] = 0.0
            continue
        lo = 0
        hi = grid.size - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if grid[mid] <= x:
                lo = mid
            else:
                hi = mid
        h = grid[lo + 1] - grid[lo]
        fw = (x - grid[lo]) / h
        y = w_y[k]
        for m in range(n_m):
            a = PhT[lo, m] + y * PaT[lo, m]
            b = PhT[lo + 1, m] + y * PaT[lo + 1, m]
            g[k, m] = (1.0 - fw) * a + fw * b
            gp[k, m] = (b - a) / h


@njit(cache=True)
def _road(k, q, qd, rigid, iw, g, gp, zr, zslope, xdot):
    r = zr[k]
    rd = xdot[k] * zslope[k]
    if not rigid:
        for m in iw:
            r += g[k, m] * q[m]
            rd += g[k, m] * qd[m] + xdot[k] * gp[k, m] * q[m]
    return r, rd


@njit(cache=True)
def _activate(v, q, qd, rigid, iw, dof_off, ndof, mat_off, w_off, nw, w_dof, w_kt, w_ct, Kinvf, Minvf,
              g, gp, zr, zslope, xdot, z, zd, zdd):
    """Static equilibrium on the current road profile, zero velocity."""
    n = ndof[v]
    o = dof_off[v]
    mo = mat_off[v]
    for i in range(n):
        z[o + i] = 0.0
        zd[o + i] = 0.0
        zdd[o + i] = 0.0
    for k in range(w_off[v], w_off[v] + nw[v]):
        r, rd = _road(k, q, qd, rigid, iw, g, gp, zr, zslope, xdot)
        col = w_dof[k]
        for i in range(n):
            z[o + i] += Kinvf[mo + i * n + col] * w_kt[k] * r
            zdd[o + i] += Minvf[mo + i * n + col] * w_ct[k] * rd


@njit(cache=True)
def _contact(v, q1, qd1, rigid, iw, dof_off, ndof, mat_off, w_off, nw, w_dof, w_kt, w_ct, w_static,
             Khinvf, zb, z, zd, g, gp, zr, zslope, xdot, a1, rr, rrd, P, Fw):
    """Tyre forces of vehicle ``v`` (downward on the road) for a trial bridge state."""
    n = ndof[v]
    o = dof_off[v]
    mo = mat_off[v]
    k0 = w_off[v]
    k1 = k0 + nw[v]
    for k in range(k0, k1):
        r, rd = _road(k, q1, qd1, rigid, iw, g, gp, zr, zslope, xdot)
        rr[k] = r
        rrd[k] = rd
        P[k] = w_kt[k] * r + w_ct[k] * rd
    for k in range(k0, k1):
        col = w_dof[k]
        zw = zb[o + col]
        for j in range(k0, k1):
            zw += Khinvf[mo + col * n + w_dof[j]] * P[j]
        zwd = a1 * (zw - z[o + col]) - zd[o + col]
        Fw[k] = w_static[k] + w_kt[k] * (rr[k] - zw) + w_ct[k] * (rrd[k] - zwd)


@njit(cache=True)
def integrate(
    # bridge (diagonal modal matrices) and initial state
    Mb, Cb, Kb, dt, n_total, q, qd, q_ref, ext,
    # aerodynamics
    use_aero, feedback, U, wind_u, wind_w, Ph, Pp, Pa, ih, ip, ia, trib, ta, tCD, tCL, tCM, m_centre, B, rho,
    static_angle, printed,
    # deck shapes at the node grid, for wheel contact
    grid, PhT, PaT, iw,
    # roughness
    rx0, rdx, rz,
    # traffic and vehicles (sorted by road entry time)
    tr_t0, tr_dt, pos, entry_t, veh_dir, dof_off, ndof, mat_off, w_off, nw,
    Kinvf, Minvf, Khinvf, Mf, Cf,
    w_dof, w_kt, w_ct, w_static, w_front, w_y, w_track,
    # solver options
    tol, max_iter, rigid, unilateral, rec_start, rec_every, out_q, trace_vehicle, trace,
    stats,
):
    n_m = Mb.size
    n_veh = entry_t.size
    n_w = w_kt.size
    n_dof_all = dof_off[n_veh - 1] + ndof[n_veh - 1] if n_veh > 0 else 0
    deck_len = grid[-1]
    a0 = 4.0 / (dt * dt)
    a1 = 2.0 / dt
    a2 = 4.0 / dt
    Kh = Kb + a0 * Mb + a1 * Cb

    z = np.zeros(n_dof_all)
    zd = np.zeros(n_dof_all)
    zdd = np.zeros(n_dof_all)
    zb = np.zeros(n_dof_all)
    state = np.zeros(n_veh, np.int8)
    g = np.zeros((n_w, n_m))
    gp = np.zeros((n_w, n_m))
    on_deck = np.zeros(n_w, np.bool_)
    zr = np.zeros(n_w)
    zslope = np.zeros(n_w)
    xdot = np.zeros(n_w)
    rr = np.zeros(n_w)
    rrd = np.zeros(n_w)
    P = np.zeros(n_w)
    Fw = np.zeros(n_w)
    active = np.zeros(n_veh, np.int64)
    n_active = 0

    F = np.zeros(n_m)
    Fa = np.zeros(n_m)
    Fn = np.zeros(n_m)
    qdd = np.zeros(n_m)
    q1 = np.zeros(n_m)
    qd1 = np.zeros(n_m)
    bb = np.zeros(n_m)
    lo = 0

    for n in range(n_total):
        t1 = (n + 1) * dt
        if n == 0:
            # activate vehicles already on the deck and evaluate forces at t = 0
            for v in range(n_veh):
                if entry_t[v] > 0.0:
                    break
                s, speed = _travel(pos, tr_t0, tr_dt, v, 0.0)
                if math.isnan(s) or not _any_on_deck(s, v, veh_dir, w_off, nw, w_front, deck_len):
                    continue
                _wheel_geometry(v, s, speed, veh_dir, w_off, nw, w_front, w_y, w_track, grid, PhT, PaT,
                                rx0, rdx, rz, deck_len, g, gp, on_deck, zr, zslope, xdot)
                _activate(v, q, qd, rigid, iw, dof_off, ndof, mat_off, w_off, nw, w_dof, w_kt, w_ct,
                          Kinvf, Minvf, g, gp, zr, zslope, xdot, z, zd, zdd)
                state[v] = 1
                stats[S_ACTIVATIONS] += 1
                active[n_active] = v
                n_active += 1
                for k in range(w_off[v], w_off[v] + nw[v]):
                    r, rd = _road(k, q, qd, rigid, iw, g, gp, zr, zslope, xdot)
                    col = w_dof[k]
                    o = dof_off[v]
                    Fw[k] = w_static[k] + w_kt[k] * (r - z[o + col]) + w_ct[k] * (rd - zd[o + col])
                    if on_deck[k]:
                        for m in iw:
                            F[m] -= Fw[k] * g[k, m]
            if ext.shape[0] > 0:
                for m in range(n_m):
                    F[m] += ext[0, m]
            if use_aero:
                if not aero_modal(q, qd, U, wind_u[0], wind_w[0], feedback, Ph, Pp, Pa, ih, ip, ia, trib, ta, tCD,
                                  tCL, tCM, m_centre, B, rho, static_angle, printed, Fa, stats):
                    return FLOW_REVERSAL, 0
                for m in range(n_m):
                    F[m] += Fa[m]
            for m in range(n_m):
                qdd[m] = (F[m] - Cb[m] * qd[m] - Kb[m] * q[m]) / Mb[m]
            if trace_vehicle >= 0:
                if state[trace_vehicle] == 1:
                    acc = 0.0
                    for k in range(w_off[trace_vehicle], w_off[trace_vehicle] + nw[trace_vehicle]):
                        acc += Fw[k]
                    trace[0] = acc
                else:
                    trace[0] = np.nan

        if n >= rec_start and (n - rec_start) % rec_every == 0:
            r_i = (n - rec_start) // rec_every
            if r_i < out_q.shape[0]:
                for m in range(n_m):
                    out_q[r_i, m] = q[m] - q_ref[m]
        if n == n_total - 1:
            break

        # vehicle set at t1: activation uses the road at t_n
        while lo < n_veh and state[lo] == 2:
            lo += 1
        for v in range(lo, n_veh):
            if entry_t[v] > t1:
                break
            if state[v] != 0:
                continue
            s, speed = _travel(pos, tr_t0, tr_dt, v, t1)
            if math.isnan(s) or not _any_on_deck(s, v, veh_dir, w_off, nw, w_front, deck_len):
                continue
            s0, speed0 = _travel(pos, tr_t0, tr_dt, v, t1 - dt)
            if math.isnan(s0):
                s0, speed0 = s, speed
            _wheel_geometry(v, s0, speed0, veh_dir, w_off, nw, w_front, w_y, w_track, grid, PhT, PaT,
                            rx0, rdx, rz, deck_len, g, gp, on_deck, zr, zslope, xdot)
            _activate(v, q, qd, rigid, iw, dof_off, ndof, mat_off, w_off, nw, w_dof, w_kt, w_ct,
                      Kinvf, Minvf, g, gp, zr, zslope, xdot, z, zd, zdd)
            state[v] = 1
            stats[S_ACTIVATIONS] += 1
            active[n_active] = v
            n_active += 1
        # drop vehicles that have left, keep the active list ordered
        kept = 0
        for i in range(n_active):
            v = active[i]
            s, speed = _travel(pos, tr_t0, tr_dt, v, t1)
            if math.isnan(s) or not _any_on_deck(s, v, veh_dir, w_off, nw, w_front, deck_len):
                state[v] = 2
                continue
            active[kept] = v
            kept += 1
            _wheel_geometry(v, s, speed, veh_dir, w_off, nw, w_front, w_y, w_track, grid, PhT, PaT,
                            rx0, rdx, rz, deck_len, g, gp, on_deck, zr, zslope, xdot)
            # Newmark history terms of the vehicle, mapped through the effective inverse
            nd = ndof[v]
            o = dof_off[v]
            mo = mat_off[v]
            for i2 in range(nd):
                acc = 0.0
                for j in range(nd):
                    mij = Mf[mo + i2 * nd + j]
                    cij = Cf[mo + i2 * nd + j]
                    acc += mij * (a0 * z[o + j] + a2 * zd[o + j] + zdd[o + j]) + cij * (a1 * z[o + j] + zd[o + j])
                zb[o + i2] = acc
            tmp = np.empty(nd)
            for i2 in range(nd):
                acc = 0.0
                for j in range(nd):
                    acc += Khinvf[mo + i2 * nd + j] * zb[o + j]
                tmp[i2] = acc
            for i2 in range(nd):
                zb[o + i2] = tmp[i2]
        n_active = kept
        if n_active > stats[S_ACTIVE_MAX]:
            stats[S_ACTIVE_MAX] = n_active

        for m in range(n_m):
            bb[m] = Mb[m] * (a0 * q[m] + a2 * qd[m] + qdd[m]) + Cb[m] * (a1 * q[m] + qd[m])

        converged = False
        it = 0
        while it < max_iter:
            it += 1
            for m in range(n_m):
                q1[m] = (F[m] + bb[m]) / Kh[m]
                qd1[m] = a1 * (q1[m] - q[m]) - qd[m]
                Fn[m] = ext[n + 1, m] if ext.shape[0] > 0 else 0.0
            if use_aero:
                if not aero_modal(q1, qd1, U, wind_u[n + 1], wind_w[n + 1], feedback, Ph, Pp, Pa, ih, ip, ia, trib,
                                  ta, tCD, tCL, tCM, m_centre, B, rho, static_angle, printed, Fa, stats):
                    return FLOW_REVERSAL, n + 1
                for m in range(n_m):
                    Fn[m] += Fa[m]
            for i in range(n_active):
                v = active[i]
                _contact(v, q1, qd1, rigid, iw, dof_off, ndof, mat_off, w_off, nw, w_dof, w_kt, w_ct,
                         w_static, Khinvf, zb, z, zd, g, gp, zr, zslope, xdot, a1, rr, rrd, P, Fw)
                for k in range(w_off[v], w_off[v] + nw[v]):
                    if not on_deck[k]:
                        continue
                    f = Fw[k]
                    if unilateral and f < 0.0:
                        f = 0.0
                    for m in iw:
                        Fn[m] -= f * g[k, m]
            diff = 0.0
            nrm = 0.0
            for m in range(n_m):
                d = Fn[m] - F[m]
                diff += d * d
                nrm += Fn[m] * Fn[m]
                F[m] = Fn[m]
            if diff <= tol * tol * nrm:
                converged = True
                break
        stats[S_ITER_TOTAL] += it
        if it > stats[S_ITER_MAX]:
            stats[S_ITER_MAX] = it
        if not converged:
            return NOT_CONVERGED, n + 1

        # accept the step
        finite = True
        for m in range(n_m):
            qdd_new = a0 * (q1[m] - q[m]) - a2 * qd[m] - qdd[m]
            qd[m] = qd1[m]
            q[m] = q1[m]
            qdd[m] = qdd_new
            if not math.isfinite(q1[m]):
                finite = False
        if not finite:
            return NON_FINITE, n + 1
        for i in range(n_active):
            v = active[i]
            nd = ndof[v]
            o = dof_off[v]
            mo = mat_off[v]
            k0 = w_off[v]
            for i2 in range(nd):
                z1 = zb[o + i2]
                for k in range(k0, k0 + nw[v]):
                    z1 += Khinvf[mo + i2 * nd + w_dof[k]] * P[k]
                zd1 = a1 * (z1 - z[o + i2]) - zd[o + i2]
                zdd1 = a0 * (z1 - z[o + i2]) - a2 * zd[o + i2] - zdd[o + i2]
                z[o + i2] = z1
                zd[o + i2] = zd1
                zdd[o + i2] = zdd1
            for k in range(k0, k0 + nw[v]):
                if Fw[k] < 0.0:
                    stats[S_SEPARATIONS] += 1
        if trace_vehicle >= 0:
            if state[trace_vehicle] == 1:
                acc = 0.0
                for k in range(w_off[trace_vehicle], w_off[trace_vehicle] + nw[trace_vehicle]):
                    acc += Fw[k]
                trace[n + 1] = acc
            else:
                trace[n + 1] = np.nan
    return OK, n_total
