"""Compiled closed loop used by :func:`formctl.sim.run_scenario`.

This is a loop-level transcription of ``FormationController`` and
``integrate_step``; the test suite checks the two against each other.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from formctl.collision import TAPER_START

EULER = 0
RK4 = 1


@njit(cache=True)
def _matmul(A, X, out):
    n, k = A.shape
    for i in range(n):
        x = 0.0
        y = 0.0
        for j in range(k):
            x += A[i, j] * X[j, 0]
            y += A[i, j] * X[j, 1]
        out[i, 0] = x
        out[i, 1] = y


@njit(cache=True)
def _accel(vel, th, om, tau, mass, radius, offset, hgain, a_out, alpha_out):
    for i in range(th.size):
        s = np.sin(th[i])
        c = np.cos(th[i])
        fwd = om[i] * (c * vel[i, 0] + s * vel[i, 1])
        cen = -offset[i] * om[i] * om[i]
        common = (tau[i, 0] + tau[i, 1]) / (mass[i] * radius[i])
        diff = tau[i, 0] - tau[i, 1]
        lat = offset[i] * hgain[i] * diff
        a_out[i, 0] = -s * fwd + cen * c + common * c - lat * s
        a_out[i, 1] = c * fwd + cen * s + common * s + lat * c
        alpha_out[i] = hgain[i] * diff


@njit(cache=True)
def _potential(pos, vel, b, lc, rs, grad, rate):
    n = pos.shape[0]
    width = (1.0 - TAPER_START) * rs
    for i in range(n):
        gx = 0.0
        gy = 0.0
        rx = 0.0
        ry = 0.0
        for j in range(n):
            if j == i:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            rho = np.sqrt(dx * dx + dy * dy)
            u = (rho - TAPER_START * rs) / width
            if u >= 1.0:
                continue
            if u < 0.0:
                u = 0.0
            w = 1.0 - u * u * (3.0 - 2.0 * u)
            dw = -6.0 * u * (1.0 - u) / width
            g = b * np.exp(-rho * rho / lc)
            gx += w * g * dx
            gy += w * g * dy
            vx = vel[i, 0] - vel[j, 0]
            vy = vel[i, 1] - vel[j, 1]
            inner = dx * vx + dy * vy
            rho_dot = inner / rho if rho > 0.0 else 0.0
            radial = dw * rho_dot - (2.0 / lc) * w * inner
            rx += g * (w * vx + radial * dx)
            ry += g * (w * vy + radial * dy)
        grad[i, 0] = -gx
        grad[i, 1] = -gy
        rate[i, 0] = -rx
        rate[i, 1] = -ry


@njit(cache=True)
def _control(
    t, pos, vel, th, om,
    phi, phi_inv, slopes, gains, bl, shape_d, track,
    mass, radius, offset, hgain,
    collision, pot,
    Z, Z_dot, Z_e, surf, rate_out, tau,
):
    n = th.size
    drift = np.empty((n, 2))
    zero = np.zeros((n, 2))
    _accel(vel, th, om, zero, mass, radius, offset, hgain, drift, np.empty(n))
    pdrift = np.empty((n, 2))
    _matmul(phi, drift, pdrift)
    _matmul(phi, pos, Z)
    _matmul(phi, vel, Z_dot)

    speed, amp, omega, ox, oy = track[0], track[1], track[2], track[3], track[4]
    F = np.empty((n, 2))
    for i in range(n):
        if i < n - 1:
            zd0, zd1 = shape_d[i, 0], shape_d[i, 1]
            vd0, vd1, ad0, ad1 = 0.0, 0.0, 0.0, 0.0
        else:
            zd0 = ox + speed * t
            zd1 = oy + amp * np.sin(omega * t)
            vd0 = speed
            vd1 = amp * omega * np.cos(omega * t)
            ad0 = 0.0
            ad1 = -amp * omega * omega * np.sin(omega * t)
        Z_e[i, 0] = Z[i, 0] - zd0
        Z_e[i, 1] = Z[i, 1] - zd1
        ed0 = Z_dot[i, 0] - vd0
        ed1 = Z_dot[i, 1] - vd1
        surf[i, 0] = slopes[i] * Z_e[i, 0] + ed0
        surf[i, 1] = slopes[i] * Z_e[i, 1] + ed1
        F[i, 0] = -slopes[i] * ed0 - pdrift[i, 0] + ad0
        F[i, 1] = -slopes[i] * ed1 - pdrift[i, 1] + ad1

    if collision:
        grad = np.empty((n, 2))
        grate = np.empty((n, 2))
        _potential(pos, vel, pot[0], pot[1], pot[2], grad, grate)
        pg = np.empty((n, 2))
        _matmul(phi, grad, pg)
        _matmul(phi, grate, rate_out)
        for i in range(n):
            for k in range(2):
                surf[i, k] += pg[i, k]
                F[i, k] += rate_out[i, k]

    for i in range(n):
        for k in range(2):
            sv = surf[i, k]
            if bl == 0.0:
                sat = 1.0 if sv > 0.0 else (-1.0 if sv < 0.0 else 0.0)
            else:
                sat = min(1.0, max(-1.0, sv / bl))
            F[i, k] -= gains[i] * sat

    W = np.empty((n, 2))
    _matmul(phi_inv, F, W)
    for i in range(n):
        s = np.sin(th[i])
        c = np.cos(th[i])
        total = mass[i] * radius[i] * (c * W[i, 0] + s * W[i, 1])
        diff = (c * W[i, 1] - s * W[i, 0]) / (offset[i] * hgain[i])
        tau[i, 0] = 0.5 * (total + diff)
        tau[i, 1] = 0.5 * (total - diff)


@njit(cache=True)
def _step(pos, vel, th, om, tau, h, method, mass, radius, offset, hgain):
    n = th.size
    a1 = np.empty((n, 2))
    b1 = np.empty(n)
    _accel(vel, th, om, tau, mass, radius, offset, hgain, a1, b1)
    if method == EULER:
        for i in range(n):
            for k in range(2):
                vel[i, k] += h * a1[i, k]
                pos[i, k] += h * vel[i, k]
            om[i] += h * b1[i]
            th[i] += h * om[i]
        return
    a2 = np.empty((n, 2))
    b2 = np.empty(n)
    a3 = np.empty((n, 2))
    b3 = np.empty(n)
    a4 = np.empty((n, 2))
    b4 = np.empty(n)
    v2 = vel + 0.5 * h * a1
    o2 = om + 0.5 * h * b1
    _accel(v2, th + 0.5 * h * om, o2, tau, mass, radius, offset, hgain, a2, b2)
    v3 = vel + 0.5 * h * a2
    o3 = om + 0.5 * h * b2
    _accel(v3, th + 0.5 * h * o2, o3, tau, mass, radius, offset, hgain, a3, b3)
    v4 = vel + h * a3
    o4 = om + h * b3
    _accel(v4, th + h * o3, o4, tau, mass, radius, offset, hgain, a4, b4)
    for i in range(n):
        for k in range(2):
            pos[i, k] += h / 6.0 * (vel[i, k] + 2.0 * v2[i, k] + 2.0 * v3[i, k] + v4[i, k])
            vel[i, k] += h / 6.0 * (a1[i, k] + 2.0 * a2[i, k] + 2.0 * a3[i, k] + a4[i, k])
        th[i] += h / 6.0 * (om[i] + 2.0 * o2[i] + 2.0 * o3[i] + o4[i])
        om[i] += h / 6.0 * (b1[i] + 2.0 * b2[i] + 2.0 * b3[i] + b4[i])


@njit(cache=True)
def simulate(
    pos, vel, th, om,
    phi, phi_inv, slopes, gains, bl, shape_d, track,
    mass, radius, offset, hgain,
    collision, pot,
    h, steps, stride, method,
    r_pos, r_vel, r_th, r_om, r_Z, r_Zd, r_surf, r_tau, r_mind, r_err, r_rate,
    block_ends,
):
    """Run the loop in place; returns -1 on success or the failing step."""
    n = th.size
    Z = np.empty((n, 2))
    Z_dot = np.empty((n, 2))
    Z_e = np.empty((n, 2))
    surf = np.empty((n, 2))
    rate = np.zeros((n, 2))
    tau = np.empty((n, 2))
    for k in range(steps + 1):
        t = k * h
        _control(
            t, pos, vel, th, om, phi, phi_inv, slopes, gains, bl, shape_d, track,
            mass, radius, offset, hgain, collision, pot,
            Z, Z_dot, Z_e, surf, rate, tau,
        )
        for i in range(n):
            if not (
                np.isfinite(pos[i, 0]) and np.isfinite(pos[i, 1])
                and np.isfinite(vel[i, 0]) and np.isfinite(vel[i, 1])
                and np.isfinite(th[i]) and np.isfinite(om[i])
                and np.isfinite(tau[i, 0]) and np.isfinite(tau[i, 1])
            ):
                return k
        if k % stride == 0:
            j = k // stride
            r_pos[j] = pos
            r_vel[j] = vel
            r_th[j] = th
            r_om[j] = om
            r_Z[j] = Z
            r_Zd[j] = Z_dot
            r_surf[j] = surf
            r_tau[j] = tau
            best = np.inf
            for a in range(n):
                for b in range(a + 1, n):
                    dx = pos[a, 0] - pos[b, 0]
                    dy = pos[a, 1] - pos[b, 1]
                    d2 = dx * dx + dy * dy
                    if d2 < best:
                        best = d2
            r_mind[j] = np.sqrt(best)
            start = 0
            for blk in range(3):
                e2 = 0.0
                q2 = 0.0
                for i in range(start, block_ends[blk]):
                    e2 += Z_e[i, 0] ** 2 + Z_e[i, 1] ** 2
                    q2 += rate[i, 0] ** 2 + rate[i, 1] ** 2
                r_err[j, blk] = np.sqrt(e2)
                r_rate[j, blk] = np.sqrt(q2)
                start = block_ends[blk]
        if k == steps:
            break
        _step(pos, vel, th, om, tau, h, method, mass, radius, offset, hgain)
    return -1
