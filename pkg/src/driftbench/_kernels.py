"""Compiled right-hand side and RK4 loop for the overdamped particle system.

State rows are ``[x, y, phi, x2, y2]`` per particle: ``phi`` is the dipole
angle, ``(x2, y2)`` the non-magnetic bead of a bead-spring swimmer. Unused
columns carry zero derivative. Parameter rows follow the ``P_*`` columns.
"""

import math

import numpy as np
from numba import njit

NONMAG, MAG, KINEMATIC, BEADSPRING = 0, 1, 2, 3
SEG_CONSTANT, SEG_ROTATING, SEG_OSCILLATING = 0, 1, 2
FLOW_UNIFORM, FLOW_SHEAR, FLOW_VORTEX = 0, 1, 2

P_A1, P_A2, P_M, P_OFF, P_K, P_L0, P_KAPPA, P_SPEED, P_MODE, P_FIXED, P_COUPLE = range(11)
N_PARAMS = 11
S_KIND, S_T0, S_T1, S_AMP, S_BASE, S_FREQ, S_ANGAMP, S_SIGN, S_PHASE = range(9)
N_SEGCOLS = 9

STATUS_OK, STATUS_DOMAIN, STATUS_SEPARATION = 0, 1, 2

REG = 1.0
MB_TO_TORQUE = 1e-9
MGRAD_TO_FORCE = 1e-9
SPRING_SCALE = 1e-6
TWO_PI = 2.0 * math.pi


@njit(cache=True)
def field_eval(seg, t, t_seg):
    """Returns (Bx, By, angle, amplitude, kind, base_angle).

    The segment is the one active at ``t_seg``; the angle is evaluated at ``t``.
    """
    n = seg.shape[0]
    i = n - 1
    for j in range(n):
        if t_seg < seg[j, S_T1]:
            i = j
            break
    kind = int(seg[i, S_KIND])
    tau = t - seg[i, S_T0]
    base = seg[i, S_BASE]
    if kind == SEG_CONSTANT:
        ang = base
    elif kind == SEG_ROTATING:
        ang = base + seg[i, S_SIGN] * TWO_PI * seg[i, S_FREQ] * tau + seg[i, S_PHASE]
    else:
        ang = base + seg[i, S_ANGAMP] * math.sin(TWO_PI * seg[i, S_FREQ] * tau + seg[i, S_PHASE])
    amp = seg[i, S_AMP]
    return amp * math.cos(ang), amp * math.sin(ang), ang, amp, kind, base


@njit(cache=True)
def flow_eval(code, fp, x, y):
    """Returns (ux, uy, ok); ``ok`` is False inside the vortex core."""
    if code == FLOW_UNIFORM:
        return fp[0], fp[1], True
    if code == FLOW_SHEAR:
        dx = x - fp[6]
        dy = y - fp[7]
        return fp[0] + fp[2] * dx + fp[3] * dy, fp[1] + fp[4] * dx + fp[5] * dy, True
    dx = x - fp[6]
    dy = y - fp[7]
    r2 = dx * dx + dy * dy
    if r2 < REG * REG:
        return 0.0, 0.0, False
    c = fp[8] / (TWO_PI * r2)
    return -c * dy, c * dx, True


@njit(cache=True)
def rhs(t, t_seg, y, kinds, prm, seg, fcode, fp, grad, eta, disturb, ext, dy, torques):
    bx, by, psi, amp, skind, sbase = field_eval(seg, t, t_seg)
    n = y.shape[0]
    for p in range(n):
        for c in range(5):
            dy[p, c] = 0.0
        torques[p] = 0.0

    for p in range(n):
        k = kinds[p]
        ux, uy, ok = flow_eval(fcode, fp, y[p, 0], y[p, 1])
        if not ok:
            return STATUS_DOMAIN, p
        if k == NONMAG:
            dy[p, 0] = ux
            dy[p, 1] = uy
        elif k == MAG or k == KINEMATIC:
            a = prm[p, P_A1]
            m = prm[p, P_M]
            phi = y[p, 2]
            tq = m * amp * MB_TO_TORQUE * math.sin(psi - phi)
            torques[p] = tq
            dy[p, 2] = tq / (8.0 * math.pi * eta * a * a * a)
            c = math.cos(phi)
            s = math.sin(phi)
            fx = MGRAD_TO_FORCE * m * (grad[0, 0] * c + grad[0, 1] * s)
            fy = MGRAD_TO_FORCE * m * (grad[1, 0] * c + grad[1, 1] * s)
            drag = 6.0 * math.pi * eta * a
            vx = ux + fx / drag
            vy = uy + fy / drag
            if k == KINEMATIC and skind == SEG_OSCILLATING:
                if prm[p, P_MODE] > 0.5:
                    ang = prm[p, P_FIXED]
                else:
                    ang = sbase - prm[p, P_OFF]
                vx += prm[p, P_SPEED] * math.cos(ang)
                vy += prm[p, P_SPEED] * math.sin(ang)
            dy[p, 0] = vx
            dy[p, 1] = vy
        else:
            a1 = prm[p, P_A1]
            a2 = prm[p, P_A2]
            m = prm[p, P_M]
            L0 = prm[p, P_L0]
            phi = y[p, 2]
            ddx = y[p, 3] - y[p, 0]
            ddy = y[p, 4] - y[p, 1]
            r = math.sqrt(ddx * ddx + ddy * ddy)
            if r < 0.5 * L0:
                return STATUS_SEPARATION, p
            ex = ddx / r
            ey = ddy / r
            ux2, uy2, ok2 = flow_eval(fcode, fp, y[p, 3], y[p, 4])
            if not ok2:
                return STATUS_DOMAIN, p
            # linear spring, force on bead 1 towards bead 2 when stretched
            fs = prm[p, P_K] * SPRING_SCALE * (r - L0)
            f1x = fs * ex
            f1y = fs * ey
            f2x = -f1x
            f2y = -f1y
            # angular spring between body axis and dipole
            alpha = math.atan2(ddy, ddx)
            delta = alpha - phi + prm[p, P_OFF]
            delta = math.atan2(math.sin(delta), math.cos(delta))
            tk = prm[p, P_KAPPA] * delta
            # axis torque -tk carried by a perpendicular force pair
            fp2 = -tk / r
            f2x += -ey * fp2
            f2y += ex * fp2
            f1x -= -ey * fp2
            f1y -= ex * fp2
            tm = m * amp * MB_TO_TORQUE * math.sin(psi - phi)
            c = math.cos(phi)
            s = math.sin(phi)
            f1x += MGRAD_TO_FORCE * m * (grad[0, 0] * c + grad[0, 1] * s)
            f1y += MGRAD_TO_FORCE * m * (grad[1, 0] * c + grad[1, 1] * s)
            t1 = tm + tk
            torques[p] = t1
            dy[p, 2] = t1 / (8.0 * math.pi * eta * a1 * a1 * a1)
            v1x = ux + f1x / (6.0 * math.pi * eta * a1)
            v1y = uy + f1y / (6.0 * math.pi * eta * a1)
            v2x = ux2 + f2x / (6.0 * math.pi * eta * a2)
            v2y = uy2 + f2y / (6.0 * math.pi * eta * a2)
            if prm[p, P_COUPLE] > 0.5:
                # rotlet of bead-1 torque at bead 2
                rc = t1 / (8.0 * math.pi * eta * r * r * r)
                v2x += -rc * ddy
                v2y += rc * ddx
                # Oseen tensor (I + e e^T) / (8 pi eta r) applied to partner forces
                oc = 1.0 / (8.0 * math.pi * eta * r)
                d2 = ex * f2x + ey * f2y
                d1 = ex * f1x + ey * f1y
                v1x += oc * (f2x + ex * d2)
                v1y += oc * (f2y + ey * d2)
                v2x += oc * (f1x + ex * d1)
                v2y += oc * (f1y + ey * d1)
            dy[p, 0] = v1x
            dy[p, 1] = v1y
            dy[p, 3] = v2x
            dy[p, 4] = v2y

    n_ext = ext.shape[0]
    if disturb or n_ext > 0:
        for q in range(n):
            if kinds[q] != NONMAG and kinds[q] != MAG:
                continue
            if disturb:
                for s in range(n):
                    if kinds[s] != KINEMATIC and kinds[s] != BEADSPRING:
                        continue
                    ux, uy = _rotlet(torques[s], y[s, 0], y[s, 1], y[q, 0], y[q, 1], eta)
                    dy[q, 0] += ux
                    dy[q, 1] += uy
            for e in range(n_ext):
                ux, uy = _rotlet(ext[e, 2], ext[e, 0], ext[e, 1], y[q, 0], y[q, 1], eta)
                dy[q, 0] += ux
                dy[q, 1] += uy
    return STATUS_OK, -1


@njit(cache=True)
def _rotlet(torque, sx, sy, x, y, eta):
    dx = x - sx
    dy = y - sy
    r2 = dx * dx + dy * dy
    if r2 < REG * REG or torque == 0.0:
        return 0.0, 0.0
    r = math.sqrt(r2)
    c = torque / (8.0 * math.pi * eta * r2 * r)
    return -c * dy, c * dx


@njit(cache=True)
def rk4_step(t, y, dt, kinds, prm, seg, fcode, fp, grad, eta, disturb, ext, k1, k2, k3, k4, tmp, torques):
    # one segment per step, chosen at the step midpoint
    tm = t + 0.5 * dt
    st, bad = rhs(t, tm, y, kinds, prm, seg, fcode, fp, grad, eta, disturb, ext, k1, torques)
    if st != STATUS_OK:
        return st, bad
    tmp[:, :] = y + 0.5 * dt * k1
    st, bad = rhs(t + 0.5 * dt, tm, tmp, kinds, prm, seg, fcode, fp, grad, eta, disturb, ext, k2, torques)
    if st != STATUS_OK:
        return st, bad
    tmp[:, :] = y + 0.5 * dt * k2
    st, bad = rhs(t + 0.5 * dt, tm, tmp, kinds, prm, seg, fcode, fp, grad, eta, disturb, ext, k3, torques)
    if st != STATUS_OK:
        return st, bad
    tmp[:, :] = y + dt * k3
    st, bad = rhs(t + dt, tm, tmp, kinds, prm, seg, fcode, fp, grad, eta, disturb, ext, k4, torques)
    if st != STATUS_OK:
        return st, bad
    y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return STATUS_OK, -1


@njit(cache=True)
def integrate(y0, n_frames, steps_per_frame, dt, kinds, prm, seg, fcode, fp, grad, eta, disturb, ext):
    """Integrate from t=0, recording the state at every frame.

    Returns (frames, status, bad_particle, t_fail).
    """
    n = y0.shape[0]
    out = np.zeros((n_frames, n, 5))
    y = y0.copy()
    out[0] = y
    k1 = np.zeros_like(y)
    k2 = np.zeros_like(y)
    k3 = np.zeros_like(y)
    k4 = np.zeros_like(y)
    tmp = np.zeros_like(y)
    torques = np.zeros(n)
    step = 0
    for f in range(1, n_frames):
        for _ in range(steps_per_frame):
            t = step * dt
            st, bad = rk4_step(t, y, dt, kinds, prm, seg, fcode, fp, grad, eta, disturb, ext,
                               k1, k2, k3, k4, tmp, torques)
            if st != STATUS_OK:
                return out[:f], st, bad, t
            step += 1
        out[f] = y
    return out, STATUS_OK, -1, 0.0
