"""Compiled kernels for the reduced-order quadruped.

Generalized velocity ``u`` (18): CoM linear velocity in the world frame,
base angular velocity in the base frame, joint velocities. The packed state
``x`` (37): CoM position, quaternion (w, x, y, z), ``u``, with the joint
positions inserted before the joint velocities::

    x[0:3] p   x[3:7] quat   x[7:10] v   x[10:13] w   x[13:25] q   x[25:37] qd

Each step solves the fully implicit (backward Euler) update with a Newton
iteration. Evaluating every force at the end of the step makes the scheme
dissipative for the passive system, which the energy checks rely on.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NX = 37
NU = 18
NC = 16  # contact proxies: 4 feet, 4 knees, 8 base corners

# props layout
P_MASS, P_G, P_MU, P_KN, P_DN, P_DT, P_STEP, P_TOL, P_MAXIT = range(9)
NPROPS = 9

# joint table rows
J_INERTIA, J_DAMP, J_KP, J_KD, J_TMAX, J_LO, J_HI = range(7)

DAMP_RAMP = 1e-3  # m

TERM_NONE = 0
TERM_BASE_GROUND = 1
TERM_KNEE_GROUND = 2
TERM_SELF = 3
TERM_NONFINITE = 4


@njit(cache=True)
def quat_to_rot(qt, R):
    w, x, y, z = qt[0], qt[1], qt[2], qt[3]
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def quat_integrate(qt, w, h, out):
    """out = qt * exp(h * w / 2), body-frame angular velocity, renormalized."""
    wx, wy, wz = w[0], w[1], w[2]
    n = np.sqrt(wx * wx + wy * wy + wz * wz)
    th = 0.5 * h * n
    if n > 1e-300:
        s = np.sin(th) / n
    else:
        s = 0.5 * h
    c = np.cos(th)
    bx, by, bz = s * wx, s * wy, s * wz
    a0, a1, a2, a3 = qt[0], qt[1], qt[2], qt[3]
    o0 = a0 * c - a1 * bx - a2 * by - a3 * bz
    o1 = a0 * bx + a1 * c + a2 * bz - a3 * by
    o2 = a0 * by - a1 * bz + a2 * c + a3 * bx
    o3 = a0 * bz + a1 * by - a2 * bx + a3 * c
    nn = np.sqrt(o0 * o0 + o1 * o1 + o2 * o2 + o3 * o3)
    out[0] = o0 / nn
    out[1] = o1 / nn
    out[2] = o2 / nn
    out[3] = o3 / nn


@njit(cache=True)
def contact_geometry(q, geo, sa, sh, corners, com, rb, jl):
    """Body-frame proxy positions relative to the CoM and their joint Jacobians.

    rb: (NC, 3); jl: (NC, 3, 3) derivative of rb w.r.t. the owning leg's
    three joints (zero for base corners). Order: feet 0-3, knees 4-7,
    corners 8-15.
    """
    for i in range(4):
        a = sa[i] * q[3 * i]
        h = sh[i] * q[3 * i + 1]
        hk = sh[i] * (q[3 * i + 1] + q[3 * i + 2])
        ca, sn_a = np.cos(a), np.sin(a)
        ch, sn_h = np.cos(h), np.sin(h)
        chk, sn_hk = np.cos(hk), np.sin(hk)
        c1x, c1y, c1z = geo[i, 0, 0], geo[i, 0, 1], geo[i, 0, 2]
        c2x, c2y, c2z = geo[i, 1, 0], geo[i, 1, 1], geo[i, 1, 2]
        c3x, c3y, c3z = geo[i, 2, 0], geo[i, 2, 1], geo[i, 2, 2]
        cfx, cfy, cfz = geo[i, 3, 0], geo[i, 3, 1], geo[i, 3, 2]
        # hip frame (before abduction rotation)
        khx = ch * c3x + sn_h * c3z
        khy = c3y
        khz = -sn_h * c3x + ch * c3z
        kfx = chk * cfx + sn_hk * cfz
        kfy = cfy
        kfz = -sn_hk * cfx + chk * cfz
        vkx, vky, vkz = c2x + khx, c2y + khy, c2z + khz
        vfx, vfy, vfz = vkx + kfx, vky + kfy, vkz + kfz
        # abduction rotation about x
        hjx, hjy, hjz = c2x, ca * c2y - sn_a * c2z, sn_a * c2y + ca * c2z
        kwx, kwy, kwz = vkx, ca * vky - sn_a * vkz, sn_a * vky + ca * vkz
        fwx, fwy, fwz = vfx, ca * vfy - sn_a * vfz, sn_a * vfy + ca * vfz
        # positions relative to CoM
        rb[i, 0] = c1x + fwx - com[0]
        rb[i, 1] = c1y + fwy - com[1]
        rb[i, 2] = c1z + fwz - com[2]
        rb[4 + i, 0] = c1x + kwx - com[0]
        rb[4 + i, 1] = c1y + kwy - com[1]
        rb[4 + i, 2] = c1z + kwz - com[2]
        # abduction axis sa*ex through c1: d/da p = sa * ex x (p - c1)
        s = sa[i]
        jl[i, 0, 0] = 0.0
        jl[i, 1, 0] = -s * fwz
        jl[i, 2, 0] = s * fwy
        jl[4 + i, 0, 0] = 0.0
        jl[4 + i, 1, 0] = -s * kwz
        jl[4 + i, 2, 0] = s * kwy
        # hip/knee axis sh * Rx ey = sh * (0, ca, sn_a)
        ay, az = sh[i] * ca, sh[i] * sn_a
        # foot about hip joint
        dx, dy, dz = fwx - hjx, fwy - hjy, fwz - hjz
        jl[i, 0, 1] = ay * dz - az * dy
        jl[i, 1, 1] = az * dx
        jl[i, 2, 1] = -ay * dx
        # knee about hip joint
        dx, dy, dz = kwx - hjx, kwy - hjy, kwz - hjz
        jl[4 + i, 0, 1] = ay * dz - az * dy
        jl[4 + i, 1, 1] = az * dx
        jl[4 + i, 2, 1] = -ay * dx
        # foot about knee joint
        dx, dy, dz = fwx - kwx, fwy - kwy, fwz - kwz
        jl[i, 0, 2] = ay * dz - az * dy
        jl[i, 1, 2] = az * dx
        jl[i, 2, 2] = -ay * dx
        jl[4 + i, 0, 2] = 0.0
        jl[4 + i, 1, 2] = 0.0
        jl[4 + i, 2, 2] = 0.0
    for c in range(8):
        for k in range(3):
            rb[8 + c, k] = corners[c, k] - com[k]
            for m in range(3):
                jl[8 + c, k, m] = 0.0


@njit(cache=True)
def _leg_of(c):
    if c < 4:
        return c
    if c < 8:
        return c - 4
    return -1


@njit(cache=True)
def _assemble(x0, u, h, geo, sa, sh, corners, com, rad, inertia, props, joints, qdes, fext,
              res, jac, forces, x1, rb, jl, R):
    """Residual and approximate Jacobian of the implicit step at trial ``u``."""
    m = props[P_MASS]
    g = props[P_G]
    mu = props[P_MU]
    kn = props[P_KN]
    dn = props[P_DN]
    dtan = props[P_DT]

    # end-of-step configuration
    for k in range(3):
        x1[k] = x0[k] + h * u[k]
    quat_integrate(x0[3:7], u[3:6], h, x1[3:7])
    for j in range(12):
        x1[13 + j] = x0[13 + j] + h * u[6 + j]
    for k in range(NU):
        x1[7 + k + (12 if k >= 6 else 0)] = u[k]
    quat_to_rot(x1[3:7], R)
    contact_geometry(x1[13:25], geo, sa, sh, corners, com, rb, jl)

    for a in range(NU):
        res[a] = 0.0
        for b in range(NU):
            jac[a, b] = 0.0

    # linear momentum
    for k in range(3):
        res[k] = m * (u[k] - x0[7 + k]) - h * fext[k]
        jac[k, k] = m
    res[2] += h * m * g

    # angular momentum in body frame, gyroscopic term implicit
    w0, w1, w2 = u[3], u[4], u[5]
    iw0 = inertia[0, 0] * w0 + inertia[0, 1] * w1 + inertia[0, 2] * w2
    iw1 = inertia[1, 0] * w0 + inertia[1, 1] * w1 + inertia[1, 2] * w2
    iw2 = inertia[2, 0] * w0 + inertia[2, 1] * w1 + inertia[2, 2] * w2
    dw0, dw1, dw2 = w0 - x0[10], w1 - x0[11], w2 - x0[12]
    for k in range(3):
        res[3 + k] = inertia[k, 0] * dw0 + inertia[k, 1] * dw1 + inertia[k, 2] * dw2
    res[3] += h * (w1 * iw2 - w2 * iw1)
    res[4] += h * (w2 * iw0 - w0 * iw2)
    res[5] += h * (w0 * iw1 - w1 * iw0)
    # d(w x Iw)/dw = [w]x I - [Iw]x
    for a in range(3):
        for b in range(3):
            jac[3 + a, 3 + b] = inertia[a, b]
    for b in range(3):
        i0, i1, i2 = inertia[0, b], inertia[1, b], inertia[2, b]
        jac[3, 3 + b] += h * (w1 * i2 - w2 * i1)
        jac[4, 3 + b] += h * (w2 * i0 - w0 * i2)
        jac[5, 3 + b] += h * (w0 * i1 - w1 * i0)
    jac[3, 4] += h * iw2
    jac[3, 5] -= h * iw1
    jac[4, 3] -= h * iw2
    jac[4, 5] += h * iw0
    jac[5, 3] += h * iw1
    jac[5, 4] -= h * iw0

    # joints: PD at the end of the step, viscous damping
    for j in range(12):
        qj = x1[13 + j]
        qdj = u[6 + j]
        tmax = joints[J_TMAX, j]
        tau = joints[J_KP, j] * (qdes[j] - qj) - joints[J_KD, j] * qdj
        dtau = -(joints[J_KP, j] * h + joints[J_KD, j])
        if tau > tmax:
            tau = tmax
            dtau = 0.0
        elif tau < -tmax:
            tau = -tmax
            dtau = 0.0
        res[6 + j] = joints[J_INERTIA, j] * (qdj - x0[25 + j]) - h * (tau - joints[J_DAMP, j] * qdj)
        jac[6 + j, 6 + j] = joints[J_INERTIA, j] + h * (joints[J_DAMP, j] - dtau)

    G = np.zeros((3, NU))
    A = np.zeros((3, 3))
    GA = np.zeros((3, NU))
    for c in range(NC):
        rx, ry, rz = rb[c, 0], rb[c, 1], rb[c, 2]
        pz = x1[2] + R[2, 0] * rx + R[2, 1] * ry + R[2, 2] * rz
        pen = rad[c] - pz
        forces[c, 0] = 0.0
        forces[c, 1] = 0.0
        forces[c, 2] = 0.0
        if pen <= 0.0:
            continue
        leg = _leg_of(c)
        # body-frame velocity of the proxy relative to the CoM
        vbx = w1 * rz - w2 * ry
        vby = w2 * rx - w0 * rz
        vbz = w0 * ry - w1 * rx
        if leg >= 0:
            for k in range(3):
                qd = u[6 + 3 * leg + k]
                vbx += jl[c, 0, k] * qd
                vby += jl[c, 1, k] * qd
                vbz += jl[c, 2, k] * qd
        vcx = u[0] + R[0, 0] * vbx + R[0, 1] * vby + R[0, 2] * vbz
        vcy = u[1] + R[1, 0] * vbx + R[1, 1] * vby + R[1, 2] * vbz
        vcz = u[2] + R[2, 0] * vbx + R[2, 1] * vby + R[2, 2] * vbz

        for a in range(3):
            for b in range(3):
                A[a, b] = 0.0
        # damping ramps in over the first DAMP_RAMP of penetration so the
        # force is continuous at touchdown
        if pen < DAMP_RAMP:
            ramp = pen / DAMP_RAMP
            dramp = 1.0
        else:
            ramp = 1.0
            dramp = 0.0
        fn = kn * pen - dn * ramp * vcz
        if fn <= 0.0:
            continue
        A[2, 2] = -(kn * h + dn * ramp) + dramp * dn * h * vcz / DAMP_RAMP
        ftx = -dtan * vcx
        fty = -dtan * vcy
        ft = np.sqrt(ftx * ftx + fty * fty)
        cap = mu * fn
        if ft > cap:
            vt = np.sqrt(vcx * vcx + vcy * vcy)
            tx, ty = vcx / vt, vcy / vt
            ftx = -cap * tx
            fty = -cap * ty
            sc = cap / vt
            A[0, 0] = -sc * (1.0 - tx * tx)
            A[0, 1] = sc * tx * ty
            A[1, 0] = sc * tx * ty
            A[1, 1] = -sc * (1.0 - ty * ty)
            A[0, 2] = -mu * tx * A[2, 2]
            A[1, 2] = -mu * ty * A[2, 2]
        else:
            A[0, 0] = -dtan
            A[1, 1] = -dtan
        forces[c, 0] = ftx
        forces[c, 1] = fty
        forces[c, 2] = fn

        # G = [I, -R [r]x, R jl]
        for a in range(3):
            for b in range(NU):
                G[a, b] = 0.0
            G[a, a] = 1.0
            # -R [r]x : column b of [r]x
            G[a, 3] = -(R[a, 1] * rz - R[a, 2] * ry)
            G[a, 4] = -(-R[a, 0] * rz + R[a, 2] * rx)
            G[a, 5] = -(R[a, 0] * ry - R[a, 1] * rx)
            if leg >= 0:
                for k in range(3):
                    G[a, 6 + 3 * leg + k] = R[a, 0] * jl[c, 0, k] + R[a, 1] * jl[c, 1, k] + R[a, 2] * jl[c, 2, k]
        # residual -= h * G^T F
        for b in range(NU):
            gf = G[0, b] * ftx + G[1, b] * fty + G[2, b] * fn
            res[b] -= h * gf
        # jac -= h * G^T A G
        for a in range(3):
            for b in range(NU):
                GA[a, b] = A[a, 0] * G[0, b] + A[a, 1] * G[1, b] + A[a, 2] * G[2, b]
        for a in range(NU):
            ga0, ga1, ga2 = G[0, a], G[1, a], G[2, a]
            if ga0 == 0.0 and ga1 == 0.0 and ga2 == 0.0:
                continue
            for b in range(NU):
                jac[a, b] -= h * (ga0 * GA[0, b] + ga1 * GA[1, b] + ga2 * GA[2, b])


@njit(cache=True)
def _wnorm(res, joints, props):
    """Residual norm in impulse units scaled by the inverse generalized mass."""
    m = props[P_MASS]
    acc = 0.0
    for k in range(3):
        acc += res[k] * res[k] / m
    for k in range(3, 6):
        acc += res[k] * res[k]
    for j in range(12):
        acc += res[6 + j] * res[6 + j] / joints[J_INERTIA, j]
    return np.sqrt(acc)


@njit(cache=True)
def _apply_limits(x0, u, joints, h, res, jac, want_jac):
    """Fold the joint range into the residual as a complementarity condition.

    Row j becomes (I/h) * median(q1 - hi, h * r_j / I, q1 - lo): zero either
    when the joint is free with r_j = 0, or when it rests on a bound with the
    bound force pointing back into the range. Returns the active count.
    """
    n = 0
    for j in range(12):
        ij = joints[J_INERTIA, j]
        q1 = x0[13 + j] + h * u[6 + j]
        ga = q1 - joints[J_HI, j]
        gc = q1 - joints[J_LO, j]
        b = h * res[6 + j] / ij
        if b < ga:
            pick = 0
        elif b > gc:
            pick = 2
        else:
            pick = 1
        if pick == 1:
            continue
        n += 1
        res[6 + j] = ij / h * (ga if pick == 0 else gc)
        if want_jac:
            for k in range(NU):
                jac[6 + j, k] = 0.0
            jac[6 + j, 6 + j] = ij
    return n


@njit(cache=True)
def _solve(x0, h, geo, sa, sh, corners, com, rad, inertia, props, joints, qdes, fext, x1, forces, info):
    """One implicit step of length ``h``: damped semismooth Newton iteration.

    Returns 1 when converged, 0 when the iteration budget ran out, -1 on a
    non-finite iterate. The line search backtracks on the mass-weighted
    residual norm; a single iteration may move the base at most 2 cm and
    any angle at most 0.1 rad.
    """
    tol = props[P_TOL]
    maxit = int(props[P_MAXIT])
    u = np.empty(NU)
    for k in range(3):
        u[k] = x0[7 + k]
        u[3 + k] = x0[10 + k]
    for j in range(12):
        u[6 + j] = x0[25 + j]
    res = np.empty(NU)
    res_try = np.empty(NU)
    jac = np.empty((NU, NU))
    jac_try = np.empty((NU, NU))
    u_try = np.empty(NU)
    du = np.empty(NU)
    rb = np.empty((NC, 3))
    jl = np.empty((NC, 3, 3))
    R = np.empty((3, 3))
    _assemble(x0, u, h, geo, sa, sh, corners, com, rad, inertia, props, joints, qdes, fext,
              res, jac, forces, x1, rb, jl, R)
    nfix = _apply_limits(x0, u, joints, h, res, jac, True)
    rn = _wnorm(res, joints, props)
    status = 0
    for it in range(maxit):
        du[:] = np.linalg.solve(jac, -res)
        sc = 1.0
        for k in range(NU):
            lim = 0.02 if k < 3 else 0.1
            a = abs(du[k]) * h
            if a * sc > lim:
                sc = lim / a
        alpha = sc
        rn_try = rn
        for _ls in range(10):
            for k in range(NU):
                u_try[k] = u[k] + alpha * du[k]
            _assemble(x0, u_try, h, geo, sa, sh, corners, com, rad, inertia, props, joints, qdes, fext,
                      res_try, jac_try, forces, x1, rb, jl, R)
            nfix = _apply_limits(x0, u_try, joints, h, res_try, jac_try, True)
            rn_try = _wnorm(res_try, joints, props)
            if rn_try <= (1.0 - 1e-4 * alpha) * rn or rn == 0.0:
                break
            alpha *= 0.5
        nu = 0.0
        nd = 0.0
        for k in range(NU):
            nd = max(nd, abs(u_try[k] - u[k]))
            u[k] = u_try[k]
            nu = max(nu, abs(u[k]))
            res[k] = res_try[k]
        jac[:, :] = jac_try
        rn = rn_try
        info[0] += 1
        info[1] = nd
        if not np.isfinite(nd):
            return -1
        if nd <= tol * (1.0 + nu):
            status = 1
            break
    # x1 and forces hold the last accepted iterate; keep joints inside the range
    for j in range(12):
        if x1[13 + j] > joints[J_HI, j]:
            x1[13 + j] = joints[J_HI, j]
        elif x1[13 + j] < joints[J_LO, j]:
            x1[13 + j] = joints[J_LO, j]
    info[2] = nfix
    for k in range(NX):
        if not np.isfinite(x1[k]):
            return -1
    return status


MAX_SPLIT = 256


@njit(cache=True)
def step(x0, geo, sa, sh, corners, com, rad, inertia, props, joints, qdes, fext, x1, forces, info):
    """Advance one physics step of length props[P_STEP].

    When the Newton iteration does not converge the step is retried as 2, 4,
    ... MAX_SPLIT equal substeps. Returns the number of substeps used, 0 if
    even the finest split did not converge (the last iterate is kept), or -1
    for a non-finite state. ``info`` receives (Newton iterations, final
    update norm, active joint limits, substeps).
    """
    h = props[P_STEP]
    info[0] = 0.0
    st = _solve(x0, h, geo, sa, sh, corners, com, rad, inertia, props, joints, qdes, fext, x1, forces, info)
    info[3] = 1.0
    if st == 1:
        return 1
    xa = np.empty(NX)
    n = 2
    while n <= MAX_SPLIT:
        for k in range(NX):
            xa[k] = x0[k]
        ok = True
        for _i in range(n):
            st = _solve(xa, h / n, geo, sa, sh, corners, com, rad, inertia, props, joints, qdes, fext,
                        x1, forces, info)
            if st != 1:
                ok = False
                break
            for k in range(NX):
                xa[k] = x1[k]
        info[3] = n
        if ok:
            return n
        n *= 2
    if st < 0:
        return -1
    return 0


@njit(cache=True)
def joint_torques(x, joints, qdes, out):
    for j in range(12):
        tau = joints[J_KP, j] * (qdes[j] - x[13 + j]) - joints[J_KD, j] * x[25 + j]
        tmax = joints[J_TMAX, j]
        if tau > tmax:
            tau = tmax
        elif tau < -tmax:
            tau = -tmax
        out[j] = tau


@njit(cache=True)
def energy(x, geo, sa, sh, corners, com, rad, inertia, props, joints):
    """Kinetic + gravitational + contact-spring energy (ground at z = 0)."""
    m = props[P_MASS]
    e = 0.5 * m * (x[7] * x[7] + x[8] * x[8] + x[9] * x[9])
    for a in range(3):
        for b in range(3):
            e += 0.5 * x[10 + a] * inertia[a, b] * x[10 + b]
    for j in range(12):
        e += 0.5 * joints[J_INERTIA, j] * x[25 + j] * x[25 + j]
    e += m * props[P_G] * x[2]
    rb = np.empty((NC, 3))
    jl = np.empty((NC, 3, 3))
    R = np.empty((3, 3))
    quat_to_rot(x[3:7], R)
    contact_geometry(x[13:25], geo, sa, sh, corners, com, rb, jl)
    for c in range(NC):
        pz = x[2] + R[2, 0] * rb[c, 0] + R[2, 1] * rb[c, 1] + R[2, 2] * rb[c, 2]
        pen = rad[c] - pz
        if pen > 0.0:
            e += 0.5 * props[P_KN] * pen * pen
    return e


@njit(cache=True)
def proxy_world(x, geo, sa, sh, corners, com, out):
    """World positions of all contact proxies, shape (NC, 3)."""
    rb = np.empty((NC, 3))
    jl = np.empty((NC, 3, 3))
    R = np.empty((3, 3))
    quat_to_rot(x[3:7], R)
    contact_geometry(x[13:25], geo, sa, sh, corners, com, rb, jl)
    for c in range(NC):
        for a in range(3):
            out[c, a] = x[a] + R[a, 0] * rb[c, 0] + R[a, 1] * rb[c, 1] + R[a, 2] * rb[c, 2]


@njit(cache=True)
def termination(x, geo, sa, sh, corners, com, rad, box_half, box_center):
    """Collision-based early termination code for state ``x``.

    Base corners below the ground or knee spheres touching it are body-ground
    collisions. Self-collision: a knee or foot sphere intersecting the base
    box, or spheres of different legs overlapping.
    """
    for k in range(NX):
        if not np.isfinite(x[k]):
            return TERM_NONFINITE
    rb = np.empty((NC, 3))
    jl = np.empty((NC, 3, 3))
    R = np.empty((3, 3))
    quat_to_rot(x[3:7], R)
    contact_geometry(x[13:25], geo, sa, sh, corners, com, rb, jl)
    for c in range(8, NC):
        pz = x[2] + R[2, 0] * rb[c, 0] + R[2, 1] * rb[c, 1] + R[2, 2] * rb[c, 2]
        if pz < 0.0:
            return TERM_BASE_GROUND
    for c in range(4, 8):
        pz = x[2] + R[2, 0] * rb[c, 0] + R[2, 1] * rb[c, 1] + R[2, 2] * rb[c, 2]
        if pz < rad[c]:
            return TERM_KNEE_GROUND
    # spheres vs base box, in the base frame
    for c in range(8):
        d2 = 0.0
        for a in range(3):
            rel = rb[c, a] + com[a] - box_center[a]
            e = abs(rel) - box_half[a]
            if e > 0.0:
                d2 += e * e
        if d2 < rad[c] * rad[c]:
            return TERM_SELF
    for c in range(8):
        for d in range(c + 1, 8):
            if _leg_of(c) == _leg_of(d):
                continue
            dx = rb[c, 0] - rb[d, 0]
            dy = rb[c, 1] - rb[d, 1]
            dz = rb[c, 2] - rb[d, 2]
            rr = rad[c] + rad[d]
            if dx * dx + dy * dy + dz * dz < rr * rr:
                return TERM_SELF
    return TERM_NONE


@njit(cache=True)
def advance(x, nsteps, geo, sa, sh, corners, com, rad, inertia, props, joints, qdes, fext,
            box_half, box_center, check, stats):
    """Run ``nsteps`` physics steps in place on ``x``.

    Returns (steps taken, termination code). When ``check`` is set the run
    stops at the first collision. ``stats`` accumulates: max |tau|/tau_max,
    min normal force, max tangential/(mu*normal) excess, final foot normal
    forces (4), Newton iterations, largest substep split, unconverged steps.
    """
    x1 = np.empty(NX)
    forces = np.zeros((NC, 3))
    info = np.zeros(4)
    tau = np.empty(12)
    mu = props[P_MU]
    for s in range(nsteps):
        it = step(x, geo, sa, sh, corners, com, rad, inertia, props, joints, qdes, fext, x1, forces, info)
        if it < 0:
            return s, TERM_NONFINITE
        for k in range(NX):
            x[k] = x1[k]
        joint_torques(x, joints, qdes, tau)
        for j in range(12):
            if joints[J_TMAX, j] > 0.0:
                r = abs(tau[j]) / joints[J_TMAX, j]
                if r > stats[0]:
                    stats[0] = r
        for c in range(NC):
            fn = forces[c, 2]
            if fn < stats[1]:
                stats[1] = fn
            ft = np.sqrt(forces[c, 0] ** 2 + forces[c, 1] ** 2)
            ex = ft - mu * fn
            if ex > stats[2]:
                stats[2] = ex
        for i in range(4):
            stats[3 + i] = forces[i, 2]
        stats[7] += info[0]
        if info[3] > stats[8]:
            stats[8] = info[3]
        if it == 0:
            stats[9] += 1
        if check:
            code = termination(x, geo, sa, sh, corners, com, rad, box_half, box_center)
            if code != TERM_NONE:
                return s + 1, code
    return nsteps, TERM_NONE
