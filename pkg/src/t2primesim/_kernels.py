"""Batched numba kernels over isochromats.

State arrays are ``m[n, 3]`` and ``dm[n, 3]``; the constant fourth element
is implicit. Every kernel takes a ``deriv`` flag; with ``deriv=False`` the
derivative arrays are neither read nor written and the magnetization
arithmetic is identical to the ``deriv=True`` path, so a run with all
``t2prime = inf`` reproduces a plain run bit for bit.

No fastmath: results must be reproducible across runs and worker counts.
"""
import math

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def _sample(mx, my, dx, dy, m0, t2p, deriv, by_mag, eps):
    re = m0 * mx
    im = m0 * my
    if deriv:
        num = mx * dy - my * dx
        p = mx * mx + my * my
        if by_mag:
            den = max(math.sqrt(p), eps)
        else:
            den = max(p, eps * eps)
        decay = math.exp(-abs(num / den) / t2p)
        re = re * decay
        im = im * decay
    return re, im


@njit(**_OPTS)
def sample_state(m, dm, m0, t2p, w_re, w_im, out_re, out_im, sid, deriv, by_mag, eps):
    """Accumulate the coil-weighted sample of every isochromat into ``out[:, sid]``."""
    n = m.shape[0]
    ncoil = w_re.shape[0]
    for k in range(n):
        dx = 0.0
        dy = 0.0
        if deriv:
            dx = dm[k, 0]
            dy = dm[k, 1]
        re, im = _sample(m[k, 0], m[k, 1], dx, dy, m0[k], t2p[k], deriv, by_mag, eps)
        for c in range(ncoil):
            wr = w_re[c, k]
            wi = w_im[c, k]
            out_re[c, sid] += wr * re - wi * im
            out_im[c, sid] += wr * im + wi * re


@njit(**_OPTS)
def rf_steps(m, dm, rxy, grad, pos, off, e1, e2, dt, gam, deriv, s0, s1):
    """Step every isochromat through raster steps ``s0 <= s < s1`` of an RF block.

    ``rxy[s]`` is the shared transverse rotation of step ``s``; ``grad[s]``
    the gradient (T/m). The per-isochromat z angle is recomputed only when
    the gradient changes.
    """
    n = m.shape[0]
    for k in range(n):
        mx = m[k, 0]
        my = m[k, 1]
        mz = m[k, 2]
        dx = 0.0
        dy = 0.0
        dz = 0.0
        if deriv:
            dx = dm[k, 0]
            dy = dm[k, 1]
            dz = dm[k, 2]
        x = pos[k, 0]
        y = pos[k, 1]
        z = pos[k, 2]
        ek1 = e1[k]
        ek2 = e2[k]
        rec = 1.0 - ek1
        c = 1.0
        sn = 0.0
        gxp = 0.0
        gyp = 0.0
        gzp = 0.0
        for s in range(s0, s1):
            gx = grad[s, 0]
            gy = grad[s, 1]
            gz = grad[s, 2]
            if s == s0 or gx != gxp or gy != gyp or gz != gzp:
                th = -(gam * (gx * x + gy * y + gz * z) + off[k]) * dt
                c = math.cos(th)
                sn = math.sin(th)
                gxp = gx
                gyp = gy
                gzp = gz
            rx = c * mx - sn * my
            ry = sn * mx + c * my
            rz = mz
            if deriv:
                qx = c * dx - sn * dy + dt * ry
                qy = sn * dx + c * dy - dt * rx
                qz = dz
                dx = ek2 * (rxy[s, 0, 0] * qx + rxy[s, 0, 1] * qy + rxy[s, 0, 2] * qz)
                dy = ek2 * (rxy[s, 1, 0] * qx + rxy[s, 1, 1] * qy + rxy[s, 1, 2] * qz)
                dz = ek1 * (rxy[s, 2, 0] * qx + rxy[s, 2, 1] * qy + rxy[s, 2, 2] * qz)
            mx = ek2 * (rxy[s, 0, 0] * rx + rxy[s, 0, 1] * ry + rxy[s, 0, 2] * rz)
            my = ek2 * (rxy[s, 1, 0] * rx + rxy[s, 1, 1] * ry + rxy[s, 1, 2] * rz)
            mz = ek1 * (rxy[s, 2, 0] * rx + rxy[s, 2, 1] * ry + rxy[s, 2, 2] * rz) + rec
        m[k, 0] = mx
        m[k, 1] = my
        m[k, 2] = mz
        if deriv:
            dm[k, 0] = dx
            dm[k, 1] = dy
            dm[k, 2] = dz


@njit(**_OPTS)
def build_combined(rxy, grad, pos, off, e1, e2, dt, gam, deriv, out):
    """Combined transition per isochromat by stepping seed vectors.

    Seeds are the unit vectors with the constant element forced to 1. Seeds
    0-3 carry full state; derivative seeds 4-6 only carry a derivative block
    and borrow the magnetization of seed 3, which they would have copied
    anyway. Subtracting seed 3 recovers the linear columns.
    ``out`` is ``(n, 7, 7)`` with ``deriv`` or ``(n, 4, 4)`` without.
    """
    n = pos.shape[0]
    ns = rxy.shape[0]
    M = np.empty((4, 3))
    D = np.empty((7, 3))
    R = np.empty((4, 3))
    for k in range(n):
        M[:, :] = 0.0
        M[0, 0] = 1.0
        M[1, 1] = 1.0
        M[2, 2] = 1.0
        D[:, :] = 0.0
        D[4, 0] = 1.0
        D[5, 1] = 1.0
        D[6, 2] = 1.0
        x = pos[k, 0]
        y = pos[k, 1]
        z = pos[k, 2]
        ek1 = e1[k]
        ek2 = e2[k]
        rec = 1.0 - ek1
        c = 1.0
        sn = 0.0
        gxp = 0.0
        gyp = 0.0
        gzp = 0.0
        for s in range(ns):
            gx = grad[s, 0]
            gy = grad[s, 1]
            gz = grad[s, 2]
            if s == 0 or gx != gxp or gy != gyp or gz != gzp:
                th = -(gam * (gx * x + gy * y + gz * z) + off[k]) * dt
                c = math.cos(th)
                sn = math.sin(th)
                gxp = gx
                gyp = gy
                gzp = gz
            for v in range(4):
                R[v, 0] = c * M[v, 0] - sn * M[v, 1]
                R[v, 1] = sn * M[v, 0] + c * M[v, 1]
                R[v, 2] = M[v, 2]
            if deriv:
                for v in range(7):
                    src = v if v < 4 else 3
                    qx = c * D[v, 0] - sn * D[v, 1] + dt * R[src, 1]
                    qy = sn * D[v, 0] + c * D[v, 1] - dt * R[src, 0]
                    qz = D[v, 2]
                    D[v, 0] = ek2 * (rxy[s, 0, 0] * qx + rxy[s, 0, 1] * qy + rxy[s, 0, 2] * qz)
                    D[v, 1] = ek2 * (rxy[s, 1, 0] * qx + rxy[s, 1, 1] * qy + rxy[s, 1, 2] * qz)
                    D[v, 2] = ek1 * (rxy[s, 2, 0] * qx + rxy[s, 2, 1] * qy + rxy[s, 2, 2] * qz)
            for v in range(4):
                rx = R[v, 0]
                ry = R[v, 1]
                rz = R[v, 2]
                M[v, 0] = ek2 * (rxy[s, 0, 0] * rx + rxy[s, 0, 1] * ry + rxy[s, 0, 2] * rz)
                M[v, 1] = ek2 * (rxy[s, 1, 0] * rx + rxy[s, 1, 1] * ry + rxy[s, 1, 2] * rz)
                M[v, 2] = ek1 * (rxy[s, 2, 0] * rx + rxy[s, 2, 1] * ry + rxy[s, 2, 2] * rz) + rec
        out[k, :, :] = 0.0
        for i in range(3):
            for j in range(3):
                out[k, i, j] = M[j, i] - M[3, i]
            out[k, i, 3] = M[3, i]
        out[k, 3, 3] = 1.0
        if deriv:
            for i in range(3):
                for j in range(7):
                    if j == 3:
                        out[k, 4 + i, j] = D[3, i]
                    else:
                        out[k, 4 + i, j] = D[j, i] - D[3, i]


@njit(**_OPTS)
def apply_combined(C, m, dm, deriv):
    n = m.shape[0]
    for k in range(n):
        mx = m[k, 0]
        my = m[k, 1]
        mz = m[k, 2]
        if deriv:
            dx = dm[k, 0]
            dy = dm[k, 1]
            dz = dm[k, 2]
            for i in range(3):
                dm[k, i] = (C[k, 4 + i, 0] * mx + C[k, 4 + i, 1] * my + C[k, 4 + i, 2] * mz
                            + C[k, 4 + i, 3] + C[k, 4 + i, 4] * dx + C[k, 4 + i, 5] * dy
                            + C[k, 4 + i, 6] * dz)
        for i in range(3):
            m[k, i] = C[k, i, 0] * mx + C[k, i, 1] * my + C[k, i, 2] * mz + C[k, i, 3]


@njit(**_OPTS)
def rotate_all(m, dm, R, deriv):
    """Apply one shared rotation (instantaneous pulse) to state and derivative."""
    n = m.shape[0]
    for k in range(n):
        a = m[k, 0]
        b = m[k, 1]
        c = m[k, 2]
        for i in range(3):
            m[k, i] = R[i, 0] * a + R[i, 1] * b + R[i, 2] * c
        if deriv:
            a = dm[k, 0]
            b = dm[k, 1]
            c = dm[k, 2]
            for i in range(3):
                dm[k, i] = R[i, 0] * a + R[i, 1] * b + R[i, 2] * c


@njit(**_OPTS)
def free_pieces(m, dm, pos, off, t1, t2, taus, moments, sids, gam, deriv,
                m0, t2p, w_re, w_im, out_re, out_im, by_mag, eps):
    """Closed-form free precession through consecutive pieces.

    Piece ``p`` lasts ``taus[p]`` seconds with gradient moment
    ``moments[p]`` (T s/m). When ``sids[p] >= 0`` the state at the end of the
    piece is sampled into column ``sids[p]``. Factors are reused while
    consecutive pieces are identical (readout dwell).
    """
    n = m.shape[0]
    npc = taus.shape[0]
    ncoil = w_re.shape[0]
    for k in range(n):
        mx = m[k, 0]
        my = m[k, 1]
        mz = m[k, 2]
        dx = 0.0
        dy = 0.0
        dz = 0.0
        if deriv:
            dx = dm[k, 0]
            dy = dm[k, 1]
            dz = dm[k, 2]
        x = pos[k, 0]
        y = pos[k, 1]
        z = pos[k, 2]
        c = 1.0
        s = 0.0
        E1 = 1.0
        E2 = 1.0
        tau = 0.0
        for p in range(npc):
            if (p == 0 or taus[p] != taus[p - 1] or moments[p, 0] != moments[p - 1, 0]
                    or moments[p, 1] != moments[p - 1, 1]
                    or moments[p, 2] != moments[p - 1, 2]):
                tau = taus[p]
                ph = gam * (moments[p, 0] * x + moments[p, 1] * y + moments[p, 2] * z) \
                    + off[k] * tau
                c = math.cos(ph)
                s = math.sin(ph)
                E1 = math.exp(-tau / t1[k])
                E2 = math.exp(-tau / t2[k])
            if deriv:
                ux = dx + tau * my
                uy = dy - tau * mx
                dx = E2 * (c * ux + s * uy)
                dy = E2 * (c * uy - s * ux)
                dz = dz * E1
            nx = E2 * (c * mx + s * my)
            my = E2 * (c * my - s * mx)
            mx = nx
            mz = 1.0 + (mz - 1.0) * E1
            sid = sids[p]
            if sid >= 0:
                re, im = _sample(mx, my, dx, dy, m0[k], t2p[k], deriv, by_mag, eps)
                for cc in range(ncoil):
                    wr = w_re[cc, k]
                    wi = w_im[cc, k]
                    out_re[cc, sid] += wr * re - wi * im
                    out_im[cc, sid] += wr * im + wi * re
        m[k, 0] = mx
        m[k, 1] = my
        m[k, 2] = mz
        if deriv:
            dm[k, 0] = dx
            dm[k, 1] = dy
            dm[k, 2] = dz
