"""Closed-form propagation across intervals without RF."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import GAMMA_BAR


@dataclass(frozen=True)
class FreeSegment:
    duration: float      # seconds
    bz_integral: float   # rad, accumulated z phase at omega = 0

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")


def bz_integral(gradient_segments, position, tissue, duration, gamma_bar=GAMMA_BAR):
    """Phase (rad) accumulated over a free interval at ``omega = 0``.

    ``gradient_segments`` is a list of ``(dt_seconds, gx, gy, gz)`` with
    gradients in T/m; an empty list means no gradients. ``tissue.db0`` and
    ``tissue.shift`` are in Hz.
    """
    if gradient_segments:
        total = sum(seg[0] for seg in gradient_segments)
        if not math.isclose(total, duration, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError(f"gradient segments last {total} s, interval is {duration} s")
    r = np.asarray(position, dtype=np.float64)
    moment = np.zeros(3)
    for dt, gx, gy, gz in gradient_segments:
        moment += np.array([gx, gy, gz]) * dt
    return (2.0 * np.pi * gamma_bar * float(moment @ r)
            + 2.0 * np.pi * (tissue.db0 + tissue.shift) * duration)


def propagate_free(state, seg: FreeSegment, tissue) -> np.ndarray:
    """Exact free precession and relaxation of a 7-element state.

    The derivative picks up ``-i * tau * mxy`` because the z phase grows
    with slope ``tau`` in ``omega``.
    """
    state = np.asarray(state, dtype=np.float64)
    tau = seg.duration
    mxy = state[0] + 1j * state[1]
    dmxy = state[4] + 1j * state[5]
    rot = np.exp(-1j * seg.bz_integral)
    e2 = math.exp(-tau / tissue.t2)
    e1 = math.exp(-tau / tissue.t1)
    new_dmxy = e2 * (dmxy * rot - 1j * tau * mxy * rot)
    new_mxy = mxy * e2 * rot
    mz = 1.0 + (state[2] - 1.0) * e1
    return np.array([new_mxy.real, new_mxy.imag, mz, 1.0,
                     new_dmxy.real, new_dmxy.imag, state[6] * e1])


def free_matrix(seg: FreeSegment, tissue) -> np.ndarray:
    """``propagate_free`` written as an affine 7x7 matrix."""
    out = np.zeros((7, 7))
    for j in range(7):
        e = np.zeros(7)
        e[j] = 1.0
        e[3] = 1.0
        out[:, j] = propagate_free(e, seg, tissue)
    base = out[:, 3].copy()
    for j in (0, 1, 2, 4, 5, 6):
        out[:, j] -= base
    return out
