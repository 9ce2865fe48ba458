"""Per-step rotation/relaxation matrices and single-isochromat updates.

Fields are gamma-premultiplied (rad/s). A step applies rotation first and
relaxation second (asymmetric operator splitting), with the rotation split
into a transverse-field part and a z part so that the derivative with
respect to the off-resonance frequency ``omega`` only involves the z part.

These are dense-matrix reference implementations; the batched engine uses
the equivalent scalar kernels in :mod:`t2primesim._kernels`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAMMA_BAR = 42.5764687e6  # Hz/T, proton


@dataclass(frozen=True)
class FieldStep:
    b1x: float
    b1y: float
    bz: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")


@dataclass(frozen=True)
class StepFactors:
    e1: float
    e2: float

    @property
    def recovery(self) -> float:
        return 1.0 - self.e1


def relaxation_factors(tissue, dt: float) -> StepFactors:
    return StepFactors(float(np.exp(-dt / tissue.t1)), float(np.exp(-dt / tissue.t2)))


def rot3(axis, theta: float) -> np.ndarray:
    """Rodrigues rotation by ``theta`` about unit ``axis``."""
    ux, uy, uz = axis
    c, s = np.cos(theta), np.sin(theta)
    C = 1.0 - c
    return np.array([
        [c + ux * ux * C, -uz * s + ux * uy * C, uy * s + ux * uz * C],
        [uz * s + ux * uy * C, c + uy * uy * C, -ux * s + uy * uz * C],
        [-uy * s + ux * uz * C, ux * s + uy * uz * C, c + uz * uz * C],
    ])


def field_rotation(b, dt: float) -> np.ndarray:
    """Rotation for a constant gamma-scaled field ``b`` over ``dt``.

    A zero field yields the identity.
    """
    b = np.asarray(b, dtype=np.float64)
    mag = float(np.sqrt(b @ b))
    if mag == 0.0:
        return np.eye(3)
    return rot3(b / mag, -mag * dt)


def rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def split_rotation(field: FieldStep):
    """Return ``(R3xy, R3z, dR3z)`` for one step.

    ``dR3z`` is the derivative of ``R3z`` with respect to ``omega``; the z
    angle is ``-bz*dt`` so its omega-slope is ``-dt``.
    """
    rxy = field_rotation((field.b1x, field.b1y, 0.0), field.dt)
    tz = -field.bz * field.dt
    rz = rot_z(tz)
    c, s = np.cos(tz), np.sin(tz)
    drz = -field.dt * np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])
    return rxy, rz, drz


def d3(f: StepFactors) -> np.ndarray:
    return np.diag([f.e2, f.e2, f.e1])


def d4(f: StepFactors) -> np.ndarray:
    out = np.eye(4)
    out[:3, :3] = d3(f)
    out[2, 3] = f.recovery
    return out


def r4(r3: np.ndarray) -> np.ndarray:
    out = np.eye(4)
    out[:3, :3] = r3
    return out


def d7(f: StepFactors) -> np.ndarray:
    out = np.zeros((7, 7))
    out[:4, :4] = d4(f)
    out[4:, 4:] = d3(f)
    return out


def r7(rxy: np.ndarray, rz: np.ndarray, drz: np.ndarray) -> np.ndarray:
    out = np.zeros((7, 7))
    out[:4, :4] = r4(rxy @ rz)
    out[4:, :3] = rxy @ drz
    out[4:, 4:] = rxy @ rz
    return out


def transition4(field: FieldStep, tissue) -> np.ndarray:
    rxy, rz, _ = split_rotation(field)
    return d4(relaxation_factors(tissue, field.dt)) @ r4(rxy @ rz)


def transition7(field: FieldStep, tissue) -> np.ndarray:
    return d7(relaxation_factors(tissue, field.dt)) @ r7(*split_rotation(field))


def step_m4(state, field: FieldStep, tissue) -> np.ndarray:
    """Advance ``(mx, my, mz, 1)`` by one piecewise-constant step."""
    return transition4(field, tissue) @ np.asarray(state, dtype=np.float64)


def step_m7(state, field: FieldStep, tissue) -> np.ndarray:
    """Advance ``(mx, my, mz, 1, dmx, dmy, dmz)`` by one step.

    The derivative block becomes ``D3 R3xy (dR3z m3 + R3z dm3)``.
    """
    return transition7(field, tissue) @ np.asarray(state, dtype=np.float64)
