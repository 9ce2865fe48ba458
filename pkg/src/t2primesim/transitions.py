"""Combined transitions for repeated RF blocks.

A combined transition is the ordered product of every per-step 7x7 matrix
of one RF block for one isochromat. It is built once per (pulse, isochromat)
and then applied to the state in a single matrix-vector product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .kernel import GAMMA_BAR, FieldStep, transition4, transition7
from .model import IsochromatSet
from .seqio import RFBlock, dedup_blocks, dedup_counts, pulse_key  # noqa: F401


@dataclass(frozen=True, eq=False)
class PreparedRF:
    """Raster-step data of one RF block shared by all isochromats."""

    key: str
    dt: float
    b1x: np.ndarray     # rad/s
    b1y: np.ndarray     # rad/s
    grad: np.ndarray    # (n, 3) T/m
    rxy: np.ndarray     # (n, 3, 3) transverse-field rotations

    @property
    def num_steps(self) -> int:
        return self.b1x.size


def transverse_rotations(b1x: np.ndarray, b1y: np.ndarray, dt: float) -> np.ndarray:
    """Per-step rotations about the in-plane field, identity where it vanishes."""
    mag = np.hypot(b1x, b1y)
    safe = np.where(mag > 0, mag, 1.0)
    ux = np.where(mag > 0, b1x / safe, 1.0)
    uy = np.where(mag > 0, b1y / safe, 0.0)
    th = -mag * dt
    c, s = np.cos(th), np.sin(th)
    C = 1.0 - c
    R = np.empty((b1x.size, 3, 3))
    R[:, 0, 0] = c + ux * ux * C
    R[:, 0, 1] = ux * uy * C
    R[:, 0, 2] = uy * s
    R[:, 1, 0] = ux * uy * C
    R[:, 1, 1] = c + uy * uy * C
    R[:, 1, 2] = -ux * s
    R[:, 2, 0] = -uy * s
    R[:, 2, 1] = ux * s
    R[:, 2, 2] = c
    return R


def prepare_rf(block: RFBlock, raster_us: int = 1) -> PreparedRF:
    dt = raster_us * 1e-6
    amp = 2.0 * np.pi * block.b1_hz
    b1x = amp * np.cos(block.b1_phase_rad)
    b1y = amp * np.sin(block.b1_phase_rad)
    return PreparedRF(pulse_key(block, raster_us), dt, b1x, b1y,
                      np.ascontiguousarray(block.gradients()),
                      transverse_rotations(b1x, b1y, dt))


def _as_set(iso) -> IsochromatSet:
    if isinstance(iso, IsochromatSet):
        return iso
    return IsochromatSet.from_isochromats([iso])


def build_combined_batch(prep: PreparedRF, isos: IsochromatSet, deriv: bool = True,
                         gamma_bar: float = GAMMA_BAR) -> np.ndarray:
    """Combined transitions ``(n, 7, 7)`` (or ``(n, 4, 4)`` without derivatives)."""
    size = 7 if deriv else 4
    out = np.empty((len(isos), size, size))
    _kernels.build_combined(prep.rxy, prep.grad, isos.positions, isos.off_resonance(),
                            np.exp(-prep.dt / isos.t1), np.exp(-prep.dt / isos.t2),
                            prep.dt, 2.0 * np.pi * gamma_bar, deriv, out)
    return out


def build_combined(block: RFBlock, isochromat, raster_us: int = 1,
                   gamma_bar: float = GAMMA_BAR, deriv: bool = True) -> np.ndarray:
    """Combined transition of ``block`` for one isochromat."""
    return build_combined_batch(prepare_rf(block, raster_us), _as_set(isochromat), deriv,
                                gamma_bar)[0]


def field_steps(block: RFBlock, isochromat, raster_us: int = 1, gamma_bar: float = GAMMA_BAR):
    """Per-step :class:`FieldStep` list of ``block`` seen by one isochromat."""
    prep = prepare_rf(block, raster_us)
    s = _as_set(isochromat)
    off = s.off_resonance()[0]
    bz = 2.0 * np.pi * gamma_bar * (prep.grad @ s.positions[0]) + off
    return [FieldStep(prep.b1x[i], prep.b1y[i], bz[i], prep.dt) for i in range(prep.num_steps)]


class _TissueView:
    def __init__(self, t1, t2):
        self.t1, self.t2 = t1, t2


def explicit_product(block: RFBlock, isochromat, raster_us: int = 1,
                     gamma_bar: float = GAMMA_BAR, deriv: bool = True) -> np.ndarray:
    """Reference: left-multiply the dense per-step matrices in time order."""
    s = _as_set(isochromat)
    tissue = _TissueView(s.t1[0], s.t2[0])
    step = transition7 if deriv else transition4
    C = np.eye(7 if deriv else 4)
    for f in field_steps(block, s, raster_us, gamma_bar):
        C = step(f, tissue) @ C
    return C


def apply(transition: np.ndarray, state) -> np.ndarray:
    out = transition @ np.asarray(state, dtype=np.float64)
    out[3] = 1.0 if out.shape[0] > 3 else out[3]
    return out


def check_structure(c7: np.ndarray, c4: np.ndarray = None) -> None:
    """Assert the block structure of a combined 7x7 transition.

    Row 3 carries the constant, the magnetization rows ignore the derivative
    block, and the top-left 4x4 equals the plain combined transition.
    """
    if c7.shape != (7, 7):
        raise AssertionError(f"expected 7x7, got {c7.shape}")
    if not np.array_equal(c7[3], np.array([0, 0, 0, 1, 0, 0, 0], dtype=float)):
        raise AssertionError(f"row 3 is {c7[3]}")
    if np.any(c7[:4, 4:] != 0):
        raise AssertionError("magnetization rows depend on the derivative block")
    if c4 is not None and not np.array_equal(c7[:4, :4], c4):
        raise AssertionError("top-left block differs from the 4x4 combined transition")
