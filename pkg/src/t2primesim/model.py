"""Tissue parameters, isochromats and voxel phantoms.

Relaxation times are in seconds, off-resonance and chemical shift in Hz.
``t2prime = inf`` means no reversible dephasing.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import IntegrityError, LayoutError

MAP_NAMES = ("m0", "t1", "t2", "t2prime", "db0_hz", "shift_hz")

# Pair rows 1-9: (t1, t2, t2prime outer, t2prime inner), seconds.
CIRCLES_ROWS = (
    (0.20, 0.05, 0.04, 0.02),
    (0.40, 0.05, 0.04, 0.02),
    (0.60, 0.05, 0.04, 0.02),
    (0.80, 0.05, 0.04, 0.02),
    (1.00, 0.05, 0.04, 0.02),
    (1.00, 0.10, 0.08, 0.04),
    (0.80, 0.10, 0.08, 0.04),
    (0.60, 0.10, 0.08, 0.04),
    (0.40, 0.10, 0.08, 0.04),
)
# A tenth row, used for the large cylinder (outer value).
CIRCLES_FILLER = (2.00, 0.05, 0.08)


@dataclass(frozen=True)
class TissueParams:
    m0: float = 1.0
    t1: float = 1.0
    t2: float = 0.1
    t2prime: float = math.inf
    db0: float = 0.0
    shift: float = 0.0

    def __post_init__(self):
        if not self.m0 >= 0:
            raise ValueError(f"m0 must be >= 0, got {self.m0}")
        for name in ("t1", "t2", "t2prime"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.t2 > self.t1:
            warnings.warn(f"t2 ({self.t2}) exceeds t1 ({self.t1})", stacklevel=3)


@dataclass(frozen=True)
class Isochromat:
    position: tuple[float, float, float]
    tissue: TissueParams
    db0_extra: float = 0.0


@dataclass(eq=False)
class Phantom:
    """Voxel phantom with per-voxel tissue maps.

    Maps are float32 arrays of shape ``dims`` indexed ``[x, y, z]``. Voxel
    ``i`` along an axis sits at ``(i - n // 2) * spacing`` so that the grid
    lines up with a centered DFT.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    maps: dict[str, np.ndarray]
    subvoxel_factors: tuple[int, int, int] = (1, 1, 1)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.spacing = tuple(float(s) for s in self.spacing)
        self.subvoxel_factors = tuple(int(f) for f in self.subvoxel_factors)
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"dims must be 3 positive ints, got {self.dims}")
        if min(self.subvoxel_factors) < 1:
            raise ValueError("subvoxel factors must be >= 1")
        missing = [n for n in MAP_NAMES if n not in self.maps]
        if missing:
            raise IntegrityError(f"phantom missing maps: {missing}")
        maps = {}
        for name in MAP_NAMES:
            arr = np.asarray(self.maps[name], dtype=np.float32)
            if arr.shape != self.dims:
                raise IntegrityError(f"map '{name}' has shape {arr.shape}, expected {self.dims}")
            maps[name] = arr
        self.maps = maps
        fg = maps["m0"] > 0
        if np.any(maps["m0"] < 0):
            raise ValueError("m0 must be >= 0")
        for name in ("t1", "t2", "t2prime"):
            if np.any(~(maps[name][fg] > 0)):
                raise ValueError(f"{name} must be > 0 wherever m0 > 0")
        if np.any(maps["t2"][fg] > maps["t1"][fg]):
            warnings.warn("some voxels have t2 > t1", stacklevel=2)

    @property
    def num_isochromats(self) -> int:
        fx, fy, fz = self.subvoxel_factors
        return int(np.count_nonzero(self.maps["m0"] > 0)) * fx * fy * fz

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.dims[axis]
        return (np.arange(n) - n // 2) * self.spacing[axis]

    def __eq__(self, other):
        if not isinstance(other, Phantom):
            return NotImplemented
        return (self.dims == other.dims and self.spacing == other.spacing
                and self.subvoxel_factors == other.subvoxel_factors
                and all(np.array_equal(self.maps[n], other.maps[n], equal_nan=True)
                        for n in MAP_NAMES))


@dataclass(frozen=True)
class CirclesLayout:
    """Geometry of the circles phantom, lengths in meters (xy plane)."""

    big_radius: float
    pair_centers: tuple[tuple[float, float], ...]
    outer_radius: float
    inner_radius: float

    def masks(self, xs: np.ndarray, ys: np.ndarray, erode: float = 0.0):
        """Boolean (inner, outer-annulus) masks per pair on the xy grid ``[x, y]``.

        ``erode`` shrinks each region by that distance from its boundaries.
        """
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        inner, outer = [], []
        for cx, cy in self.pair_centers:
            r = np.hypot(X - cx, Y - cy)
            inner.append(r < self.inner_radius - erode)
            outer.append((r > self.inner_radius + erode) & (r < self.outer_radius - erode))
        return inner, outer


def circles_layout(dims, spacing, *, big_fraction=0.47, inner_fraction=0.4,
                   outer_fraction=0.8) -> CirclesLayout:
    """3x3 grid of concentric pairs inscribed in one large cylinder.

    The cell half-width ``h`` is the largest that keeps the corner pairs'
    outer circles inside the large one. Inner and outer radii are fractions
    of ``h``.
    """
    nx, ny = dims[0], dims[1]
    extent = min(nx * spacing[0], ny * spacing[1])
    big = big_fraction * extent
    h = big / (2.0 * math.sqrt(2.0) + outer_fraction + 0.05)
    inner = inner_fraction * h
    min_px = max(spacing[0], spacing[1])
    if inner < min_px or outer_fraction <= inner_fraction:
        raise LayoutError(
            f"grid {nx}x{ny} too small to place 9 concentric pairs "
            f"(inner radius {inner / min_px:.2f} voxels, need >= 1)")
    centers = tuple((2.0 * h * i, 2.0 * h * j) for j in (1, 0, -1) for i in (-1, 0, 1))
    return CirclesLayout(big, centers, outer_fraction * h, inner)


def make_circles_phantom(dims=(64, 64, 4), spacing=(3.75e-3, 3.75e-3, 3e-3),
                         rows: Sequence[Sequence[float]] = CIRCLES_ROWS,
                         filler: Sequence[float] = CIRCLES_FILLER,
                         m0: float = 1.0, subvoxel_factors=(1, 1, 1),
                         **layout_kw) -> Phantom:
    """Large cylinder holding up to 9 concentric pairs, axes along z.

    ``rows`` holds ``(t1, t2, t2prime_outer, t2prime_inner)`` per pair in
    row-major grid order (top-left first). Membership is decided at voxel
    centers.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise LayoutError(f"dims must be 3 positive ints, got {dims}")
    if not 1 <= len(rows) <= 9:
        raise LayoutError(f"need 1..9 pair rows, got {len(rows)}")
    layout = circles_layout(dims, spacing, **layout_kw)
    xs = (np.arange(dims[0]) - dims[0] // 2) * spacing[0]
    ys = (np.arange(dims[1]) - dims[1] // 2) * spacing[1]
    X, Y = np.meshgrid(xs, ys, indexing="ij")

    shape2 = dims[:2]
    m0m = np.zeros(shape2)
    t1m = np.ones(shape2)
    t2m = np.ones(shape2)
    t2pm = np.full(shape2, np.inf)

    big = np.hypot(X, Y) < layout.big_radius
    m0m[big] = m0
    t1m[big], t2m[big], t2pm[big] = filler
    for (cx, cy), row in zip(layout.pair_centers, rows):
        t1, t2, tp_out, tp_in = row
        r = np.hypot(X - cx, Y - cy)
        outer = r < layout.outer_radius
        inner = r < layout.inner_radius
        t1m[outer], t2m[outer] = t1, t2
        t2pm[outer] = tp_out
        t2pm[inner] = tp_in

    def extrude(a):
        return np.repeat(a[:, :, None], dims[2], axis=2)

    maps = {
        "m0": extrude(m0m), "t1": extrude(t1m), "t2": extrude(t2m),
        "t2prime": extrude(t2pm),
        "db0_hz": np.zeros(dims), "shift_hz": np.zeros(dims),
    }
    return Phantom(dims, spacing, maps, subvoxel_factors)


@dataclass(eq=False)
class IsochromatSet:
    """Struct-of-arrays view of many isochromats, in a fixed order."""

    positions: np.ndarray         # (n, 3) meters
    m0: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    t2prime: np.ndarray
    db0_hz: np.ndarray
    shift_hz: np.ndarray
    db0_extra_hz: np.ndarray = field(default=None)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = self.positions.shape[0]
        for name in ("m0", "t1", "t2", "t2prime", "db0_hz", "shift_hz"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.shape[0] != n:
                raise IntegrityError(f"{name} has {arr.shape[0]} entries, expected {n}")
            setattr(self, name, arr)
        if self.db0_extra_hz is None:
            self.db0_extra_hz = np.zeros(n)
        self.db0_extra_hz = np.ascontiguousarray(self.db0_extra_hz, dtype=np.float64).reshape(-1)

    def __len__(self):
        return self.positions.shape[0]

    def off_resonance(self) -> np.ndarray:
        """Per-isochromat off-resonance in rad/s (db0 + shift + extra)."""
        return 2.0 * np.pi * (self.db0_hz + self.shift_hz + self.db0_extra_hz)

    def subset(self, sl) -> "IsochromatSet":
        return IsochromatSet(self.positions[sl], self.m0[sl], self.t1[sl], self.t2[sl],
                             self.t2prime[sl], self.db0_hz[sl], self.shift_hz[sl],
                             self.db0_extra_hz[sl])

    @classmethod
    def single(cls, tissue: TissueParams, position=(0.0, 0.0, 0.0)) -> "IsochromatSet":
        return cls.from_isochromats([Isochromat(tuple(position), tissue)])

    @classmethod
    def from_isochromats(cls, isos: Iterable[Isochromat]) -> "IsochromatSet":
        isos = list(isos)
        def col(f):
            return np.array([f(i) for i in isos], dtype=np.float64)
        return cls(
            positions=np.array([i.position for i in isos], dtype=np.float64).reshape(-1, 3),
            m0=col(lambda i: i.tissue.m0), t1=col(lambda i: i.tissue.t1),
            t2=col(lambda i: i.tissue.t2), t2prime=col(lambda i: i.tissue.t2prime),
            db0_hz=col(lambda i: i.tissue.db0), shift_hz=col(lambda i: i.tissue.shift),
            db0_extra_hz=col(lambda i: i.db0_extra),
        )

    @classmethod
    def from_phantom(cls, phantom: Phantom) -> "IsochromatSet":
        """Split nonzero voxels into subvoxel isochromats.

        Order: voxels x-fastest, then subvoxels x-fastest within each voxel.
        Each subvoxel carries ``m0 / (fx*fy*fz)``.
        """
        fx, fy, fz = phantom.subvoxel_factors
        nsub = fx * fy * fz
        m0 = phantom.maps["m0"]
        # x-fastest voxel order == Fortran order over [x, y, z]
        flat = {k: v.ravel(order="F").astype(np.float64) for k, v in phantom.maps.items()}
        idx = np.flatnonzero(flat["m0"] > 0)
        ix, iy, iz = np.unravel_index(idx, m0.shape, order="F")
        centers = np.stack([phantom.axis_coords(0)[ix], phantom.axis_coords(1)[iy],
                            phantom.axis_coords(2)[iz]], axis=1)
        sub = np.array([[((a + 0.5) / fx - 0.5) * phantom.spacing[0],
                         ((b + 0.5) / fy - 0.5) * phantom.spacing[1],
                         ((c + 0.5) / fz - 0.5) * phantom.spacing[2]]
                        for c in range(fz) for b in range(fy) for a in range(fx)])
        pos = (centers[:, None, :] + sub[None, :, :]).reshape(-1, 3)

        def rep(name):
            return np.repeat(flat[name][idx], nsub)

        return cls(pos, rep("m0") / nsub, rep("t1"), rep("t2"), rep("t2prime"),
                   rep("db0_hz"), rep("shift_hz"))

    def expand_discrete(self, k: int, seed: int, base_index: int = 0) -> "IsochromatSet":
        """Replicate each isochromat ``k`` times with Lorentzian frequency offsets.

        Isochromat ``i`` draws its offsets from its own stream seeded by
        ``(seed, base_index + i)``, so the draw does not depend on how a
        phantom is chunked. Each copy carries ``m0 / k``.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        n = len(self)
        omega = np.empty((n, k))
        for i in range(n):
            omega[i] = sample_lorentzian_offsets(
                self.t2prime[i], k, np.random.SeedSequence((seed, base_index + i)))
        sl = np.repeat(np.arange(n), k)
        out = self.subset(sl)
        out.m0 = out.m0 / k
        out.db0_extra_hz = out.db0_extra_hz + omega.ravel() / (2.0 * np.pi)
        return out


def split_subvoxels(phantom: Phantom) -> Iterator[Isochromat]:
    """Yield one :class:`Isochromat` per subvoxel of every nonzero voxel."""
    s = IsochromatSet.from_phantom(phantom)
    for i in range(len(s)):
        # background is excluded, so validation never sees m0 = 0 here
        tissue = TissueParams(s.m0[i], s.t1[i], s.t2[i], s.t2prime[i], s.db0_hz[i],
                              s.shift_hz[i])
        yield Isochromat(tuple(s.positions[i]), tissue, 0.0)


_U_LO = np.nextafter(0.0, 1.0)
_U_HI = np.nextafter(1.0, 0.0)


def lorentzian_from_uniform(u, t2prime):
    """Inverse Lorentzian CDF with mode 0 and scale ``1/t2prime`` (rad/s)."""
    u = np.clip(np.asarray(u, dtype=np.float64), _U_LO, _U_HI)
    t2prime = np.asarray(t2prime, dtype=np.float64)
    scale = np.where(np.isinf(t2prime), 0.0, 1.0 / t2prime)
    return scale * np.tan(np.pi * (u - 0.5))


def sample_lorentzian_offsets(t2prime: float, k: int, seed=None) -> np.ndarray:
    """Draw ``k`` off-resonance frequencies (rad/s) from a Lorentzian."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if math.isinf(t2prime):
        return np.zeros(k)
    if not t2prime > 0:
        raise ValueError("t2prime must be > 0")
    rng = np.random.default_rng(seed)
    return lorentzian_from_uniform(rng.random(k), t2prime)


def lorentzian_cdf(omega, t2prime):
    return 0.5 + np.arctan(np.asarray(omega) * t2prime) / np.pi


# ---------------------------------------------------------------- file IO

def phantom_to_bytes(phantom: Phantom) -> bytes:
    header = {
        "dims": list(phantom.dims),
        "spacing_m": list(phantom.spacing),
        "subvoxel_factors": list(phantom.subvoxel_factors),
        "maps": list(MAP_NAMES),
    }
    parts = [json.dumps(header).encode("utf-8"), b"\n"]
    for name in MAP_NAMES:
        parts.append(phantom.maps[name].astype("<f4").ravel(order="F").tobytes())
    return b"".join(parts)


def phantom_from_bytes(data: bytes) -> Phantom:
    nl = data.find(b"\n")
    if nl < 0:
        raise IntegrityError("phantom file has no header line")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
        dims = tuple(int(d) for d in header["dims"])
        spacing = tuple(float(s) for s in header["spacing_m"])
        factors = tuple(int(f) for f in header.get("subvoxel_factors", (1, 1, 1)))
        names = list(header["maps"])
    except (ValueError, KeyError, TypeError) as exc:
        raise IntegrityError(f"bad phantom header: {exc}") from exc
    nvox = int(np.prod(dims))
    payload = data[nl + 1:]
    if len(payload) != 4 * nvox * len(names):
        raise IntegrityError(
            f"phantom payload has {len(payload)} bytes, expected {4 * nvox * len(names)}")
    raw = np.frombuffer(payload, dtype="<f4")
    maps = {name: raw[i * nvox:(i + 1) * nvox].reshape(dims, order="F").copy()
            for i, name in enumerate(names)}
    return Phantom(dims, spacing, maps, factors)


def save_phantom(path, phantom: Phantom) -> None:
    with open(path, "wb") as fh:
        fh.write(phantom_to_bytes(phantom))


def load_phantom(path) -> Phantom:
    with open(path, "rb") as fh:
        return phantom_from_bytes(fh.read())
