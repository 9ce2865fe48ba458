"""Cartesian k-space gridding and image output."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrityError
from .sampling import AdcStream


@dataclass
class KSpaceGrid:
    """k-space samples ``data[coil, pe, ro]``.

    ``source[pe, ro]`` is the stream sample index that landed in each cell.
    """

    data: np.ndarray
    source: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def matrix(self):
        return self.data.shape[1:]


def grid_cartesian(stream: AdcStream, meta: dict = None) -> KSpaceGrid:
    """Place one ADC event per phase-encode line.

    ``meta`` (default ``stream.meta``) must carry ``matrix: [n_pe, n_ro]`` and
    ``kspace: {lines, reversed}``; event ``j`` fills line ``lines[j]``, read
    backwards when ``reversed[lines[j]]`` is set.
    """
    meta = stream.meta if meta is None else meta
    try:
        n_pe, n_ro = (int(v) for v in meta["matrix"])
        lines = [int(v) for v in meta["kspace"]["lines"]]
        rev = [bool(v) for v in meta["kspace"]["reversed"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise IntegrityError(f"sequence metadata lacks a Cartesian layout: {exc}") from exc
    sizes = stream.event_sizes or (stream.num_samples,)
    if stream.num_samples != len(lines) * n_ro:
        raise IntegrityError(
            f"stream has {stream.num_samples} samples, layout needs {len(lines)} x {n_ro}")
    bad = [j for j, s in enumerate(sizes) if s != n_ro]
    if bad or len(sizes) != len(lines):
        raise IntegrityError(f"adc events {bad[:5]} do not hold {n_ro} readout samples")
    missing = sorted(set(range(n_pe)) - set(lines))
    if missing:
        raise IntegrityError(f"k-space line {missing[0]} was never acquired")
    if len(rev) != n_pe:
        raise IntegrityError(f"reversal flags cover {len(rev)} lines, matrix has {n_pe}")
    data = np.zeros((stream.num_coils, n_pe, n_ro), dtype=np.complex128)
    source = np.full((n_pe, n_ro), -1, dtype=np.int64)
    for j, line in enumerate(lines):
        idx = np.arange(j * n_ro, (j + 1) * n_ro)
        if rev[line]:
            idx = idx[::-1]
        data[:, line, :] = stream.samples[:, idx]
        source[line] = idx
    return KSpaceGrid(data, source, dict(meta))


def ifft2_magnitude(grid) -> np.ndarray:
    """Centered inverse 2-D DFT; root-sum-of-squares over coils.

    Accepts a :class:`KSpaceGrid` or an array ``(pe, ro)`` / ``(coil, pe, ro)``.
    DC lands at index ``n // 2`` on both axes.
    """
    k = grid.data if isinstance(grid, KSpaceGrid) else np.asarray(grid)
    k = k.reshape((-1,) + k.shape[-2:])
    img = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(k, axes=(-2, -1))), axes=(-2, -1))
    return np.sqrt(np.sum(np.abs(img) ** 2, axis=0))


def write_pgm(path, image: np.ndarray) -> float:
    """16-bit binary PGM scaled so the maximum maps to 65535; returns the scale."""
    img = np.asarray(image, dtype=np.float64)
    peak = float(img.max()) if img.size else 0.0
    scale = 65535.0 / peak if peak > 0 else 0.0
    q = np.clip(np.rint(img * scale), 0, 65535).astype(">u2")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(q.tobytes())
    return scale


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise IntegrityError("not a binary PGM file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(raw[pos + 1:], dtype=dtype).reshape(h, w)


def save_image(stem, image: np.ndarray, extra: dict = None) -> dict:
    """Write ``stem.pgm``, ``stem.f32`` (raw little-endian) and ``stem.json``."""
    stem = str(stem)
    img = np.asarray(image, dtype=np.float64)
    scale = write_pgm(stem + ".pgm", img)
    img.astype("<f4").tofile(stem + ".f32")
    side = {"dims": list(img.shape), "dtype": "float32-le", "order": "row-major",
            "pgm_scale": scale, "max": float(img.max()) if img.size else 0.0}
    side.update(extra or {})
    with open(stem + ".json", "w") as fh:
        json.dump(side, fh, indent=1)
    return side


def load_raw_image(stem) -> np.ndarray:
    stem = str(stem)
    with open(stem + ".json") as fh:
        side = json.load(fh)
    return np.fromfile(stem + ".f32", dtype="<f4").reshape(side["dims"])


def region_ratio(image: np.ndarray, inner: np.ndarray, outer: np.ndarray) -> float:
    """Mean of ``image`` over ``inner`` divided by its mean over ``outer``."""
    return float(image[inner].mean() / image[outer].mean())
