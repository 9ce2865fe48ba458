"""ADC signal formation and stream storage.

The continuous Lorentzian model turns a state and its omega-derivative into
one sample: the transverse magnetization damped by
``exp(-|dphi/domega| / t2prime)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import IntegrityError

EPS = 1e-10


def phase_slope(state, denominator: str = "squared", eps: float = EPS):
    """Slope of the transverse phase with respect to omega (seconds).

    ``state`` is a 7-vector or an array with the 7 components on the last
    axis. ``denominator="magnitude"`` divides by ``|mxy|`` instead of
    ``|mxy|**2``.
    """
    s = np.asarray(state, dtype=np.float64)
    mx, my, dmx, dmy = s[..., 0], s[..., 1], s[..., 4], s[..., 5]
    num = mx * dmy - my * dmx
    p = mx * mx + my * my
    if denominator == "squared":
        den = np.maximum(p, eps * eps)
    elif denominator == "magnitude":
        den = np.maximum(np.sqrt(p), eps)
    else:
        raise ValueError(f"unknown denominator mode {denominator!r}")
    return num / den


def t2prime_decay(slope, t2prime):
    """Lorentzian damping factor; exactly 1 when ``t2prime`` is infinite."""
    return np.exp(-np.abs(slope) / np.asarray(t2prime, dtype=np.float64))


def sample_continuous(state, m0, t2prime, coil_weight=1.0, denominator: str = "squared"):
    s = np.asarray(state, dtype=np.float64)
    decay = t2prime_decay(phase_slope(s, denominator), t2prime)
    return coil_weight * (m0 * (s[..., 0] + 1j * s[..., 1]) * decay)


def sample_discrete(states, m0s, coil_weights=1.0):
    """Sum of weighted transverse magnetizations over isochromats."""
    s = np.asarray(states, dtype=np.float64).reshape(-1, np.shape(states)[-1])
    mxy = s[:, 0] + 1j * s[:, 1]
    return np.sum(np.broadcast_to(coil_weights, mxy.shape) * np.asarray(m0s) * mxy)


def pairwise_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Sum arrays by adjacent pairs, always in the same tree shape."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to sum")
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


@dataclass
class CoilSensitivity:
    """Gaussian receive profile ``exp(-|r-c|^2 / (2 sigma^2)) * exp(i phase)``.

    ``sigma = inf`` gives a uniform coil.
    """

    center: tuple = (0.0, 0.0, 0.0)
    sigma: float = float("inf")
    phase: float = 0.0

    def weights(self, positions: np.ndarray) -> np.ndarray:
        d2 = np.sum((np.asarray(positions) - np.asarray(self.center)) ** 2, axis=-1)
        mag = np.exp(-d2 / (2.0 * self.sigma ** 2)) if np.isfinite(self.sigma) \
            else np.ones(d2.shape)
        return mag * np.exp(1j * self.phase)


@dataclass(eq=False)
class AdcStream:
    """Complex samples per coil, ``samples[coil, i]`` at ``times_us[i]``."""

    times_us: np.ndarray
    samples: np.ndarray
    event_sizes: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times_us = np.asarray(self.times_us, dtype=np.float64).reshape(-1)
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.complex128))
        if self.samples.shape[1] != self.times_us.size:
            raise IntegrityError(
                f"{self.samples.shape[1]} samples per coil but {self.times_us.size} times")
        self.event_sizes = tuple(int(e) for e in self.event_sizes)
        if self.event_sizes and sum(self.event_sizes) != self.times_us.size:
            raise IntegrityError("event sizes do not add up to the sample count")

    @property
    def num_coils(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.times_us.size

    def events(self):
        """Split samples into per-ADC-event arrays ``(ncoil, num)``."""
        sizes = self.event_sizes or (self.num_samples,)
        out, i = [], 0
        for n in sizes:
            out.append(self.samples[:, i:i + n])
            i += n
        return out

    def to_bytes(self) -> bytes:
        header = {"num_samples": self.num_samples, "num_coils": self.num_coils,
                  "times_us": self.times_us.tolist(), "event_sizes": list(self.event_sizes),
                  "meta": self.meta}
        pairs = np.empty((self.num_coils, self.num_samples, 2), dtype="<f4")
        pairs[..., 0] = self.samples.real
        pairs[..., 1] = self.samples.imag
        return json.dumps(header).encode("utf-8") + b"\n" + pairs.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "AdcStream":
        nl = data.find(b"\n")
        if nl < 0:
            raise IntegrityError("stream file has no header line")
        try:
            h = json.loads(data[:nl].decode("utf-8"))
            ns, nc = int(h["num_samples"]), int(h["num_coils"])
        except (ValueError, KeyError, TypeError) as exc:
            raise IntegrityError(f"bad stream header: {exc}") from exc
        payload = data[nl + 1:]
        if len(payload) != 8 * ns * nc:
            raise IntegrityError(f"stream payload has {len(payload)} bytes, expected {8 * ns * nc}")
        pairs = np.frombuffer(payload, dtype="<f4").reshape(nc, ns, 2).astype(np.float64)
        return cls(h["times_us"], pairs[..., 0] + 1j * pairs[..., 1],
                   tuple(h.get("event_sizes", ())), h.get("meta", {}))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "AdcStream":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def accumulate(partials: Mapping[int, np.ndarray], num_parts: int, times_us,
               event_sizes=(), meta: Optional[dict] = None, num_coils: int = 1) -> AdcStream:
    """Reduce per-partition complex sums ``(ncoil, nsamp)`` into a stream.

    Partitions are combined by a fixed pairwise tree in index order, so the
    result depends only on how isochromats were partitioned, never on which
    worker produced which part.
    """
    missing = [i for i in range(num_parts) if i not in partials]
    if missing:
        raise IntegrityError(f"missing partial sums for partitions {missing[:10]}")
    times_us = np.asarray(times_us, dtype=np.float64)
    if num_parts == 0:
        total = np.zeros((num_coils, times_us.size), dtype=np.complex128)
    else:
        total = pairwise_sum([partials[i] for i in range(num_parts)])
    return AdcStream(times_us, total, event_sizes, dict(meta or {}))
