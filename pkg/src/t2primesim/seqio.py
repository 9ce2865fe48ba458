"""Sequence intermediate representation and its JSON format.

A sequence is an ordered list of blocks:

* :class:`RFBlock` - RF and gradient waveforms sampled on the raster,
* :class:`FreeBlock` - an interval without RF, with piecewise-constant
  gradient segments,
* :class:`IdealPulse` - an instantaneous rotation (zero duration).

RF and free blocks may carry one :class:`Adc` event. All times are integer
microseconds; RF amplitude is ``gamma*B1/2pi`` in Hz; gradients are T/m.
RF phase ``phi`` rotates about ``(cos phi, sin phi, 0)``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import SequenceError
from .kernel import GAMMA_BAR


@dataclass(frozen=True)
class Adc:
    delay_us: int
    num: int
    dwell_us: int

    def offsets_us(self) -> np.ndarray:
        return self.delay_us + self.dwell_us * np.arange(self.num, dtype=np.int64)

    @property
    def last_us(self) -> int:
        return self.delay_us + (self.num - 1) * self.dwell_us


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RFBlock:
    b1_hz: np.ndarray
    b1_phase_rad: np.ndarray
    gx: np.ndarray = None
    gy: np.ndarray = None
    gz: np.ndarray = None
    adc: Optional[Adc] = None

    def __post_init__(self):
        b1 = _frozen(self.b1_hz)
        object.__setattr__(self, "b1_hz", b1)
        object.__setattr__(self, "b1_phase_rad", _frozen(self.b1_phase_rad))
        for name in ("gx", "gy", "gz"):
            val = getattr(self, name)
            object.__setattr__(self, name,
                               _frozen(np.zeros(b1.size) if val is None else val))

    @property
    def num_samples(self) -> int:
        return self.b1_hz.size

    def duration_us(self, raster_us: int) -> int:
        return self.num_samples * raster_us

    def gradients(self) -> np.ndarray:
        return np.stack([self.gx, self.gy, self.gz], axis=1)

    def __eq__(self, other):
        if not isinstance(other, RFBlock):
            return NotImplemented
        return (self.adc == other.adc
                and all(np.array_equal(getattr(self, n), getattr(other, n))
                        for n in ("b1_hz", "b1_phase_rad", "gx", "gy", "gz")))


@dataclass(frozen=True)
class FreeBlock:
    duration_us: int
    grad_segments: tuple = ()
    adc: Optional[Adc] = None

    def __post_init__(self):
        segs = tuple((int(s[0]), float(s[1]), float(s[2]), float(s[3]))
                     for s in self.grad_segments)
        object.__setattr__(self, "grad_segments", segs)

    def segments(self):
        """Gradient segments with the implicit zero-gradient case filled in."""
        if self.grad_segments:
            return self.grad_segments
        return ((self.duration_us, 0.0, 0.0, 0.0),)


@dataclass(frozen=True)
class IdealPulse:
    flip_rad: float
    phase_rad: float = 0.0
    adc = None


Block = Union[RFBlock, FreeBlock, IdealPulse]


def block_duration_us(block: Block, raster_us: int) -> int:
    if isinstance(block, RFBlock):
        return block.duration_us(raster_us)
    if isinstance(block, FreeBlock):
        return block.duration_us
    return 0


def _validate_block(block, i, raster_us):
    if isinstance(block, RFBlock):
        n = block.num_samples
        if n == 0:
            raise SequenceError("rf block has no samples", i, "b1_hz")
        for name in ("b1_phase_rad", "gx", "gy", "gz"):
            if getattr(block, name).size != n:
                raise SequenceError(
                    f"array length {getattr(block, name).size} != b1_hz length {n}", i, name)
        if not np.all(np.isfinite(block.b1_hz)):
            raise SequenceError("non-finite RF amplitude", i, "b1_hz")
        span = n * raster_us
    elif isinstance(block, FreeBlock):
        if block.duration_us < 0:
            raise SequenceError("negative duration", i, "duration_us")
        if block.grad_segments:
            total = sum(s[0] for s in block.grad_segments)
            if any(s[0] < 0 for s in block.grad_segments):
                raise SequenceError("negative segment duration", i, "grad_segments")
            if total != block.duration_us:
                raise SequenceError(
                    f"segment durations sum to {total} us, block lasts {block.duration_us} us",
                    i, "grad_segments")
        span = block.duration_us
    elif isinstance(block, IdealPulse):
        if not math.isfinite(block.flip_rad) or not math.isfinite(block.phase_rad):
            raise SequenceError("non-finite ideal pulse", i, "flip_rad")
        return
    else:
        raise SequenceError(f"unknown block type {type(block).__name__}", i, "type")
    adc = block.adc
    if adc is not None:
        if adc.num < 1 or adc.dwell_us < 1 or adc.delay_us < 0:
            raise SequenceError("adc needs num >= 1, dwell_us >= 1, delay_us >= 0", i, "adc")
        if adc.last_us > span:
            raise SequenceError(
                f"adc sample at {adc.last_us} us lies past block end {span} us", i, "adc")
        if isinstance(block, RFBlock) and (adc.delay_us % raster_us or adc.dwell_us % raster_us):
            raise SequenceError("adc timing in an rf block must be a raster multiple", i, "adc")


@dataclass(frozen=True)
class Sequence:
    blocks: tuple
    raster_us: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not isinstance(self.raster_us, int) or self.raster_us <= 0:
            raise SequenceError(f"raster_us must be a positive integer, got {self.raster_us!r}",
                                field="raster_us")
        if not self.blocks:
            raise SequenceError("sequence has no blocks", field="blocks")
        for i, b in enumerate(self.blocks):
            _validate_block(b, i, self.raster_us)

    @property
    def duration_us(self) -> int:
        return sum(block_duration_us(b, self.raster_us) for b in self.blocks)

    @property
    def name(self) -> str:
        return self.meta.get("name", "")

    def adc_event_sizes(self) -> list:
        return [b.adc.num for b in self.blocks if getattr(b, "adc", None) is not None]


# ---------------------------------------------------------------- JSON format

def _adc_to_doc(adc):
    if adc is None:
        return None
    return {"delay_us": adc.delay_us, "num": adc.num, "dwell_us": adc.dwell_us}


def to_document(seq: Sequence) -> dict:
    blocks = []
    for b in seq.blocks:
        if isinstance(b, RFBlock):
            blocks.append({
                "type": "rf",
                "b1_hz": b.b1_hz.tolist(),
                "b1_phase_rad": b.b1_phase_rad.tolist(),
                "g_T_per_m": {"x": b.gx.tolist(), "y": b.gy.tolist(), "z": b.gz.tolist()},
                "adc": _adc_to_doc(b.adc),
            })
        elif isinstance(b, FreeBlock):
            blocks.append({
                "type": "free",
                "duration_us": b.duration_us,
                "grad_segments": [list(s) for s in b.grad_segments],
                "adc": _adc_to_doc(b.adc),
            })
        else:
            blocks.append({"type": "ideal", "flip_rad": b.flip_rad, "phase_rad": b.phase_rad})
    return {"raster_us": seq.raster_us, "blocks": blocks, "meta": seq.meta}


def serialize_sequence(seq: Sequence) -> str:
    return json.dumps(to_document(seq), separators=(",", ":"))


def _int_field(doc, key, i):
    val = doc.get(key)
    if isinstance(val, bool) or not isinstance(val, int):
        raise SequenceError(f"expected integer, got {val!r}", i, key)
    return val


def _parse_adc(doc, i):
    if doc is None:
        return None
    if not isinstance(doc, dict):
        raise SequenceError("adc must be an object or null", i, "adc")
    return Adc(_int_field(doc, "delay_us", i), _int_field(doc, "num", i),
               _int_field(doc, "dwell_us", i))


def _float_array(val, i, name):
    try:
        arr = np.asarray(val, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise SequenceError(f"not a numeric array: {exc}", i, name) from exc
    if arr.ndim != 1:
        raise SequenceError("expected a flat array", i, name)
    return arr


def from_document(doc: dict) -> Sequence:
    if not isinstance(doc, dict):
        raise SequenceError("document must be a JSON object")
    raster = doc.get("raster_us", 1)
    if isinstance(raster, bool) or not isinstance(raster, int) or raster <= 0:
        raise SequenceError(f"raster_us must be a positive integer, got {raster!r}",
                            field="raster_us")
    raw_blocks = doc.get("blocks")
    if not isinstance(raw_blocks, list):
        raise SequenceError("'blocks' must be a list", field="blocks")
    blocks = []
    for i, bd in enumerate(raw_blocks):
        if not isinstance(bd, dict):
            raise SequenceError("block must be an object", i)
        kind = bd.get("type")
        if kind == "rf":
            b1 = _float_array(bd.get("b1_hz"), i, "b1_hz")
            ph = _float_array(bd.get("b1_phase_rad", np.zeros(b1.size)), i, "b1_phase_rad")
            g = bd.get("g_T_per_m") or {}
            if not isinstance(g, dict):
                raise SequenceError("g_T_per_m must be an object", i, "g_T_per_m")
            grads = {ax: _float_array(g.get(ax, np.zeros(b1.size)), i, f"g_T_per_m.{ax}")
                     for ax in "xyz"}
            for ax, arr in grads.items():
                if arr.size != b1.size:
                    raise SequenceError(f"array length {arr.size} != b1_hz length {b1.size}",
                                        i, f"g_T_per_m.{ax}")
            blocks.append(RFBlock(b1, ph, grads["x"], grads["y"], grads["z"],
                                  _parse_adc(bd.get("adc"), i)))
        elif kind == "free":
            segs = bd.get("grad_segments", [])
            if not isinstance(segs, list) or any(
                    not isinstance(s, (list, tuple)) or len(s) != 4 for s in segs):
                raise SequenceError("grad_segments must be [[dur_us, gx, gy, gz], ...]",
                                    i, "grad_segments")
            for s in segs:
                if isinstance(s[0], bool) or not isinstance(s[0], int):
                    raise SequenceError(f"segment duration must be integer us, got {s[0]!r}",
                                        i, "grad_segments")
            blocks.append(FreeBlock(_int_field(bd, "duration_us", i), segs,
                                    _parse_adc(bd.get("adc"), i)))
        elif kind == "ideal":
            try:
                blocks.append(IdealPulse(float(bd["flip_rad"]), float(bd.get("phase_rad", 0.0))))
            except (KeyError, TypeError, ValueError) as exc:
                raise SequenceError(f"bad ideal pulse: {exc}", i, "flip_rad") from exc
        else:
            raise SequenceError(f"unknown block type {kind!r}", i, "type")
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise SequenceError("meta must be an object", field="meta")
    return Sequence(tuple(blocks), raster, meta)


def parse_sequence(text: str) -> Sequence:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SequenceError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    return from_document(doc)


def load_sequence(path) -> Sequence:
    with open(path, encoding="utf-8") as fh:
        return parse_sequence(fh.read())


def save_sequence(path, seq: Sequence) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_sequence(seq))


def pulse_key(block: RFBlock, raster_us: int) -> str:
    """Content hash identifying identical RF blocks."""
    h = hashlib.sha1()
    h.update(str(raster_us).encode())
    for name in ("b1_hz", "b1_phase_rad", "gx", "gy", "gz"):
        h.update(np.ascontiguousarray(getattr(block, name)).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------- RF synthesis

def make_sinc_rf(duration_us: int, lobes: int = 3, flip: float = math.pi / 2,
                 phase: float = 0.0, raster_us: int = 1, shape: str = "sinc",
                 window: str = "hann") -> RFBlock:
    """Sinc (or rectangular) RF block calibrated by pulse area.

    ``lobes`` is the number of zero crossings on each side of the main lobe.
    The amplitude is scaled so that ``2*pi*sum(b1_hz)*dt == flip``.
    """
    if duration_us <= 0 or duration_us % raster_us:
        raise ValueError("duration must be a positive multiple of the raster")
    if lobes < 1:
        raise ValueError("lobes must be >= 1")
    n = duration_us // raster_us
    dt = raster_us * 1e-6
    T = n * dt
    t = (np.arange(n) + 0.5) * dt - T / 2
    if shape == "rect":
        env = np.ones(n)
    elif shape == "sinc":
        env = np.sinc(2.0 * lobes * t / T)
        if window == "hann":
            env = env * 0.5 * (1.0 + np.cos(2.0 * np.pi * t / T))
        elif window not in (None, "none"):
            raise ValueError(f"unknown window {window!r}")
    else:
        raise ValueError(f"unknown shape {shape!r}")
    area = env.sum() * dt
    b1 = env * (flip / (2.0 * np.pi * area)) if flip != 0 else np.zeros(n)
    return RFBlock(b1, np.full(n, float(phase)))


# ---------------------------------------------------------------- execution plan

@dataclass(frozen=True)
class PlanEntry:
    kind: str                  # 'rf' | 'free' | 'ideal'
    block: int
    start_us: int
    duration_us: int
    key: Optional[str] = None
    # free: (tau_us, moment_x, moment_y, moment_z [T s/m], sample id or -1)
    pieces: tuple = ()
    # rf: (steps completed, sample id)
    sample_steps: tuple = ()


@dataclass(frozen=True)
class Plan:
    entries: tuple
    sample_times_us: np.ndarray
    event_sizes: tuple
    duration_us: int

    @property
    def num_samples(self) -> int:
        return int(self.sample_times_us.size)


def _segment_moment(segs, a_us, b_us):
    """Gradient moment (T s/m) of piecewise-constant segments over [a, b] us."""
    mom = np.zeros(3)
    t0 = 0
    for dur, gx, gy, gz in segs:
        t1 = t0 + dur
        lo, hi = max(a_us, t0), min(b_us, t1)
        if hi > lo:
            mom += np.array([gx, gy, gz]) * ((hi - lo) * 1e-6)
        t0 = t1
    return mom


def segment(seq: Sequence) -> Plan:
    """Split the sequence into stepped, analytic and instantaneous entries.

    Free blocks are cut at every ADC sample time; RF blocks record after how
    many raster steps each of their samples is taken.
    """
    entries = []
    times = []
    t = 0
    sid = 0
    for i, b in enumerate(seq.blocks):
        dur = block_duration_us(b, seq.raster_us)
        if isinstance(b, IdealPulse):
            entries.append(PlanEntry("ideal", i, t, 0))
        elif isinstance(b, RFBlock):
            steps = ()
            if b.adc is not None:
                offs = b.adc.offsets_us()
                steps = tuple((int(o // seq.raster_us), sid + j) for j, o in enumerate(offs))
                times.extend((t + offs).tolist())
                sid += b.adc.num
            entries.append(PlanEntry("rf", i, t, dur, pulse_key(b, seq.raster_us),
                                     sample_steps=steps))
        else:
            segs = b.segments()
            cuts = []
            if b.adc is not None:
                cuts = b.adc.offsets_us().tolist()
            pieces = []
            prev = 0
            for j, c in enumerate(cuts):
                m = _segment_moment(segs, prev, c)
                pieces.append((c - prev, m[0], m[1], m[2], sid + j))
                prev = c
            if prev < dur or not pieces:
                m = _segment_moment(segs, prev, dur)
                pieces.append((dur - prev, m[0], m[1], m[2], -1))
            if cuts:
                times.extend([t + c for c in cuts])
                sid += len(cuts)
            entries.append(PlanEntry("free", i, t, dur, pieces=tuple(pieces)))
        t += dur
    return Plan(tuple(entries), np.asarray(times, dtype=np.float64),
                tuple(seq.adc_event_sizes()), t)


def dedup_blocks(seq: Sequence) -> dict:
    """Map each distinct RF waveform key to the indices of blocks using it."""
    out = {}
    for i, b in enumerate(seq.blocks):
        if isinstance(b, RFBlock):
            out.setdefault(pulse_key(b, seq.raster_us), []).append(i)
    return out


def dedup_counts(seq: Sequence):
    """``(num with-RF blocks, num unique, num repeated)``."""
    groups = dedup_blocks(seq)
    total = sum(len(v) for v in groups.values())
    return total, len(groups), total - len(groups)


def to_stepped(seq: Sequence) -> Sequence:
    """Replace every free block by an all-zero RF block on the raster.

    Gradients are sampled per raster step; ADC events are kept.
    """
    r = seq.raster_us
    blocks = []
    for i, b in enumerate(seq.blocks):
        if isinstance(b, FreeBlock):
            if b.duration_us % r:
                raise SequenceError("free block duration is not a raster multiple", i,
                                    "duration_us")
            n = b.duration_us // r
            if n == 0:
                if b.adc is not None:
                    raise SequenceError("zero-length block with adc cannot be stepped", i, "adc")
                continue
            g = np.zeros((n, 3))
            t0 = 0
            for dur, gx, gy, gz in b.segments():
                if dur % r:
                    raise SequenceError("segment duration is not a raster multiple", i,
                                        "grad_segments")
                g[t0 // r:(t0 + dur) // r] = (gx, gy, gz)
                t0 += dur
            adc = b.adc
            if adc is not None and (adc.delay_us % r or adc.dwell_us % r):
                raise SequenceError("adc timing is not a raster multiple", i, "adc")
            blocks.append(RFBlock(np.zeros(n), np.zeros(n), g[:, 0], g[:, 1], g[:, 2], adc))
        else:
            blocks.append(b)
    meta = dict(seq.meta)
    meta["name"] = f"{seq.meta.get('name', 'seq')}-update"
    return Sequence(tuple(blocks), r, meta)


# ---------------------------------------------------------------- generators

def fid(ideal: bool = False, pulse_us: int = 500, free_us: int = 9500, dwell_us: int = 50,
        flip: float = math.pi / 2, lobes: int = 3) -> Sequence:
    """Excitation followed by a sampled free interval.

    With ``ideal=True`` the excitation is instantaneous and the first sample
    is taken right after it.
    """
    if ideal:
        exc = IdealPulse(flip, 0.0)
        adc = Adc(0, free_us // dwell_us + 1, dwell_us)
        name = "fid-ideal"
    else:
        exc = make_sinc_rf(pulse_us, lobes, flip, 0.0)
        adc = Adc(dwell_us, free_us // dwell_us, dwell_us)
        name = "fid"
    return Sequence((exc, FreeBlock(free_us, (), adc)), 1, {"name": name})


def cpmg_demo(ideal: bool = False, dwell_us: int = 50, lobes: int = 3) -> Sequence:
    """15 ms single-echo CPMG: 90x, free, 180y, free.

    Sinc version: 2 ms pulses with 3 ms and 8 ms free intervals. Ideal
    version: instantaneous pulses at 0 and 5 ms, echo at 10 ms.
    """
    if ideal:
        blocks = (IdealPulse(math.pi / 2, 0.0),
                  FreeBlock(5000, (), Adc(dwell_us, 5000 // dwell_us, dwell_us)),
                  IdealPulse(math.pi, math.pi / 2),
                  FreeBlock(10000, (), Adc(dwell_us, 10000 // dwell_us, dwell_us)))
        return Sequence(blocks, 1, {"name": "cpmg-ideal", "te_s": 0.010})
    blocks = (make_sinc_rf(2000, lobes, math.pi / 2, 0.0),
              FreeBlock(3000, (), Adc(dwell_us, 3000 // dwell_us, dwell_us)),
              make_sinc_rf(2000, lobes, math.pi, math.pi / 2),
              FreeBlock(8000, (), Adc(dwell_us, 8000 // dwell_us, dwell_us)))
    return Sequence(blocks, 1, {"name": "cpmg-demo", "te_s": 0.010})


def _us(seconds: float) -> int:
    return int(round(seconds * 1e6))


def spgr(n_pe: int, tr: float, te: float, n_ro: Optional[int] = None, fov: float = 0.24,
         flip_deg: float = 15.0, pulse_us: int = 3000, lobes: int = 3, dwell_us: int = 25,
         spoil_moment: float = 0.0, gamma_bar: float = GAMMA_BAR) -> Sequence:
    """Cartesian 2D gradient echo with non-selective sinc excitation.

    ``te`` is measured from the pulse center to the k-space center sample.
    Phase-encode moments are rewound at the end of each TR; ``spoil_moment``
    (T s/m) adds a z spoiler there.
    """
    n_ro = n_pe if n_ro is None else n_ro
    tr_us, te_us = _us(tr), _us(te)
    dk = 1.0 / fov
    g_ro = dk / (gamma_bar * dwell_us * 1e-6)
    ro_start = pulse_us // 2 + te_us - (n_ro // 2) * dwell_us - pulse_us
    t_pre = ro_start
    if t_pre < 10:
        raise ValueError("te too short for the prephasing gradients")
    t_rw = t_pre
    rest = tr_us - pulse_us - t_pre - n_ro * dwell_us - t_rw
    if rest < 0:
        raise ValueError("tr too short")
    rf = make_sinc_rf(pulse_us, lobes, math.radians(flip_deg), 0.0)
    mx_pre = -(n_ro // 2) * dk / gamma_bar
    mx_end = mx_pre + n_ro * dk / gamma_bar
    blocks = []
    for line in range(n_pe):
        my = (line - n_pe // 2) * dk / gamma_bar
        segs = [(t_pre, mx_pre / (t_pre * 1e-6), my / (t_pre * 1e-6), 0.0),
                (n_ro * dwell_us, g_ro, 0.0, 0.0),
                (t_rw, -mx_end / (t_rw * 1e-6), -my / (t_rw * 1e-6), spoil_moment / (t_rw * 1e-6))]
        if rest:
            segs.append((rest, 0.0, 0.0, 0.0))
        blocks.append(rf)
        blocks.append(FreeBlock(tr_us - pulse_us, tuple(segs), Adc(t_pre, n_ro, dwell_us)))
    meta = {"name": "spgr", "tr_s": tr, "te_s": te, "fov_m": [fov, fov],
            "matrix": [n_pe, n_ro],
            "kspace": {"lines": list(range(n_pe)), "reversed": [False] * n_pe}}
    return Sequence(tuple(blocks), 1, meta)


def rare(etl: int, esp: float, n_pe: int, tr: float, n_ro: Optional[int] = None,
         fov: float = 0.24, excite_us: int = 2500, refocus_us: int = 2000, lobes: int = 3,
         dwell_us: int = 50, gamma_bar: float = GAMMA_BAR) -> Sequence:
    """Cartesian fast spin echo (CPMG phases) with segmented line ordering.

    Echo ``j`` of shot ``s`` acquires line ``j * n_shots + s``. Each echo
    interval is gradient-balanced, so every echo refocuses at its readout
    center. ``etl=1`` gives a conventional spin echo with ``te = esp``.
    """
    n_ro = n_pe if n_ro is None else n_ro
    if n_pe % etl:
        raise ValueError("n_pe must be a multiple of etl")
    n_shots = n_pe // etl
    esp_us, tr_us = _us(esp), _us(tr)
    gap1 = esp_us // 2 - excite_us // 2 - refocus_us // 2
    L = esp_us - refocus_us
    t_pre = L // 2 - (n_ro // 2) * dwell_us
    t_rw = L - t_pre - n_ro * dwell_us
    if gap1 < 0 or t_pre < 10 or t_rw < 10:
        raise ValueError("echo spacing too short for the pulses and readout")
    shot_us = excite_us + gap1 + etl * (refocus_us + L)
    fill = tr_us - shot_us
    if fill < 0:
        raise ValueError("tr too short")
    dk = 1.0 / fov
    g_ro = dk / (gamma_bar * dwell_us * 1e-6)
    mx_pre = -(n_ro // 2) * dk / gamma_bar
    mx_end = mx_pre + n_ro * dk / gamma_bar
    exc = make_sinc_rf(excite_us, lobes, math.pi / 2, 0.0)
    ref = make_sinc_rf(refocus_us, lobes, math.pi, math.pi / 2)
    blocks, lines = [], []
    for s in range(n_shots):
        blocks.append(exc)
        blocks.append(FreeBlock(gap1))
        for j in range(etl):
            line = j * n_shots + s
            my = (line - n_pe // 2) * dk / gamma_bar
            segs = ((t_pre, mx_pre / (t_pre * 1e-6), my / (t_pre * 1e-6), 0.0),
                    (n_ro * dwell_us, g_ro, 0.0, 0.0),
                    (t_rw, -mx_end / (t_rw * 1e-6), -my / (t_rw * 1e-6), 0.0))
            blocks.append(ref)
            blocks.append(FreeBlock(L, segs, Adc(t_pre, n_ro, dwell_us)))
            lines.append(line)
        if fill:
            blocks.append(FreeBlock(fill))
    meta = {"name": "rare" if etl > 1 else "se", "tr_s": tr, "esp_s": esp,
            "te_s": esp * (lines.index(n_pe // 2) % etl + 1),
            "fov_m": [fov, fov], "matrix": [n_pe, n_ro],
            "kspace": {"lines": lines, "reversed": [False] * n_pe}}
    return Sequence(tuple(blocks), 1, meta)


def epi(n: int, fov: float = 0.22, pulse_us: int = 3000, lobes: int = 3, dwell_us: int = 4,
        blip_us: int = 100, flip_deg: float = 90.0, gamma_bar: float = GAMMA_BAR) -> Sequence:
    """Single-shot Cartesian EPI; odd lines are read with negative polarity."""
    dk = 1.0 / fov
    g_ro = dk / (gamma_bar * dwell_us * 1e-6)
    blocks = [make_sinc_rf(pulse_us, lobes, math.radians(flip_deg), 0.0)]
    kx, ky = 0.0, 0.0
    for line in range(n):
        rev = bool(line % 2)
        start_x = ((n // 2 - 1) if rev else -(n // 2)) * dk
        target_y = (line - n // 2) * dk
        bx = (start_x - kx) / gamma_bar / (blip_us * 1e-6)
        by = (target_y - ky) / gamma_bar / (blip_us * 1e-6)
        sign = -1.0 if rev else 1.0
        segs = ((blip_us, bx, by, 0.0), (n * dwell_us, sign * g_ro, 0.0, 0.0))
        blocks.append(FreeBlock(blip_us + n * dwell_us, segs, Adc(blip_us, n, dwell_us)))
        kx = start_x + sign * n * dk
        ky = target_y
    meta = {"name": "epi", "fov_m": [fov, fov], "matrix": [n, n],
            "kspace": {"lines": list(range(n)), "reversed": [bool(i % 2) for i in range(n)]}}
    return Sequence(tuple(blocks), 1, meta)


GENERATORS = {
    "fid": fid,
    "cpmg-demo": cpmg_demo,
    "spgr": spgr,
    "rare": rare,
    "epi": epi,
}


def builtin_sequences() -> dict:
    """Default instances of every generator."""
    return {
        "fid": fid(),
        "fid-ideal": fid(ideal=True),
        "cpmg-demo": cpmg_demo(),
        "cpmg-ideal": cpmg_demo(ideal=True),
        "spgr": spgr(8, 0.012, 0.005),
        "rare": rare(4, 0.012, 16, 0.5),
        "epi": epi(16),
    }
