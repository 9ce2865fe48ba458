"""Simulation driver.

Isochromats are cut into fixed-size chunks. The chunk size is an option,
never derived from the worker count, and chunk sums are reduced in chunk
order by :func:`sampling.accumulate`. Outputs are therefore bitwise stable
for any number of workers and any number of partial phantoms.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import SimulationError
from .kernel import GAMMA_BAR, rot3
from .model import Isochromat, IsochromatSet, Phantom, TissueParams
from .sampling import EPS, AdcStream, CoilSensitivity, accumulate, sample_continuous
from .seqio import FreeBlock, IdealPulse, RFBlock, Sequence, segment, to_stepped
from .transitions import PreparedRF, build_combined_batch, prepare_rf

MODES = ("continuous", "off", "discrete")
PHASES = ("stepping", "analytic", "combining", "sampling")


@dataclass(frozen=True)
class SimOptions:
    """Run configuration.

    ``combined`` picks which ADC-free RF blocks go through a cached combined
    transition: ``"on"`` all of them, ``"off"`` none, ``"auto"`` those whose
    waveform occurs at least ``auto_min_repeats`` times.
    """

    mode: str = "continuous"
    k: int = 1000
    seed: int = 0
    denominator: str = "squared"
    workers: int = 1
    partials: int = 1
    combined: str = "auto"
    gamma_bar: float = GAMMA_BAR
    coils: tuple = ()
    chunk_size: int = 8192
    check_every: int = 10_000
    auto_min_repeats: int = 3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.denominator not in ("squared", "magnitude"):
            raise ValueError(f"unknown denominator mode {self.denominator!r}")
        if self.combined not in ("on", "off", "auto"):
            raise ValueError(f"combined must be on, off or auto, got {self.combined!r}")
        if self.mode == "discrete" and self.k < 1:
            raise ValueError("k must be >= 1 in discrete mode")
        for name in ("workers", "partials", "chunk_size", "check_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def deriv(self) -> bool:
        return self.mode == "continuous"


@dataclass
class TimingReport:
    """Per-phase seconds summed over chunks, plus the wall time of the run."""

    phases: dict = field(default_factory=lambda: dict.fromkeys(PHASES, 0.0))
    isochromats: int = 0
    mode: str = "continuous"
    wall: float = 0.0

    @property
    def total(self) -> float:
        return sum(self.phases.values())

    def add(self, other: dict) -> None:
        for k, v in other.items():
            self.phases[k] = self.phases.get(k, 0.0) + v

    def rows(self):
        out = [(p, self.phases.get(p, 0.0), self.isochromats, self.mode) for p in PHASES]
        out.append(("wall", self.wall, self.isochromats, self.mode))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("phase", "seconds", "isochromats", "mode"))
        for r in self.rows():
            w.writerow((r[0], f"{r[1]:.6f}", r[2], r[3]))
        return buf.getvalue()


def as_isochromat_set(obj) -> IsochromatSet:
    if isinstance(obj, IsochromatSet):
        return obj
    if isinstance(obj, Phantom):
        return IsochromatSet.from_phantom(obj)
    if isinstance(obj, Isochromat):
        return IsochromatSet.from_isochromats([obj])
    obj = list(obj)
    return IsochromatSet.from_isochromats(obj)


def ideal_rotation(pulse: IdealPulse) -> np.ndarray:
    axis = (math.cos(pulse.phase_rad), math.sin(pulse.phase_rad), 0.0)
    return rot3(axis, -pulse.flip_rad)


def _combined_keys(seq: Sequence, plan, policy: str, min_repeats: int) -> set:
    if policy == "off":
        return set()
    counts = {}
    for e in plan.entries:
        if e.kind == "rf" and seq.blocks[e.block].adc is None:
            counts[e.key] = counts.get(e.key, 0) + 1
    if policy == "on":
        return set(counts)
    return {k for k, c in counts.items() if c >= min_repeats}


@dataclass
class _Context:
    seq: Sequence
    plan: object
    prepared: dict
    pieces: dict
    rotations: dict
    combined: set
    opts: SimOptions
    deriv: bool
    ncoil: int


def _prepare(seq: Sequence, opts: SimOptions, deriv: bool) -> _Context:
    plan = segment(seq)
    prepared, pieces, rotations = {}, {}, {}
    for e in plan.entries:
        b = seq.blocks[e.block]
        if e.kind == "rf" and e.key not in prepared:
            prepared[e.key] = prepare_rf(b, seq.raster_us)
        elif e.kind == "free":
            p = np.array(e.pieces, dtype=np.float64).reshape(-1, 5)
            pieces[e.block] = (np.ascontiguousarray(p[:, 0] * 1e-6),
                               np.ascontiguousarray(p[:, 1:4]),
                               np.ascontiguousarray(p[:, 4].astype(np.int64)))
        elif e.kind == "ideal":
            rotations[e.block] = ideal_rotation(b)
    coils = opts.coils or (CoilSensitivity(),)
    return _Context(seq, plan, prepared, pieces, rotations,
                    _combined_keys(seq, plan, opts.combined, opts.auto_min_repeats),
                    opts, deriv, len(coils))


def _check_finite(m, dm, deriv, base, t_us):
    bad = ~np.isfinite(m).all(axis=1)
    if deriv:
        bad |= ~np.isfinite(dm).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise SimulationError(f"non-finite state for isochromat {base + i} at t = {t_us} us")


def _run_chunk(ctx: _Context, isos: IsochromatSet, base: int):
    """Simulate one chunk; returns ``(samples (ncoil, nsamp), phase seconds)``."""
    opts, deriv = ctx.opts, ctx.deriv
    n = len(isos)
    nsamp = ctx.plan.num_samples
    tm = dict.fromkeys(PHASES, 0.0)
    out_re = np.zeros((ctx.ncoil, nsamp))
    out_im = np.zeros((ctx.ncoil, nsamp))
    if n == 0:
        return out_re + 1j * out_im, tm
    coils = opts.coils or (CoilSensitivity(),)
    w = np.array([c.weights(isos.positions) for c in coils]).reshape(len(coils), n)
    w_re, w_im = np.ascontiguousarray(w.real), np.ascontiguousarray(w.imag)
    m = np.zeros((n, 3))
    m[:, 2] = 1.0
    dm = np.zeros((n, 3))
    off = isos.off_resonance()
    dt = ctx.seq.raster_us * 1e-6
    e1 = np.exp(-dt / isos.t1)
    e2 = np.exp(-dt / isos.t2)
    gam = 2.0 * np.pi * opts.gamma_bar
    by_mag = opts.denominator == "magnitude"
    cache = {}
    for e in ctx.plan.entries:
        if e.kind == "ideal":
            t0 = time.perf_counter()
            _kernels.rotate_all(m, dm, ctx.rotations[e.block], deriv)
            tm["stepping"] += time.perf_counter() - t0
        elif e.kind == "free":
            taus, moments, sids = ctx.pieces[e.block]
            t0 = time.perf_counter()
            _kernels.free_pieces(m, dm, isos.positions, off, isos.t1, isos.t2, taus, moments,
                                 sids, gam, deriv, isos.m0, isos.t2prime, w_re, w_im,
                                 out_re, out_im, by_mag, EPS)
            tm["analytic"] += time.perf_counter() - t0
        elif e.key in ctx.combined:
            t0 = time.perf_counter()
            C = cache.get(e.key)
            if C is None:
                C = build_combined_batch(ctx.prepared[e.key], isos, deriv, opts.gamma_bar)
                cache[e.key] = C
            _kernels.apply_combined(C, m, dm, deriv)
            tm["combining"] += time.perf_counter() - t0
        else:
            prep: PreparedRF = ctx.prepared[e.key]
            marks = list(e.sample_steps) + [(prep.num_steps, -1)]
            s0 = 0
            for steps, sid in marks:
                while s0 < steps:
                    s1 = min(steps, s0 + opts.check_every)
                    t0 = time.perf_counter()
                    _kernels.rf_steps(m, dm, prep.rxy, prep.grad, isos.positions, off, e1, e2,
                                      dt, gam, deriv, s0, s1)
                    tm["stepping"] += time.perf_counter() - t0
                    s0 = s1
                    if s1 < prep.num_steps:
                        _check_finite(m, dm, deriv, base, e.start_us + s1 * ctx.seq.raster_us)
                if sid >= 0:
                    t0 = time.perf_counter()
                    _kernels.sample_state(m, dm, isos.m0, isos.t2prime, w_re, w_im, out_re,
                                          out_im, sid, deriv, by_mag, EPS)
                    tm["sampling"] += time.perf_counter() - t0
        _check_finite(m, dm, deriv, base, e.start_us + e.duration_us)
    return out_re + 1j * out_im, tm


def _chunks(isos: IsochromatSet, opts: SimOptions):
    """Fixed ``(start, stop)`` source ranges; discrete chunks hold ``chunk_size // k`` sources."""
    n = len(isos)
    size = opts.chunk_size
    if opts.mode == "discrete":
        size = max(1, opts.chunk_size // opts.k)
    return [(a, min(n, a + size)) for a in range(0, n, size)]


def run(phantom, sequence: Sequence, options: Optional[SimOptions] = None):
    """Simulate ``sequence`` on ``phantom``.

    ``phantom`` may be a :class:`Phantom`, an :class:`IsochromatSet` or an
    iterable of :class:`Isochromat`. Returns ``(AdcStream, TimingReport)``.
    In discrete mode every isochromat is replaced by ``k`` copies with
    Lorentzian offsets drawn from a stream keyed by ``(seed, index)``.
    """
    opts = options or SimOptions()
    isos = as_isochromat_set(phantom)
    ctx = _prepare(sequence, opts, opts.deriv)
    ranges = _chunks(isos, opts)
    report = TimingReport(isochromats=len(isos) * (opts.k if opts.mode == "discrete" else 1),
                          mode=opts.mode)

    def work(j):
        a, b = ranges[j]
        sub = isos.subset(slice(a, b))
        if opts.mode == "discrete":
            sub = sub.expand_discrete(opts.k, opts.seed, base_index=a)
            return _run_chunk(ctx, sub, a * opts.k)
        return _run_chunk(ctx, sub, a)

    t_wall = time.perf_counter()
    results = {}
    # partial phantoms: contiguous groups of chunks, run one after another
    groups = np.array_split(np.arange(len(ranges)), min(opts.partials, max(1, len(ranges))))
    with ThreadPoolExecutor(max_workers=opts.workers) as pool:
        for g in groups:
            for j, (samples, tm) in zip(g, pool.map(work, g.tolist())):
                results[int(j)] = samples
                report.add(tm)
    report.wall = time.perf_counter() - t_wall
    meta = dict(sequence.meta)
    meta["mode"] = opts.mode
    stream = accumulate(results, len(ranges), ctx.plan.sample_times_us,
                        ctx.plan.event_sizes, meta, num_coils=ctx.ncoil)
    return stream, report


# ---------------------------------------------------------------- CPMG demo series

CPMG_COLUMNS = ("t", "b1x", "b1y", "mx", "my", "mz", "dmx", "dmy", "dmz",
                "sample_T2", "sample_T2star")

DEMO_TISSUE = TissueParams(m0=1.0, t1=0.1, t2=0.02, t2prime=0.005)


@dataclass
class DemoSeries:
    """Dense per-raster series; ``data[:, j]`` is column ``columns[j]``."""

    data: np.ndarray
    columns: tuple = CPMG_COLUMNS
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        np.savetxt(buf, self.data, delimiter=",", fmt="%.12g")
        return buf.getvalue()


def run_cpmg_demo(tissue: TissueParams = DEMO_TISSUE, ideal: bool = False,
                  sequence: Optional[Sequence] = None, denominator: str = "squared",
                  gamma_bar: float = GAMMA_BAR) -> DemoSeries:
    """Dense time series of one isochromat at the origin through a CPMG sequence.

    Row ``i`` holds the state after ``i + 1`` raster steps (time in seconds).
    RF blocks are stepped; free blocks use the closed form evaluated at
    every raster time. Ideal pulses act between rows.
    """
    from .seqio import cpmg_demo
    seq = sequence or cpmg_demo(ideal=ideal)
    iso = IsochromatSet.single(tissue)
    r = seq.raster_us
    dt = r * 1e-6
    m = np.array([[0.0, 0.0, 1.0]])
    dm = np.zeros((1, 3))
    off = iso.off_resonance()
    e1 = np.exp(-dt / iso.t1)
    e2 = np.exp(-dt / iso.t2)
    gam = 2.0 * np.pi * gamma_bar
    rows = []
    t_idx = 0
    for b in seq.blocks:
        if isinstance(b, IdealPulse):
            _kernels.rotate_all(m, dm, ideal_rotation(b), True)
        elif isinstance(b, RFBlock):
            prep = prepare_rf(b, r)
            for s in range(prep.num_steps):
                _kernels.rf_steps(m, dm, prep.rxy, prep.grad, iso.positions, off, e1, e2, dt,
                                  gam, True, s, s + 1)
                t_idx += 1
                rows.append(np.concatenate(([t_idx * dt, b.b1_hz[s] * math.cos(b.b1_phase_rad[s]),
                                             b.b1_hz[s] * math.sin(b.b1_phase_rad[s])],
                                            m[0], dm[0])))
        else:
            seg = _free_series(b, r, m[0], dm[0], iso, gam)
            n = seg.shape[0]
            t = (t_idx + 1 + np.arange(n)) * dt
            rows.extend(np.column_stack([t, np.zeros(n), np.zeros(n), seg]))
            t_idx += n
            if n:
                m[0], dm[0] = seg[-1, :3], seg[-1, 3:]
    data = np.array(rows).reshape(-1, 9)
    state = np.column_stack([data[:, 3:6], np.ones(len(data)), data[:, 6:9]])
    s_t2 = np.abs(tissue.m0 * (data[:, 3] + 1j * data[:, 4]))
    s_t2s = np.abs(sample_continuous(state, tissue.m0, tissue.t2prime, 1.0, denominator))
    meta = {"sequence": seq.name, "te_s": seq.meta.get("te_s")}
    return DemoSeries(np.column_stack([data, s_t2, s_t2s]), CPMG_COLUMNS, meta)


def _free_series(block: FreeBlock, raster_us: int, m, dm, iso: IsochromatSet, gam: float):
    """Closed-form state at every raster time of a free block, shape ``(n, 6)``."""
    if block.duration_us % raster_us:
        raise ValueError("free block duration is not a raster multiple")
    n = block.duration_us // raster_us
    g = np.zeros((n, 3))
    t0 = 0
    for dur, gx, gy, gz in block.segments():
        g[t0 // raster_us:(t0 + dur) // raster_us] = (gx, gy, gz)
        t0 += dur
    tau = np.arange(1, n + 1) * raster_us * 1e-6
    moment = np.cumsum(g, axis=0) * (raster_us * 1e-6)
    phi = gam * (moment @ iso.positions[0]) + iso.off_resonance()[0] * tau
    rot = np.exp(-1j * phi)
    E2 = np.exp(-tau / iso.t2[0])
    E1 = np.exp(-tau / iso.t1[0])
    mxy = m[0] + 1j * m[1]
    dmxy = dm[0] + 1j * dm[1]
    nm = mxy * E2 * rot
    nd = E2 * (dmxy - 1j * tau * mxy) * rot
    return np.column_stack([nm.real, nm.imag, 1.0 + (m[2] - 1.0) * E1,
                            nd.real, nd.imag, dm[2] * E1])


# ---------------------------------------------------------------- benchmark

# published reference timings (seconds), for side-by-side display only
REFERENCE_RATIOS = {
    "t2prime_on_vs_off": 1609.19 / 750.11,
    "t2prime_on_vs_off_combined": 93.37 / 45.51,
    "combined_speedup_off": 750.11 / 45.51,
    "combined_speedup_continuous": 1609.19 / 93.37,
    "analytic_vs_update_off": 18.36 / 0.97,
    "analytic_vs_update_continuous": 39.93 / 2.14,
    "analytic_vs_update": 19.0,
}


@dataclass
class BenchTable:
    rows: list       # (label, mode, combined, seconds, TimingReport)
    ratios: dict
    streams: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("label", "mode", "combined", "seconds", "isochromats"))
        for label, mode, comb, sec, rep in self.rows:
            w.writerow((label, mode, comb, f"{sec:.6f}", rep.isochromats))
        w.writerow(())
        w.writerow(("ratio", "measured", "reference"))
        for k, v in self.ratios.items():
            w.writerow((k, f"{v:.4g}", _ref_str(REFERENCE_RATIOS.get(k))))
        return buf.getvalue()


def _ref_str(v):
    if v is None:
        return ""
    return f"{v:.4g}"


def benchmark(phantom, sequence: Sequence, options: Optional[SimOptions] = None,
              include_update: bool = True, repeats: int = 1) -> BenchTable:
    """Time {T2' off, on} x {combined off, on}, plus the stepped variant.

    The stepped variant runs :func:`seqio.to_stepped` of ``sequence`` (free
    blocks as zero-amplitude RF) with combined transitions off. Each
    configuration keeps its best wall time over ``repeats`` runs, after an
    untimed single-isochromat warm-up.
    """
    base = options or SimOptions()
    isos = as_isochromat_set(phantom)
    warm = isos.subset(slice(0, 1))
    rows, streams = [], {}

    def timed(label, seq, mode, comb):
        from dataclasses import replace
        opts = replace(base, mode=mode, combined=comb)
        run(warm, seq, opts)    # compile or load cached kernels outside the timing
        best = None
        for _ in range(repeats):
            stream, rep = run(isos, seq, opts)
            if best is None or rep.wall < best[1].wall:
                best = (stream, rep)
        rows.append((label, mode, comb, best[1].wall, best[1]))
        streams[label] = best[0]
        return best[1].wall

    t = {}
    for mode in ("off", "continuous"):
        for comb in ("off", "on"):
            t[(mode, comb)] = timed(f"{mode}/combined-{comb}", sequence, mode, comb)
    ratios = {
        "t2prime_on_vs_off": t[("continuous", "off")] / t[("off", "off")],
        "t2prime_on_vs_off_combined": t[("continuous", "on")] / t[("off", "on")],
        "combined_speedup_off": t[("off", "off")] / t[("off", "on")],
        "combined_speedup_continuous": t[("continuous", "off")] / t[("continuous", "on")],
    }
    if include_update:
        stepped = to_stepped(sequence)
        for mode in ("off", "continuous"):
            tu = timed(f"{mode}/update", stepped, mode, "off")
            ratios[f"analytic_vs_update_{mode}"] = tu / t[(mode, "off")]
        ratios["analytic_vs_update"] = ratios["analytic_vs_update_continuous"]
    return BenchTable(rows, ratios, streams)
