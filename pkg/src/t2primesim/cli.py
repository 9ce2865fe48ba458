"""Command-line entry point.

Exit codes: 0 success, 2 usage, 3 input integrity, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import engine, recon, seqio
from .errors import IntegrityError, LayoutError, SequenceError, SimulationError
from .model import (CIRCLES_ROWS, IsochromatSet, TissueParams, circles_layout, load_phantom,
                    make_circles_phantom, save_phantom)

EXIT_OK, EXIT_USAGE, EXIT_INTEGRITY, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(ValueError):
    pass


def _ints(text, n, name):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"{name}: expected {n} comma-separated integers, got {text!r}")
    if len(vals) != n or min(vals) < 1:
        raise UsageError(f"{name}: expected {n} positive integers, got {text!r}")
    return vals


def _floats(text, n, name):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"{name}: expected {n} comma-separated numbers, got {text!r}")
    if len(vals) != n or not all(v > 0 for v in vals):
        raise UsageError(f"{name}: expected {n} positive numbers, got {text!r}")
    return vals


def read_rows_file(path):
    """Rows of ``t1,t2,t2prime_outer,t2prime_inner`` (seconds); ``#`` starts a comment."""
    rows = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                vals = [float(v) for v in line.replace(",", " ").split()]
            except ValueError:
                raise IntegrityError(f"{path}:{ln}: non-numeric value")
            if len(vals) != 4:
                raise IntegrityError(f"{path}:{ln}: expected 4 values, got {len(vals)}")
            rows.append(tuple(vals))
    return rows


def _load_seq(spec):
    if os.path.isfile(spec):
        return seqio.load_sequence(spec)
    builtins = seqio.builtin_sequences()
    if spec in builtins:
        return builtins[spec]
    raise IntegrityError(f"no sequence file or built-in sequence named {spec!r}")


def _options(args) -> engine.SimOptions:
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    if args.workers < 1 or args.partials < 1:
        raise UsageError("--workers and --partials must be >= 1")
    return engine.SimOptions(mode=args.t2prime, k=args.k, seed=args.seed,
                             denominator=args.denominator, workers=args.workers,
                             partials=args.partials, combined=args.combined)


def _targets(args):
    if args.phantom and args.isochromat:
        raise UsageError("--phantom and --isochromat are mutually exclusive")
    if args.phantom:
        return load_phantom(args.phantom)
    if args.isochromat:
        t1, t2, tp = _floats(args.isochromat, 3, "--isochromat")
        return IsochromatSet.single(TissueParams(1.0, t1, t2, tp))
    raise UsageError("one of --phantom or --isochromat is required")


def _parse_value(text):
    try:
        return json.loads(text)
    except ValueError:
        return text


# ---------------------------------------------------------------- commands

def cmd_phantom(args):
    if args.kind != "circles":
        raise UsageError(f"unknown phantom kind {args.kind!r}")
    dims = _ints(args.dims, 3, "--dims")
    spacing = tuple(v * 1e-3 for v in _floats(args.spacing_mm, 3, "--spacing-mm"))
    sub = _ints(args.subvoxels, 3, "--subvoxels")
    rows = read_rows_file(args.rows_file) if args.rows_file else CIRCLES_ROWS
    if not 1 <= len(rows) <= 9:
        raise IntegrityError(f"rows file must hold 1..9 rows, got {len(rows)}")
    ph = make_circles_phantom(dims, spacing, rows, subvoxel_factors=sub)
    save_phantom(args.out, ph)
    print(f"wrote {args.out}: {dims[0]}x{dims[1]}x{dims[2]}, "
          f"{int(np.count_nonzero(ph.maps['m0']))} voxels")


def cmd_sequence(args):
    params = {}
    for item in args.set or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        params[k.replace("-", "_")] = _parse_value(v)
    if args.name in seqio.GENERATORS:
        try:
            seq = seqio.GENERATORS[args.name](**params)
        except TypeError as exc:
            raise UsageError(f"bad parameters for {args.name}: {exc}")
    elif args.name in seqio.builtin_sequences() and not params:
        seq = seqio.builtin_sequences()[args.name]
    else:
        raise UsageError(f"unknown sequence {args.name!r}; choose from "
                         f"{sorted(set(seqio.GENERATORS) | set(seqio.builtin_sequences()))}")
    seqio.save_sequence(args.out, seq)
    total, unique, rep = seqio.dedup_counts(seq)
    print(f"wrote {args.out}: {len(seq.blocks)} blocks, {seq.duration_us} us, "
          f"{total} rf blocks ({unique} unique)")


def cmd_simulate(args):
    opts = _options(args)
    seq = _load_seq(args.seq)
    target = _targets(args)
    stream, report = engine.run(target, seq, opts)
    stream.save(args.out)
    if args.timing:
        with open(args.timing, "w") as fh:
            fh.write(report.to_csv())
    print(f"wrote {args.out}: {stream.num_samples} samples, {report.isochromats} isochromats, "
          f"{report.wall:.3f} s")


def cmd_demo_cpmg(args):
    tissue = TissueParams(1.0, args.t1, args.t2, args.t2prime_s)
    series = engine.run_cpmg_demo(tissue, ideal=args.ideal, denominator=args.denominator)
    with open(args.out, "w") as fh:
        fh.write(series.to_csv())
    print(f"wrote {args.out}: {series.data.shape[0]} rows")


def cmd_bench(args):
    seq = _load_seq(args.seq)
    if args.phantom:
        target = load_phantom(args.phantom)
    else:
        rng = np.random.default_rng(args.seed)
        n = args.isochromats
        target = IsochromatSet(rng.uniform(-0.1, 0.1, (n, 3)), np.ones(n), np.ones(n),
                               np.full(n, 0.08), np.full(n, 0.04), rng.normal(0, 5, n),
                               np.zeros(n))
    base = engine.SimOptions(workers=args.workers, partials=args.partials,
                             denominator=args.denominator)
    table = engine.benchmark(target, seq, base, include_update=not args.no_update,
                             repeats=args.repeats)
    text = table.to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_recon(args):
    from .sampling import AdcStream
    stream = AdcStream.load(args.stream)
    grid = recon.grid_cartesian(stream)
    img = recon.ifft2_magnitude(grid)
    side = recon.save_image(args.out, img, {"sequence": stream.meta.get("name", "")})
    print(f"wrote {args.out}.pgm, {args.out}.f32, {args.out}.json: {side['dims']}")
    if args.phantom:
        ph = load_phantom(args.phantom)
        lay = circles_layout(ph.dims, ph.spacing)
        if not 1 <= args.pair <= len(lay.pair_centers):
            raise UsageError(f"--pair must be 1..{len(lay.pair_centers)}")
        inner, outer = lay.masks(ph.axis_coords(0), ph.axis_coords(1),
                                 erode=args.erode_px * max(ph.spacing[:2]))
        if img.shape != (ph.dims[1], ph.dims[0]):
            raise IntegrityError(f"image {img.shape} does not match phantom {ph.dims[:2]}")
        ratio = recon.region_ratio(img.T, inner[args.pair - 1], outer[args.pair - 1])
        print(f"pair {args.pair} inner/outer mean ratio: {ratio:.6f}")


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="t2primesim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def sim_flags(sp):
        sp.add_argument("--t2prime", choices=engine.MODES, default="continuous")
        sp.add_argument("--k", type=int, default=1000, help="copies per isochromat (discrete)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--partials", type=int, default=1)
        sp.add_argument("--combined", choices=("on", "off", "auto"), default="auto")
        sp.add_argument("--denominator", choices=("squared", "magnitude"), default="squared")

    sp = sub.add_parser("phantom", help="generate a phantom file")
    sp.add_argument("kind", choices=("circles",))
    sp.add_argument("--dims", default="64,64,4")
    sp.add_argument("--spacing-mm", default="3.75,3.75,3")
    sp.add_argument("--subvoxels", default="1,1,1")
    sp.add_argument("--rows-file")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_phantom)

    sp = sub.add_parser("sequence", help="write a generated sequence as JSON")
    sp.add_argument("name")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="generator parameter, JSON literal (repeatable)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sequence)

    sp = sub.add_parser("simulate", help="simulate a sequence on a phantom")
    sp.add_argument("--seq", required=True, help="sequence JSON file or built-in name")
    sp.add_argument("--phantom")
    sp.add_argument("--isochromat", metavar="T1,T2,T2PRIME",
                    help="single isochromat at the origin instead of a phantom")
    sp.add_argument("--out", required=True)
    sp.add_argument("--timing", help="timing report CSV")
    sim_flags(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("demo-cpmg", help="dense CPMG state series as CSV")
    sp.add_argument("--out", required=True)
    sp.add_argument("--ideal", action="store_true", help="instantaneous pulses")
    sp.add_argument("--t1", type=float, default=0.1)
    sp.add_argument("--t2", type=float, default=0.02)
    sp.add_argument("--t2prime-s", type=float, default=0.005)
    sp.add_argument("--denominator", choices=("squared", "magnitude"), default="squared")
    sp.set_defaults(func=cmd_demo_cpmg)

    sp = sub.add_parser("bench", help="timing grid and speedup ratios")
    sp.add_argument("--seq", default="fid")
    sp.add_argument("--phantom")
    sp.add_argument("--isochromats", type=int, default=20000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--partials", type=int, default=1)
    sp.add_argument("--repeats", type=int, default=1)
    sp.add_argument("--no-update", action="store_true", help="skip the stepped variant")
    sp.add_argument("--denominator", choices=("squared", "magnitude"), default="squared")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("recon", help="reconstruct a Cartesian stream")
    sp.add_argument("--stream", required=True)
    sp.add_argument("--out", required=True, help="output stem")
    sp.add_argument("--phantom", help="circles phantom for the region ratio")
    sp.add_argument("--pair", type=int, default=1)
    sp.add_argument("--erode-px", type=float, default=1.0)
    sp.set_defaults(func=cmd_recon)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (UsageError, LayoutError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrityError, SequenceError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (SimulationError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
