"""Command-line interface: ``run``, ``score``, ``phantom`` and ``bench``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import io, report
from .config import PRESETS, SequenceConfig, apply_overrides, dump_config, load_config, preset
from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptyDirectory,
    IoFailure,
    MixedDimensions,
    SeedOutsideImage,
    TrackingLost,
    UnsupportedPixelFormat,
    VesselTrackError,
)
from .metrics import format_summary, score_sequence, summarize
from .phantom import Compression, Drift, Jump, Speckle, Still, generate, hfus_spec, uhfus_spec
from .pipeline import SequenceTracker

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_TRACKING = 4

INPUT_ERRORS = (
    ConfigError,
    DimensionMismatch,
    EmptyDirectory,
    IoFailure,
    MixedDimensions,
    SeedOutsideImage,
    UnsupportedPixelFormat,
)

EPILOG = """\
exit codes:
  0  success
  1  unexpected internal error
  2  usage error (bad or missing arguments)
  3  input error: unreadable/empty/mixed-size frames, bad config, seed outside the image
  4  segmentation or tracking failure (contours up to the failing frame are still written)
"""


class UsageError(Exception):
    pass


def _parse_pair(text: str, name: str, cast=float) -> tuple:
    try:
        a, b = (cast(v) for v in text.replace("x", ",").split(","))
    except ValueError as exc:
        raise UsageError(f"{name} must look like A,B (got {text!r})") from exc
    return a, b


def _build_config(args) -> SequenceConfig:
    cfg = preset(args.preset)
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    pairs = []
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        pairs.append(tuple(item.split("=", 1)))
    if getattr(args, "threads", None) is not None:
        pairs.append(("threads", str(args.threads)))
    return apply_overrides(cfg, pairs) if pairs else cfg


def _write_scores(scores, sources, out: Path, stem: str = "metrics"):
    report.write_scores_csv(scores, out / f"{stem}.csv")
    summary = summarize(scores)
    report.write_summary_csv(summary, out / f"{stem}_summary.csv")
    report.plot_metric_boxes(scores, out / f"{stem}_boxes.png")
    report.plot_per_frame(scores, out / f"{stem}_per_frame.png", sources)
    return summary


def cmd_run(args) -> int:
    cfg = _build_config(args)
    seed = _parse_pair(args.seed, "--seed")
    frames = io.load_sequence(args.input)
    out = report.ensure_dir(args.output)
    (out / "config.txt").write_text(dump_config(cfg))
    dims = (frames[0].shape[1], frames[0].shape[0])
    if not (0 <= seed[0] <= dims[0] - 1 and 0 <= seed[1] <= dims[1] - 1):
        raise SeedOutsideImage(f"seed {seed} outside {dims[0]}x{dims[1]} frames")

    tracker = SequenceTracker(seed, cfg)
    results, status = [], EXIT_OK
    for i, frame in enumerate(frames):
        try:
            results.append(tracker.process(frame))
        except VesselTrackError as exc:
            if isinstance(exc, INPUT_ERRORS):
                raise
            where = exc.frame_index if isinstance(exc, TrackingLost) and exc.frame_index is not None else i
            print(f"error: tracking lost at frame {where}: {exc}", file=sys.stderr)
            status = EXIT_TRACKING
            break
    io.write_contours(results, out / "contours.txt", dims)
    print(f"wrote {len(results)} of {len(frames)} contours to {out / 'contours.txt'}")

    truth = None
    if args.truth:
        truth, _ = io.read_contours(args.truth)
    if args.overlays:
        od = report.ensure_dir(out / "overlays")
        by_index = {t.frame_index: t for t in truth or []}
        for r in results:
            io.save_rgb(io.render_overlay(frames[r.frame_index], r, by_index.get(r.frame_index)), od / f"frame_{r.frame_index:04d}.png")
    if truth is not None and results:
        scores = score_sequence(truth, results, dims, cfg.pixel_pitch_mm)
        summary = _write_scores(scores, {r.frame_index: r.seed_used for r in results}, out)
        print(format_summary(summary))
    return status


def cmd_score(args) -> int:
    truth, tdims = io.read_contours(args.truth)
    results, rdims = io.read_contours(args.result)
    pitch = args.pitch if args.pitch is not None else preset(args.preset).pixel_pitch_mm
    if args.dims:
        dims = _parse_pair(args.dims, "--dims", int)
    else:
        dims = tdims or rdims
    if dims is None:
        pts = np.concatenate([r.points for r in truth + results])
        dims = (int(np.ceil(pts[:, 0].max())) + 2, int(np.ceil(pts[:, 1].max())) + 2)
    scores = score_sequence(truth, results, dims, pitch)
    if not scores:
        print("error: no frame index appears in both files", file=sys.stderr)
        return EXIT_INPUT
    print("frame_index,dice,hausdorff_mm,mad_mm,dfpd,dfnd")
    for s in scores:
        print(f"{s.frame_index},{s.dice:.6f},{s.hausdorff_mm:.6f},{s.mad_mm:.6f},{s.dfpd:.6f},{s.dfnd:.6f}")
    summary = summarize(scores)
    print(f"# frames scored: {len(scores)}  pitch: {pitch} mm")
    print(format_summary(summary))
    if args.output:
        out = report.ensure_dir(args.output)
        _write_scores(scores, {r.frame_index: r.seed_used for r in results}, out)
    return EXIT_OK


def _parse_motion(items):
    motions = []
    for item in items:
        kind, _, rest = item.partition(":")
        parts = [p for p in rest.split(":") if p]
        try:
            if kind == "still":
                motions.append(Still())
            elif kind == "drift":
                motions.append(Drift(_parse_pair(parts[0], "drift")) if parts else Drift())
            elif kind == "compression":
                motions.append(Compression(*(float(p) for p in parts)))
            elif kind == "jump":
                motions.append(Jump(int(parts[0]), _parse_pair(parts[1], "jump")) if parts else Jump())
            else:
                raise UsageError(f"unknown motion {kind!r}")
        except (IndexError, TypeError, ValueError) as exc:
            raise UsageError(f"bad motion {item!r}") from exc
    return tuple(motions)


def _phantom_spec(args):
    kw = {"rng_seed": args.rng_seed}
    if args.frames is not None:
        kw["frames"] = args.frames
    if args.motion:
        kw["motion"] = _parse_motion(args.motion)
    if args.no_speckle:
        kw["speckle"] = Speckle(None)
    return (hfus_spec if args.preset == "hfus" else uhfus_spec)(**kw)


def cmd_phantom(args) -> int:
    spec = _phantom_spec(args)
    frames, truth = generate(spec)
    out = report.ensure_dir(args.output)
    io.write_frames(frames, out / "frames")
    io.write_contours(truth, out / "truth.txt", spec.dims)
    sx, sy = (float(v) for v in truth[0].ellipse.center)
    (out / "seed.txt").write_text(f"{sx!r},{sy!r}\n")
    print(f"wrote {len(frames)} frames ({spec.dims[0]}x{spec.dims[1]}) to {out / 'frames'}")
    print(f"seed {sx:g},{sy:g}")
    return EXIT_OK


def _time_run(frames, seed, cfg) -> list[float]:
    tracker = SequenceTracker(seed, cfg)
    for f in frames:
        tracker.process(f)
    return tracker.timings


def cmd_bench(args) -> int:
    cfg = _build_config(args)
    if args.input:
        if not args.seed:
            raise UsageError("bench --input needs --seed")
        frames = io.load_sequence(args.input)
        seed = _parse_pair(args.seed, "--seed")
    else:
        frames, truth = generate(_phantom_spec(args))
        seed = truth[0].ellipse.center
    counts = [args.threads] if args.threads is not None else sorted({1, os.cpu_count() or 1})
    runs = {}
    # warm-up so imports and FFT plans are not billed to frame 0
    _time_run(frames[:2], seed, cfg)
    for n in counts:
        runs[n] = _time_run(frames, seed, apply_overrides(cfg, [("threads", str(n))]))
    h, w = frames[0].shape
    print(f"# bench: {len(frames)} frames {w}x{h}, downsample x{cfg.downsample_factor}, file I/O excluded")
    print("threads,frames,mean_ms,std_ms,p95_ms,max_ms,fps")
    for n, times in runs.items():
        s = report.timing_stats(times)
        print(f"{n},{int(s['frames'])},{s['mean_ms']:.2f},{s['std_ms']:.2f},{s['p95_ms']:.2f},{s['max_ms']:.2f},{s['fps']:.1f}")
    if args.output:
        out = report.ensure_dir(args.output)
        report.write_timings_csv(runs, out / "bench.csv")
        report.plot_timings(runs, out / "bench.png", budget_ms=args.budget_ms)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vesseltrack",
        description="Segment and track a vessel lumen contour through an ultrasound B-scan sequence.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_config=True):
        sp.add_argument("--preset", choices=PRESETS, default="uhfus", help="parameter set (default uhfus)")
        if with_config:
            sp.add_argument("--config", metavar="PATH", help="flat key = value config file applied over the preset")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
            sp.add_argument("--threads", type=int, metavar="N", help="FFT worker threads (default: all cores)")

    r = sub.add_parser("run", help="segment and track a frame directory", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    r.add_argument("input", help="directory of 8-bit grayscale .pgm/.png frames")
    r.add_argument("--seed", required=True, metavar="X,Y", help="point inside the lumen of the first frame (full-resolution pixels)")
    r.add_argument("--output", required=True, metavar="DIR")
    r.add_argument("--overlays", action="store_true", help="write an RGB overlay PNG per frame")
    r.add_argument("--truth", metavar="PATH", help="truth contour file; writes metric tables and figures")
    common(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="metrics between a truth and a result contour file", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("truth")
    s.add_argument("result")
    s.add_argument("--pitch", type=float, metavar="MM", help="pixel pitch in mm (default: from --preset)")
    s.add_argument("--dims", metavar="W,H", help="frame size (default: from the file headers)")
    s.add_argument("--output", metavar="DIR", help="write CSV tables and figures here")
    common(s, with_config=False)
    s.set_defaults(func=cmd_score)

    ph = sub.add_parser("phantom", help="generate a synthetic sequence with truth contours", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    ph.add_argument("--output", required=True, metavar="DIR")
    ph.add_argument("--frames", type=int)
    ph.add_argument("--motion", action="append", metavar="SPEC", help="still | drift[:VX,VY] | compression[:AMP[:PERIOD]] | jump[:FRAME:DX,DY] (repeatable)")
    ph.add_argument("--rng-seed", type=int, default=0)
    ph.add_argument("--no-speckle", action="store_true")
    common(ph, with_config=False)
    ph.set_defaults(func=cmd_phantom)

    b = sub.add_parser("bench", help="per-frame timing on a phantom or a frame directory", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    b.add_argument("--input", metavar="DIR", help="time this sequence instead of the default phantom")
    b.add_argument("--seed", metavar="X,Y")
    b.add_argument("--frames", type=int)
    b.add_argument("--motion", action="append", metavar="SPEC")
    b.add_argument("--rng-seed", type=int, default=0)
    b.add_argument("--no-speckle", action="store_true")
    b.add_argument("--budget-ms", type=float, default=100.0)
    b.add_argument("--output", metavar="DIR", help="write per-frame timings and a figure here")
    common(b)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except VesselTrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRACKING
    except Exception as exc:  # pragma: no cover - last-resort diagnostic
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
