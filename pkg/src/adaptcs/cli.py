"""Command-line front end.

Every subcommand accepts ``--config FILE`` (flat ``key=value`` lines) and any
number of ``--set key=value`` overrides; overrides win over the file, and
dedicated flags win over both.  ``adaptcs keys`` lists every key.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import calibration as cal
from . import controller as ctl
from .coding import CodeSchedule, forward, generate_mask, load_mask, save_mask
from .motion import BlockMatchParams, block_match, save_field
from .pipeline import RunConfig, compare_fixed, run, save_frame_psnr, save_report
from .recon import ReconParams, psnr, reconstruct
from .synthetic import textured_disk_video
from .videoio import (VideoIOError, load_pgm, load_sequence, read_keyvalue, save_frame,
                      save_sequence, write_keyvalue)

log = logging.getLogger("adaptcs")


class ConfigError(ValueError):
    """Bad configuration; reported with exit status 2."""


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple:
    return tuple(int(p) for p in str(s).replace(" ", "").split(",") if p)


# key -> (parser, default, help)
KEYS = {
    "seed": (int, 0, "seed of the random mask"),
    "density": (float, 0.5, "probability of an open mask pixel"),
    "shift_per_frame": (int, 1, "mask shift in pixels per high-speed frame"),
    "n_f_min": (int, ctl.N_F_MIN, "lower bound on N_F"),
    "n_f_max": (int, ctl.N_F_MAX, "upper bound on N_F (also sizes the mask)"),
    "initial_nf": (int, ctl.INITIAL_N_F, "N_F of the first exposures"),
    "table": (str, "default", "'default' or a lookup-table CSV path"),
    "block_size": (int, 16, "block-matching block size P"),
    "window_size": (int, 40, "block-matching window size M"),
    "metric": (str, "mse", "block-matching metric: mse or sad"),
    "algorithm": (str, "cross_diamond", "block-matching search: full or cross_diamond"),
    "velocity_source": (str, "compressed", "compressed or reconstructed"),
    "normalization": (str, "coverage", "measurement normalization before matching: coverage or nf"),
    "smooth_sigma": (float, 1.5, "Gaussian blur applied to images before matching"),
    "field_filter": (int, 3, "median filter size on the motion field (1 disables)"),
    "reconstruct": (_bool, True, "reconstruct and score every measurement"),
    "max_iters": (int, 100, "GAP iteration cap"),
    "tol": (float, 1e-4, "GAP relative-change stopping tolerance"),
    "shrinkage_weight": (float, 0.05, "group shrinkage threshold"),
    "group_frames": (int, 2, "temporal extent of a coefficient group (0 = all frames)"),
    "group_size": (int, 4, "spatial extent of a coefficient group"),
    "init": (str, "mean", "GAP start point: mean or backprojection"),
    "target_psnr": (float, 22.0, "calibration PSNR target in dB"),
    "multipliers": (_ints, (1, 2, 4), "calibration frame-decimation factors"),
    "candidates": (_ints, cal.DEFAULT_CANDIDATES, "calibration candidate N_F values"),
    "probe_nf": (int, 6, "N_F used to estimate velocity during calibration"),
    "bucket_width": (float, 0.25, "calibration velocity bucket width"),
    "max_frames": (int, 0, "frames used per calibration video (0 = all)"),
    "workers": (int, 1, "calibration worker threads"),
}


def settings(args) -> dict:
    """Merge defaults, config file, ``--set`` overrides; validate keys and types."""
    raw: dict[str, str] = {}
    if getattr(args, "config", None):
        try:
            raw.update(read_keyvalue(args.config))
        except (OSError, VideoIOError) as e:
            raise ConfigError(f"cannot read config: {e}") from None
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    out = {k: d for k, (_, d, _) in KEYS.items()}
    for k, v in raw.items():
        try:
            out[k] = KEYS[k][0](v)
        except ValueError as e:
            raise ConfigError(f"bad value for {k}: {e}") from None
    for attr in ("global_seed", "seed"):
        if getattr(args, attr, None) is not None:
            out["seed"] = getattr(args, attr)
    return out


def _schedule(cfg, shape) -> CodeSchedule:
    mask = generate_mask(shape[0], shape[1], cfg["n_f_max"], cfg["density"], cfg["seed"])
    return CodeSchedule(mask, shape, cfg["shift_per_frame"])


def _bm(cfg) -> BlockMatchParams:
    return BlockMatchParams(cfg["block_size"], cfg["window_size"], cfg["metric"], cfg["algorithm"])


def _recon(cfg) -> ReconParams:
    gt = cfg["group_frames"] or None
    return ReconParams(cfg["max_iters"], cfg["tol"], cfg["shrinkage_weight"],
                       (gt, cfg["group_size"], cfg["group_size"]), cfg["init"])


def _table(name) -> ctl.LookupTable:
    if name == "default":
        return ctl.default_table()
    return ctl.load_table(name)


def _write_csv_atomic(write, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    write(path)
    log.info("wrote %s", path)


# -- subcommands --------------------------------------------------------------

def cmd_simulate(args, cfg) -> int:
    if args.table is not None:
        cfg["table"] = args.table
    if args.initial_nf is not None:
        cfg["initial_nf"] = args.initial_nf
    try:
        table = _table(cfg["table"])
    except (OSError, ctl.TableError) as e:
        raise ConfigError(f"bad table: {e}") from None
    video = load_sequence(args.input)
    try:
        config = RunConfig(_schedule(cfg, video.shape), table, cfg["initial_nf"], cfg["n_f_min"],
                           cfg["n_f_max"], _bm(cfg), _recon(cfg), cfg["reconstruct"],
                           cfg["velocity_source"], cfg["normalization"], cfg["smooth_sigma"],
                           cfg["field_filter"], args.reference_velocity)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if args.fixed_nf is not None:
        report = compare_fixed(video, config, args.fixed_nf)
    else:
        report = run(video, config)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    save_report(report, out / "run_report.csv")
    save_frame_psnr(report, out / "psnr.csv")
    if args.save_frames and report.reconstructions is not None:
        save_sequence(np.concatenate(report.reconstructions), out / "frames")
    print(f"measurements={report.measurement_count} frames={report.frames_covered} "
          f"mean_nf={report.mean_n_f:.3f} mean_psnr={report.mean_psnr:.3f}")
    return 0


def _synthetic_corpus(seed: int):
    """Small textured-disk clips at a few speeds; decimation covers faster motion."""
    return [textured_disk_video(64, shape=(64, 128), radius=22, speed=v, seed=seed + k, start=30, wrap=True)
            for k, v in enumerate((0.0, 0.25, 0.5))]


def cmd_calibrate(args, cfg) -> int:
    if args.target_psnr is not None:
        cfg["target_psnr"] = args.target_psnr
    if args.input:
        videos = [load_sequence(p) for p in args.input]
    else:
        videos = _synthetic_corpus(cfg["seed"])
    shapes = {v.shape for v in videos}
    if len(shapes) != 1:
        raise ConfigError("training videos must share one frame size")
    try:
        config = cal.CalibrationConfig(videos, cfg["multipliers"], cfg["candidates"], cfg["target_psnr"],
                                       cfg["probe_nf"], cfg["bucket_width"], _bm(cfg), cfg["smooth_sigma"],
                                       cfg["field_filter"], cfg["max_frames"] or None, cfg["workers"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    schedule = _schedule(cfg, shapes.pop())
    rows = cal.build_log(config, schedule, _recon(cfg))
    table = cal.table_from_log(rows, config.candidate_n_f, config.target_psnr, config.bucket_width)
    _write_csv_atomic(lambda p: ctl.save_table(table, p), Path(args.output))
    if args.log:
        _write_csv_atomic(lambda p: cal.export_calibration_log(rows, p), Path(args.log))
    for lo, hi, n in table:
        print(f"[{lo:g}, {hi:g}) -> {n}")
    return 0


def cmd_reconstruct(args, cfg) -> int:
    video = load_sequence(args.input)
    n_f = args.nf if args.nf is not None else cfg["initial_nf"]
    first = args.first_frame
    if first < 0 or first + n_f > len(video):
        raise ConfigError(f"frames {first}..{first + n_f - 1} not available ({len(video)} frames)")
    schedule = _schedule(cfg, video.shape)
    truth = video.frames[first:first + n_f]
    m = forward(truth, schedule, first)
    result = reconstruct(m, schedule, _recon(cfg))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    save_frame(np.clip(m.pixels / m.n_frames, 0, 1), out / "measurement.pgm")
    write_keyvalue({"n_frames": m.n_frames, "first_frame_index": m.first_frame_index,
                    "schedule_phase": m.schedule_phase, "scale": f"1/{m.n_frames}"},
                   out / "measurement.txt")
    save_sequence(result.frames, out / "frames", prefix=f"recon_{first:05d}")
    with open(out / "residuals.csv", "w") as fh:
        fh.write("# adaptcs residual_history v1\niteration,residual\n")
        for i, r in enumerate(result.residual_history, 1):
            fh.write(f"{i},{r!r}\n")
    scores = [psnr(t, e) for t, e in zip(truth, result.frames)]
    print(f"iterations={result.iterations_used} mean_psnr={np.mean(scores):.3f}")
    return 0


def cmd_motion(args, cfg) -> int:
    for key in ("algorithm", "block_size", "window_size", "metric"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    try:
        params = _bm(cfg)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    a = load_pgm(args.a) / 255.0
    b = load_pgm(args.b) / 255.0
    field = block_match(a, b, params)
    if args.output == "-":
        save_field(field, "/dev/stdout")
    else:
        _write_csv_atomic(lambda p: save_field(field, p), Path(args.output))
    return 0


def cmd_mask(args, cfg) -> int:
    n_f_max = args.n_f_max if args.n_f_max is not None else cfg["n_f_max"]
    density = args.density if args.density is not None else cfg["density"]
    try:
        mask = generate_mask(args.height, args.width, n_f_max, density, cfg["seed"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mask(mask, out)
    load_mask(out)
    print(f"mask {mask.shape[0]}x{mask.shape[1]} seed={mask.seed} ones={mask.bits.mean():.4f}")
    return 0


def cmd_keys(args, cfg) -> int:
    for k, (_, default, doc) in KEYS.items():
        print(f"{k:18s} {default!s:28s} {doc}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int, help="mask seed (overrides config)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="adaptcs", description="Adaptive temporal compressive sensing simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", dest="global_seed", type=int, help="mask seed for any subcommand")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run the adaptive capture loop on a video")
    s.add_argument("--input", required=True, help="PGM directory or raw file/manifest")
    s.add_argument("--output", default="out", help="output directory")
    s.add_argument("--table", help="'default' or lookup-table CSV")
    s.add_argument("--initial-nf", type=int)
    s.add_argument("--fixed-nf", type=int, help="bypass the controller and hold N_F constant")
    s.add_argument("--save-frames", action="store_true", help="write reconstructed frames as PGM")
    s.add_argument("--reference-velocity", action="store_true",
                   help="also log velocity estimated from the uncoded frames")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", parents=[common], help="learn a lookup table")
    c.add_argument("--input", nargs="*", help="training videos (default: built-in synthetic corpus)")
    c.add_argument("--output", default="table.csv")
    c.add_argument("--log", help="calibration log CSV")
    c.add_argument("--target-psnr", type=float)
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("reconstruct", parents=[common], help="code and reconstruct one exposure")
    r.add_argument("--input", required=True)
    r.add_argument("--output", default="recon")
    r.add_argument("--nf", type=int)
    r.add_argument("--first-frame", type=int, default=0)
    r.set_defaults(func=cmd_reconstruct)

    m = sub.add_parser("motion", parents=[common], help="block matching between two PGM images")
    m.add_argument("--a", required=True)
    m.add_argument("--b", required=True)
    m.add_argument("--algorithm", choices=["full", "cross_diamond"])
    m.add_argument("--block-size", dest="block_size", type=int)
    m.add_argument("--window-size", dest="window_size", type=int)
    m.add_argument("--metric", choices=["mse", "sad"])
    m.add_argument("--output", default="-", help="CSV path or '-' for stdout")
    m.set_defaults(func=cmd_motion)

    k = sub.add_parser("mask", parents=[common], help="generate and save a random mask")
    k.add_argument("--height", type=int, required=True)
    k.add_argument("--width", type=int, required=True)
    k.add_argument("--n-f-max", dest="n_f_max", type=int)
    k.add_argument("--density", type=float)
    k.add_argument("--output", default="mask.pgm")
    k.set_defaults(func=cmd_mask)

    ks = sub.add_parser("keys", parents=[common], help="list config keys")
    ks.set_defaults(func=cmd_keys)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = settings(args)
        return args.func(args, cfg)
    except ConfigError as e:
        parser.print_usage(sys.stderr)
        print(f"adaptcs: error: {e}", file=sys.stderr)
        return 2
    except (VideoIOError, ValueError, OSError) as e:
        print(f"adaptcs: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
