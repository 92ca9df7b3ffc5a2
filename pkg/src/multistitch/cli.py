"""Command-line interface.

    stitch --reference R.png --candidate C.png [--correspondences M.txt]
           [--config cfg.txt] [--out DIR] [flags]
    stitch synth --scene two-plane --seed 7 --out DIR
    stitch eval --reference R.png --candidate C.png [--eval-crop PX]
           [--eval-side SIDE] [--out DIR]

Exit codes: 0 success, 2 config error, 3 registration failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import RunConfig, parse_config, set_config_value
from .correspond import serialize_correspondences
from .exceptions import (ConfigError, DecodeError, ImageWriteError,
                         InsufficientDataError, InsufficientMatchesError,
                         NoRegistrationError, StitchError)
from .image import save_image
from .metrics import crop_eval, write_eval_csv
from .pipeline import make_stitch_fn, run_pipeline
from .synth import SCENE_TYPES, make_synthetic_scene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REGISTRATION = 3
EXIT_IO = 4


def _base_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    for assignment in args.set or []:
        if "=" not in assignment:
            raise ConfigError(f"--set expects KEY=VALUE, got {assignment!r}")
        key, _, value = assignment.partition("=")
        cfg = set_config_value(cfg, key.strip(), value.strip(), "--set")
    for key in ("reference", "candidate", "correspondences", "out",
                "dump_candidates", "dump_labels", "energy_log"):
        value = getattr(args, key, None)
        if value is not None:
            cfg = set_config_value(cfg, key, value, f"--{key.replace('_', '-')}")
    if getattr(args, "seed", None) is not None:
        cfg = set_config_value(cfg, "seed", str(args.seed), "--seed")
    if getattr(args, "no_blend", False):
        cfg = set_config_value(cfg, "blend", "false", "--no-blend")
    return cfg


def _add_common(parser) -> None:
    parser.add_argument("--reference", help="reference image (PNG or binary PPM)")
    parser.add_argument("--candidate", help="candidate image (PNG or binary PPM)")
    parser.add_argument("--correspondences",
                        help="correspondence file; omit to run the built-in matcher")
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="pipeline RNG seed")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    parser.add_argument("--no-blend", action="store_true",
                        help="skip Poisson blending, emit the raw composite")
    parser.add_argument("--dump-candidates", metavar="DIR",
                        help="directory for per-candidate warp dumps")
    parser.add_argument("--dump-labels", metavar="PATH",
                        help="write the label map PNG here instead of OUT/labels.png")
    parser.add_argument("--energy-log", metavar="PATH",
                        help="write the accepted-move energy log here")


def _cmd_stitch(argv) -> int:
    parser = argparse.ArgumentParser(prog="stitch", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(parser)
    args = parser.parse_args(argv)
    cfg = _base_config(args)
    if not cfg.reference or not cfg.candidate:
        raise ConfigError("both --reference and --candidate are required")
    report = run_pipeline(cfg)
    sys.stdout.write(report.render_text())
    return EXIT_OK


def _cmd_synth(argv) -> int:
    parser = argparse.ArgumentParser(prog="stitch synth")
    parser.add_argument("--scene", required=True, choices=SCENE_TYPES)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    parser.add_argument("--size", default="640x480", help="WxH, default 640x480")
    args = parser.parse_args(argv)
    try:
        w, h = (int(v) for v in args.size.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"--size expects WxH, got {args.size!r}") from exc
    scene = make_synthetic_scene(args.scene, args.seed, size=(w, h))
    os.makedirs(args.out, exist_ok=True)
    save_image(scene.reference, os.path.join(args.out, "reference.png"))
    save_image(scene.candidate, os.path.join(args.out, "candidate.png"))
    with open(os.path.join(args.out, "correspondences.txt"), "w", encoding="utf-8") as fh:
        fh.write(serialize_correspondences(scene.correspondences))
    with open(os.path.join(args.out, "motions.txt"), "w", encoding="utf-8") as fh:
        for i, hom in enumerate(scene.motions):
            fh.write(f"layer {i}: " + " ".join(repr(float(v)) for v in hom.matrix.ravel()) + "\n")
    print(f"wrote {args.scene} scene (seed {args.seed}) to {args.out}")
    return EXIT_OK


def _cmd_eval(argv) -> int:
    parser = argparse.ArgumentParser(prog="stitch eval")
    _add_common(parser)
    parser.add_argument("--eval-crop", type=int, help="crop band width in px")
    parser.add_argument("--eval-side", choices=("left", "right", "top", "bottom"))
    parser.add_argument("--dataset", default="dataset", help="name for report rows")
    args = parser.parse_args(argv)
    cfg = _base_config(args)
    if args.eval_crop is not None:
        cfg = set_config_value(cfg, "eval_crop", str(args.eval_crop), "--eval-crop")
    if args.eval_side is not None:
        cfg = set_config_value(cfg, "eval_side", args.eval_side, "--eval-side")
    if not cfg.reference or not cfg.candidate:
        raise ConfigError("both --reference and --candidate are required")

    from .correspond import parse_correspondences
    from .image import load_image
    reference = load_image(cfg.reference)
    candidate = load_image(cfg.candidate)
    correspondences = None
    if cfg.correspondences:
        with open(cfg.correspondences, "r", encoding="utf-8") as fh:
            correspondences = parse_correspondences(fh)

    rows = crop_eval(reference, candidate, cfg.eval_crop, cfg.eval_side,
                     make_stitch_fn(cfg), correspondences, dataset=args.dataset)
    os.makedirs(cfg.out, exist_ok=True)
    csv_path = os.path.join(cfg.out, "eval.csv")
    write_eval_csv(rows, csv_path)
    for row in rows:
        print(f"{row.dataset}  {row.region:22s} {row.metric:8s} {row.score:.4f}  {row.status}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv and argv[0] == "synth":
            return _cmd_synth(argv[1:])
        if argv and argv[0] == "eval":
            return _cmd_eval(argv[1:])
        return _cmd_stitch(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoRegistrationError, InsufficientMatchesError, InsufficientDataError) as exc:
        print(f"registration failed: {exc}", file=sys.stderr)
        return EXIT_REGISTRATION
    except (DecodeError, ImageWriteError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except StitchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
