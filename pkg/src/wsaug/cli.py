"""Command line interface: ``wsaug <command> ...``.

Exit codes: 0 success, 1 usage or validation error, 2 numeric failure
(diverged fit, failed verification).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import alignmix, harness
from .augment import AugmentationPipeline, apply_pipeline
from .fit import DATASET_FIT, IMAGE_FIT, IMAGE_KINDS, SDF_FIT, SDF_KINDS, OptimizerConfig, fit_inr, image_task, sdf_task, synth_signal
from .io import atomic_write_text, read_pgm, read_sdf_csv
from .wscore import NetworkSpec, NumericError, WeightSpaceError, load, save

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dims(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_task_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--signal", choices=IMAGE_KINDS + SDF_KINDS, help="procedural signal kind")
    g.add_argument("--image", type=Path, help="P5 PGM image to fit")
    g.add_argument("--sdf", type=Path, help="CSV with columns x,y,z,sdf")
    p.add_argument("--size", type=int, default=32, help="image side for procedural images")
    p.add_argument("--signal-seed", type=int, default=None, help="seed for procedural signal parameters")


def _task_from_args(args):
    if args.image is not None:
        return image_task(read_pgm(args.image))
    if args.sdf is not None:
        return sdf_task(*read_sdf_csv(args.sdf))
    params = {"seed": args.signal_seed}
    if args.signal in IMAGE_KINDS:
        params["size"] = args.size
    return synth_signal(args.signal, **params)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wsaug", description="Weight-space augmentation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one INR to a signal")
    _add_task_args(p)
    p.add_argument("--dims", type=_dims, default=None, help="layer widths, e.g. 2,32,32,1")
    p.add_argument("--activation", choices=("sine", "relu"), default="sine")
    p.add_argument("--omega0", type=float, default=None, help="SIREN frequency (30 images, 10 SDFs)")
    p.add_argument("--optimizer", choices=("adam", "adamw"), default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--early-stop-psnr", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("gen-dataset", help="fit several views per procedural signal")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--classes", default=",".join(IMAGE_KINDS))
    p.add_argument("--per-class", type=int, default=25)
    p.add_argument("--views", type=int, default=2)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--steps", type=int, default=DATASET_FIT.steps)
    p.add_argument("--lr", type=float, default=DATASET_FIT.learning_rate)
    p.add_argument("--early-stop-psnr", type=float, default=DATASET_FIT.early_stop_psnr)
    p.add_argument("--omega0", type=float, default=30.0)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: WSAUG_THREADS or CPUs)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("augment", help="apply an augmentation pipeline to a WSE file")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--pipeline", type=Path, required=True, help="JSON list of {kind, p, params}")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--sample-id", type=int, default=0)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("align", help="weight matching of --b onto --a")
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)
    p.add_argument("--max-passes", type=int, default=100)
    p.add_argument("--out", type=Path, default=None, help="write the JSON result here as well")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("mixup", help="weight-space mixup of two WSE files")
    p.add_argument("--mode", choices=alignmix.MIXUP_MODES, default="aligned")
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="default: drawn from U(0,1)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--label-a", type=int, default=None)
    p.add_argument("--label-b", type=int, default=None)
    p.add_argument("--num-classes", type=int, default=None)
    p.add_argument("--labels-out", type=Path, default=None)
    p.add_argument("--max-passes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("barrier", help="loss along the interpolation path between two INRs")
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)
    _add_task_args(p)
    p.add_argument("--grid", type=int, default=11)
    p.add_argument("--align", choices=("none", "random", "matched"), default="matched")
    p.add_argument("--out", type=Path, required=True, help="CSV with header lambda,loss")
    p.add_argument("--max-passes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify", help="check function preservation / pullback laws")
    p.add_argument("--kind", required=True, action="append",
                   help=f"one of {', '.join(harness.VERIFIABLE_KINDS)}; repeatable")
    p.add_argument("--in", dest="inp", type=Path, required=True, nargs="+")
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--tol", type=float, default=None, help="default 1e-4 (sine) / 1e-5 (ReLU)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("render", help="render a 2-D INR to a P5 PGM image")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    return parser


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")


def cmd_fit(args) -> int:
    task = _task_from_args(args)
    is_sdf = task.kind == "sdf3d"
    base = SDF_FIT if is_sdf else IMAGE_FIT
    opt = replace(
        base,
        kind=args.optimizer or base.kind,
        learning_rate=args.lr or base.learning_rate,
        steps=args.steps or base.steps,
        early_stop_psnr=args.early_stop_psnr if args.early_stop_psnr is not None else base.early_stop_psnr,
    )
    dims = args.dims or ([3, 32, 32, 32, 32, 1] if is_sdf else [2, 32, 32, 1])
    spec = NetworkSpec.mlp(dims, hidden=args.activation)
    omega0 = args.omega0 or (10.0 if is_sdf else 30.0)
    elem, report = fit_inr(spec, task, opt, args.seed, omega0)
    save(elem, args.out)
    _emit({"out": str(args.out), **report.to_dict()})
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    opt = OptimizerConfig("adam", args.lr, steps=args.steps, early_stop_psnr=args.early_stop_psnr)
    classes = [c for c in args.classes.split(",") if c]
    manifest = harness.gen_dataset(classes, args.per_class, args.views, args.out_dir, opt, args.seed,
                                   args.size, omega0=args.omega0, workers=args.workers)
    for f in manifest.failures:
        _emit({"failure": f})
    _emit({"manifest": str(args.out_dir / "manifest.json"), "entries": len(manifest.entries),
           "failures": len(manifest.failures)})
    return EXIT_NUMERIC if manifest.failures else EXIT_OK


def cmd_augment(args) -> int:
    elem = load(args.inp)
    pipeline = AugmentationPipeline.load(args.pipeline)
    out = apply_pipeline(elem, pipeline, args.sample_id, args.epoch, args.seed)
    save(out, args.out)
    return EXIT_OK


def cmd_align(args) -> int:
    res = alignmix.weight_matching(load(args.a), load(args.b), args.max_passes, args.seed)
    text = json.dumps(res.to_dict())
    if args.out:
        atomic_write_text(args.out, text + "\n")
    sys.stdout.write(text + "\n")
    return EXIT_OK


def cmd_mixup(args) -> int:
    a, b = load(args.a), load(args.b)
    y1 = y2 = None
    if args.label_a is not None or args.label_b is not None:
        if args.label_a is None or args.label_b is None or not args.num_classes:
            raise UsageError("labels need --label-a, --label-b and --num-classes")
        y1 = alignmix.one_hot(args.label_a, args.num_classes)
        y2 = alignmix.one_hot(args.label_b, args.num_classes)
    sample = alignmix.weight_space_mixup(a, b, y1, y2, args.mode, args.lam, args.seed, args.max_passes)
    save(sample.element, args.out)
    info = {"out": str(args.out), "mode": args.mode, "lambda": sample.lam}
    if sample.label is not None:
        info["label"] = sample.label.tolist()
        if args.labels_out:
            atomic_write_text(args.labels_out, json.dumps({"lambda": sample.lam, "label": info["label"]}) + "\n")
    _emit(info)
    return EXIT_OK


def cmd_barrier(args) -> int:
    task = _task_from_args(args)
    prof = alignmix.loss_barrier(load(args.a), load(args.b), task, args.grid, args.align, args.seed,
                                 args.max_passes)
    atomic_write_text(args.out, prof.to_csv())
    _emit({"out": str(args.out), "align": args.align, "barrier": prof.barrier})
    return EXIT_OK


def cmd_verify(args) -> int:
    elems = [load(p) for p in args.inp]
    reports = harness.verify_suite(elems, args.kind, args.points, args.tol, args.seed)
    ok = True
    for path_i, rep in zip([p for p in args.inp for _ in args.kind], reports):
        _emit({"file": str(path_i), **rep.to_dict()})
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_render(args) -> int:
    harness.render_to_pgm(load(args.inp), args.out, (args.height, args.width))
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "gen-dataset": cmd_gen_dataset,
    "augment": cmd_augment,
    "align": cmd_align,
    "mixup": cmd_mixup,
    "barrier": cmd_barrier,
    "verify": cmd_verify,
    "render": cmd_render,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"wsaug {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericError as exc:
        print(f"wsaug {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (WeightSpaceError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"wsaug {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
