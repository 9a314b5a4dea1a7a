"""
Command-line interface.

Usage:
    python scripts/invseg.py gen-data --out data/synthetic --num-volumes 8
    python scripts/invseg.py train --config config/train.cfg --set steps=50
    python scripts/invseg.py eval --checkpoint runs/demo/ckpt_50.ivparams --data data/synthetic
    python scripts/invseg.py profile-memory --arch all --levels 3 --blocks 1,2,4,8
    python scripts/invseg.py verify --precision f64

Exit status: 0 on success, 1 on verification failure or an unexpected
error, 2 on bad flags or configuration.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from .autodiff import StoragePolicy, format_memory_table, profile_memory
from .data import Split, SyntheticConfig, load_dataset, write_dataset
from .models import Architecture, ChainKind, ModelSpec, build_chain, build_model
from .tensor import Precision
from .training import (
    SUITES,
    ConfigError,
    MemoryTable,
    Trainer,
    dump_config,
    evaluate,
    load_config,
    resolve_dataset,
    run_verification,
    write_report,
)
from .utils import get_settings, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

CONFIG_NAME = "train.cfg"


def _int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")
    if not values or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError(f"expected non-negative integers, got '{text}'")
    return values


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="invseg", description="Invertible volumetric segmentation")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    parser.add_argument("--json-logs", action="store_true", help="JSON log lines")
    parser.add_argument("--no-progress", action="store_true", help="Hide progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Write a synthetic dataset and its manifest")
    gen.add_argument("--out", type=Path, default=settings.data_dir / "synthetic", help="Output directory")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--num-volumes", type=int, default=8)
    gen.add_argument("--size", type=int, default=32, help="Cubic volume extent")
    gen.add_argument("--preset", choices=["iseg", "brats"], help="Modality/class preset")
    gen.add_argument("--num-classes", type=int, default=4)
    gen.add_argument("--modalities", type=int, default=2)
    gen.add_argument("--test-fraction", type=float, default=0.25)

    tr = sub.add_parser("train", help="Train from a config file")
    tr.add_argument("--config", type=Path, required=True, help="key=value config file")
    tr.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="Override a config key (repeatable)")
    tr.add_argument("--out", type=Path, help="Output directory (config output_dir by default)")

    ev = sub.add_parser("eval", help="Evaluate a checkpoint on a dataset")
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--data", type=Path, required=True, help="Dataset directory")
    ev.add_argument("--config", type=Path, help=f"Training config ({CONFIG_NAME} next to the checkpoint by default)")
    ev.add_argument("--split", choices=[s.value for s in Split], default=Split.TEST.value)
    ev.add_argument("--threads", type=int, help="Inference threads")
    ev.add_argument("--stride", type=int, help="Window stride (patch_size / 2 by default)")
    ev.add_argument("--out", type=Path, help="Write the report as JSON")

    pm = sub.add_parser("profile-memory", help="Peak activation memory per storage policy")
    pm.add_argument("--arch", default="all",
                    choices=["all", "chain"] + [a.value for a in Architecture])
    pm.add_argument("--levels", type=int, default=3)
    pm.add_argument("--width", type=int, default=8, help="Base width (channels for chains)")
    pm.add_argument("--blocks", type=_int_list, default=[1, 2, 4, 8],
                    help="Blocks per level (chain length for --arch chain)")
    pm.add_argument("--patch", type=int, help="Input extent (32 for models, 8 for chains)")
    pm.add_argument("--precision", choices=[p.value for p in Precision], default=Precision.F32.value)
    pm.add_argument("--seed", type=int, default=0)
    pm.add_argument("--out", type=Path, help="Write all reports as JSON")

    vf = sub.add_parser("verify", help="Run the verification suites")
    vf.add_argument("--precision", choices=[p.value for p in Precision], default=Precision.F64.value)
    vf.add_argument("--suite", action="append", choices=list(SUITES), help="Run only these suites")
    vf.add_argument("--seed", type=int, default=0)
    vf.add_argument("--out", type=Path, help="Write the suite report as JSON")
    return parser


# ============================================
# Commands
# ============================================

def cmd_gen_data(args: argparse.Namespace) -> int:
    if args.preset:
        config = SyntheticConfig.preset(args.preset, size=args.size)
    else:
        config = SyntheticConfig(size=args.size, num_classes=args.num_classes, num_modalities=args.modalities)
    manifest = write_dataset(
        args.out,
        seed=args.seed,
        num_volumes=args.num_volumes,
        config=config,
        test_fraction=args.test_fraction,
        preset=args.preset,
        show_progress=args.show_progress,
    )
    print(f"Wrote {len(manifest.entries)} volumes to {args.out} (histogram overlap {manifest.histogram_overlap:.3f})")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.overrides)
    out_dir = args.out or config.output_dir or get_settings().output_dir / args.config.stem
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_NAME).write_text(dump_config(config), encoding="utf-8")

    spec = config.resolved_spec()
    train_set, held_out, class_names = resolve_dataset(config.data, spec.in_channels, spec.num_classes)
    trainer = Trainer(config, train_set, held_out, out_dir, class_names)
    report = trainer.run(show_progress=args.show_progress)
    write_report(report, out_dir / "train_report.json")
    print(report.to_text())
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config_path = args.config or args.checkpoint.parent / CONFIG_NAME
    config = load_config(config_path)
    model = build_model(config.resolved_spec())
    model.load(args.checkpoint)
    manifest, dataset = load_dataset(args.data, Split(args.split))
    if not dataset:
        raise ConfigError(f"Dataset {args.data} has no '{args.split}' volumes")
    report = evaluate(
        model,
        dataset,
        stride=args.stride,
        num_threads=args.threads,
        class_names=manifest.class_names,
        show_progress=args.show_progress,
    )
    if args.out:
        write_report(report, args.out)
    print(report.to_text())
    return EXIT_OK


def cmd_profile_memory(args: argparse.Namespace) -> int:
    precision = Precision(args.precision)
    rng = np.random.default_rng(args.seed)
    table = MemoryTable()

    if args.arch == "chain":
        extent = args.patch or 8
        x = rng.standard_normal((1, args.width, extent, extent, extent)).astype(precision.dtype)
        for length in args.blocks:
            tape = build_chain(ChainKind.COUPLING, max(1, length), args.width, seed=args.seed, precision=precision)
            table.rows[f"chain L={length}"] = {p: profile_memory(tape, p, x) for p in StoragePolicy}
    else:
        patch = args.patch or 32
        archs = list(Architecture) if args.arch == "all" else [Architecture(args.arch)]
        for arch in archs:
            for blocks in args.blocks:
                spec = ModelSpec(
                    arch=arch,
                    levels=args.levels,
                    base_width=args.width,
                    blocks_per_level=blocks,
                    patch_size=patch,
                    seed=args.seed,
                    precision=precision,
                )
                model = build_model(spec)
                x = rng.standard_normal((1, spec.in_channels) + (patch,) * 3).astype(precision.dtype)
                table.rows[f"{arch.value} b={blocks}"] = {p: profile_memory(model.tape, p, x) for p in StoragePolicy}

    print(format_memory_table(table.rows))
    if args.out:
        write_report(table, args.out)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    report = run_verification(Precision(args.precision), args.suite, args.seed, show_progress=args.show_progress)
    print(report.to_text())
    if args.out:
        write_report(report, args.out)
    return EXIT_OK if report.passed else EXIT_FAILURE


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "profile-memory": cmd_profile_memory,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    setup_logging("DEBUG" if args.verbose else None, json_format=True if args.json_logs else None)
    args.show_progress = False if args.no_progress else get_settings().show_progress

    try:
        return COMMANDS[args.command](args)
    except (FileNotFoundError, ConfigError, ValidationError) as exc:
        logger.error(f"{exc}")
        print(f"invseg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        logger.error(f"{args.command} failed: {exc}", exc_info=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
