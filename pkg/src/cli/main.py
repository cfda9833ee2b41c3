import sys
import os
# Add project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
sys.path.insert(0, project_root)

from config.settings import settings

settings.apply_thread_cap()

import argparse
import json
from pathlib import Path
from typing import List, Optional

from src.utils.config import describe_keys, load_config
from src.utils.errors import BAPNError, BadConfig, IoFailure
from src.utils.logging import get_logger, setup_logging

logger = get_logger("bapn")

COMMANDS = ("gen", "labels", "train", "eval", "infer-s3r", "ablate", "selftest")
PARKED_AZIMUTH_OFFSET = 180.0


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def _config(args):
    return load_config(args.config, args.set)


def _out_dir(args, default: str) -> Path:
    return Path(args.out or default)


def cmd_gen(args) -> int:
    from src.simulator.dataset import generate_dataset

    cfg = _config(args)
    out = _out_dir(args, cfg.train.data_root)
    counts = generate_dataset(cfg.gen, out, cfg.digest())
    print(json.dumps({"out": str(out), "config_hash": cfg.digest(), "scenes": counts}))
    return 0


def _stack_from_sim(cfg, index: int, frames: int):
    from src.labels.pseudo_label import LabelStack
    from src.simulator.dataset import generate_scene
    from src.simulator.ground_truth import synth_label_stack
    from src.simulator.sources import SourceSpec

    scene = generate_scene(index, cfg.gen)
    anchor = scene.sources[0].azimuth if scene.sources else 0.0
    parked = [SourceSpec(cls="car", azimuth=(anchor + PARKED_AZIMUTH_OFFSET) % 360.0, distance=8.0, seed=0)]
    H, W = cfg.gen.label_grid
    synth = synth_label_stack(scene, H, W, frames, parked=parked)
    return LabelStack(synth["frames"], synth["class_table"]), synth["middle"]


def cmd_labels(args) -> int:
    from src.labels.pseudo_label import (
        COMPACT_IDS,
        load_class_table,
        load_label_stack,
        mode_background,
        sound_mask,
        to_training_target,
        write_sound_mask,
    )
    from src.utils.images import write_pgm

    cfg = _config(args)
    if args.input:
        if not args.class_table:
            raise BadConfig("--input needs --class-table")
        stack = load_label_stack(args.input, load_class_table(args.class_table), args.frames)
        frame_index = len(stack.frames) // 2 if args.frame is None else args.frame
    else:
        stack, frame_index = _stack_from_sim(cfg, args.from_sim, args.frames)
        if args.frame is not None:
            frame_index = args.frame
    if not 0 <= frame_index < len(stack.frames):
        raise BadConfig(f"frame {frame_index} outside the {len(stack.frames)}-frame stack")

    out = _out_dir(args, os.path.join(settings.RUNS_ROOT, "labels"))
    frame = stack.frames[frame_index]
    background = mode_background(stack)
    mask = sound_mask(frame, background, stack.ids_for(COMPACT_IDS))
    target = to_training_target(mask, frame, stack.class_table)

    write_pgm(out / "frame.pgm", frame.cells)
    write_pgm(out / "background.pgm", background.cells)
    write_sound_mask(out / "mask.pgm", mask)
    write_pgm(out / "target.pgm", target.cells)
    _write_text(out / "class_table.json", json.dumps({str(k): v for k, v in stack.class_table.items()}, indent=2))
    print(json.dumps({"out": str(out), "frames": len(stack.frames), "frame": frame_index,
                      "sound_cells": int(mask.cells.sum())}))
    return 0


def cmd_train(args) -> int:
    from src.training.trainer import train

    cfg = _config(args)
    out = _out_dir(args, os.path.join(settings.RUNS_ROOT, cfg.digest()))
    record = train(cfg, out)
    print(record.model_dump_json(indent=2))
    return 0


def cmd_eval(args) -> int:
    from src.training.evaluate import evaluate
    from src.utils.config import parse_overrides

    result = evaluate(args.checkpoint, args.split, parse_overrides(args.set))
    out = _out_dir(args, str(Path(args.checkpoint).parent / f"eval_{args.split}"))
    _write_text(out / "eval.json", result.model_dump_json(indent=2))
    tables = result.tables()
    _write_text(out / "eval.txt", tables)
    logger.info(f"💾 Evaluation written to {out}")
    print(tables, end="")
    return 0


def cmd_infer_s3r(args) -> int:
    from src.training.inference import infer_s3r

    out = _out_dir(args, os.path.join(settings.RUNS_ROOT, "infer"))
    written = infer_s3r(args.checkpoint, args.input, out)
    print(json.dumps({str(alpha): str(path) for alpha, path in written.items()}))
    return 0


def cmd_ablate(args) -> int:
    from src.training.ablation import ablate

    cfg = _config(args)
    out = _out_dir(args, os.path.join(settings.RUNS_ROOT, f"ablation_{args.grid}"))
    table = ablate(cfg, args.grid, out, seeds=args.seeds)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}", na_rep="-"))
    return 0


def cmd_selftest(args) -> int:
    from src.cli.selftest import run_selftest

    report = run_selftest(args.checkpoint)
    print(report.to_string(index=False))
    failed = int((report["status"] != "PASS").sum())
    print(f"\n{len(report) - failed}/{len(report)} checks passed")
    return 0 if failed == 0 else 1


HANDLERS = {
    "gen": cmd_gen,
    "labels": cmd_labels,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer-s3r": cmd_infer_s3r,
    "ablate": cmd_ablate,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    from src.training.ablation import DEFAULT_SEEDS, GRIDS
    from src.labels.pseudo_label import DEFAULT_FRAMES

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=settings.DEFAULT_CONFIG if os.path.isfile(settings.DEFAULT_CONFIG) else None,
                        help="key = value config file (default: config/defaults.conf)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--log-level", default=settings.LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")

    parser = argparse.ArgumentParser(
        prog="bapn",
        description="Binaural auditory perception: simulate, label, train, evaluate and ablate.",
        epilog="config keys (defaults):\n" + describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", parents=[common], help="render a synthetic dataset")

    labels = sub.add_parser("labels", parents=[common], help="pseudo-labels from a stack of label maps")
    labels.add_argument("--from-sim", type=int, default=0, metavar="INDEX",
                        help="synthesize the stack from generated scene INDEX (default 0)")
    labels.add_argument("--input", default=None, help="directory of P5 PGM label maps")
    labels.add_argument("--class-table", default=None, help="JSON mapping class id to name")
    labels.add_argument("--frames", type=int, default=DEFAULT_FRAMES, help="frames per location")
    labels.add_argument("--frame", type=int, default=None, help="frame to label (default: middle)")

    sub.add_parser("train", parents=[common], help="train one model")

    evaluate = sub.add_parser("eval", parents=[common], help="score a checkpoint")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--split", default="test", choices=("train", "val", "test"))

    infer = sub.add_parser("infer-s3r", parents=[common], help="predict the 90/180/270 pairs from a 0 deg WAV")
    infer.add_argument("--checkpoint", required=True)
    infer.add_argument("--input", required=True, help="stereo WAV recorded by the 0 deg pair")

    ablation = sub.add_parser("ablate", parents=[common], help="run an ablation grid")
    ablation.add_argument("--grid", required=True, choices=sorted(GRIDS))
    ablation.add_argument("--seeds", type=int, default=DEFAULT_SEEDS)

    selftest = sub.add_parser("selftest", parents=[common], help="round trips, grad checks and oracles")
    selftest.add_argument("--checkpoint", default=None, help="also validate this checkpoint file")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        return HANDLERS[args.command](args)
    except BAPNError as exc:
        logger.error(f"❌ {args.command} failed: {exc.name}: {exc.detail}")
        print(json.dumps(exc.to_dict()))
        return exc.exit_code
    except Exception as exc:
        logger.exception(f"❌ {args.command} crashed")
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
