#!/usr/bin/env python
"""
Command-line entry point for DepthFormer.

    python -m depthformer.main gen       --config run.cfg --out scenes/
    python -m depthformer.main train     --config run.cfg --set iterations=200 --out runs/a
    python -m depthformer.main eval      --checkpoint runs/a/checkpoint.ckpt --crop garg --binned
    python -m depthformer.main metrics   --pred p.png --gt g.png
    python -m depthformer.main unproject --depth d.dr16 --fx 500 --fy 500 --cx 32 --cy 32 --out cloud.txt
    python -m depthformer.main gradcheck
    python -m depthformer.main ablate    --config run.cfg --out runs/ablation

Config files hold flat `key = value` lines naming TrainConfig and EvalConfig
fields; `--set key=value` overrides them.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from depthformer.config import settings
from depthformer.exceptions import DepthFormerError
from depthformer.models.depthformer import DepthFormer
from depthformer.schemas.depth import DepthMap, Intrinsics
from depthformer.schemas.evaluation import CropKind, EvalConfig
from depthformer.schemas.network import Variant
from depthformer.schemas.training import TrainConfig
from depthformer.services.data.depth_io import DEFAULT_SCALE, ingest_depth_pair, read_depth, write_depth
from depthformer.services.data.pointcloud import unproject, write_point_cloud
from depthformer.services.data.scenes import gen_scene, gen_scenes, save_preview
from depthformer.services.evaluation.evaluator import (
    HELD_OUT_SCENES,
    evaluate,
    evaluate_predictions,
    held_out_specs,
    run_ablation,
)
from depthformer.services.evaluation.reports import format_table, write_reports
from depthformer.services.gradcheck_suite import case_names, run_suite
from depthformer.services.training.checkpoint import load_checkpoint
from depthformer.services.training.trainer import CHECKPOINT_NAME, train
from depthformer.utils.helpers import (
    build_config,
    create_directory_if_not_exists,
    parse_config_file,
    parse_overrides,
    split_values,
)
from depthformer.utils.logger import setup_logging
from depthformer.utils.validators import validate_image_size

logger = logging.getLogger(__name__)


def _config_values(args: argparse.Namespace) -> Dict[str, str]:
    values = parse_config_file(getattr(args, "config", None))
    values.update(parse_overrides(getattr(args, "set", None)))
    return values


def _eval_flag_values(args: argparse.Namespace) -> Dict[str, str]:
    values = {}
    if getattr(args, "crop", None):
        values["crop"] = args.crop
    if getattr(args, "min_depth", None) is not None:
        values["min_depth"] = str(args.min_depth)
    if getattr(args, "max_depth", None) is not None:
        values["max_depth"] = str(args.max_depth)
    if getattr(args, "binned", False):
        values["binned"] = "true"
    return values


def _train_config(values: Dict[str, str], base: Optional[TrainConfig] = None) -> TrainConfig:
    if base is not None:
        merged = base.model_dump(mode="json")
        merged.update({k: v for k, v in values.items() if v != ""})
        cfg = TrainConfig.model_validate(merged)
    else:
        cfg = build_config(TrainConfig, values)
    valid, issues = validate_image_size(cfg.height, cfg.width, cfg.network_config().branch)
    if not valid:
        raise ValueError("; ".join(issues))
    return cfg


def _print_rows(title: str, rows: Sequence[Tuple[str, object]]) -> None:
    print(title)
    print(format_table(rows))


def cmd_gen(args: argparse.Namespace) -> int:
    routed = split_values(_config_values(args), [TrainConfig])
    cfg = build_config(TrainConfig, routed[TrainConfig])
    specs = held_out_specs(cfg, args.count) if args.split == "heldout" else cfg.scene_specs()
    out_dir = Path(args.out)
    create_directory_if_not_exists(out_dir)
    for spec in specs:
        image, depth = gen_scene(spec)
        stem = out_dir / f"scene_{spec.seed:06d}"
        write_depth(f"{stem}_depth{args.format}", depth, args.scale)
        save_preview(image, f"{stem}_image.png")
    logger.info(f"Wrote {len(specs)} scenes to {out_dir}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    routed = split_values(_config_values(args), [TrainConfig])
    cfg = _train_config(routed[TrainConfig])
    out_dir = Path(args.out or Path(settings.RUNS_DIR) / "train")
    checkpoint = train(cfg, out_dir)
    print(f"checkpoint: {out_dir / CHECKPOINT_NAME} (iteration {checkpoint.iteration})")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    values = _config_values(args)
    values.update(_eval_flag_values(args))
    routed = split_values(values, [TrainConfig, EvalConfig])
    eval_cfg = build_config(EvalConfig, routed[EvalConfig])

    if args.checkpoint is None and not args.gt_as_prediction:
        raise ValueError("eval needs --checkpoint unless --gt-as-prediction is given")
    model = None
    base = None
    checkpoint = load_checkpoint(args.checkpoint) if args.checkpoint is not None else None
    if checkpoint is not None:
        base = checkpoint.train_config()
    cfg = _train_config(routed[TrainConfig], base)
    if checkpoint is not None:
        if routed[TrainConfig] or base is None:
            # the requested network must fit the stored tensors exactly
            model = DepthFormer(cfg.network_config())
            model.load_state_dict(checkpoint.tensors)
        else:
            model = checkpoint.build_model()

    specs = held_out_specs(cfg, args.count) if args.split == "heldout" else cfg.scene_specs()
    scenes = gen_scenes(specs)
    result = evaluate(model, scenes, eval_cfg, out_dir=args.out,
                      gt_as_prediction=args.gt_as_prediction, workers=cfg.workers)
    _print_rows(f"{result.label} on {len(scenes)} {args.split} scenes", result.rows())
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    values = _config_values(args)
    values.update(_eval_flag_values(args))
    routed = split_values(values, [EvalConfig])
    eval_cfg = build_config(EvalConfig, routed[EvalConfig])
    if len(args.pred) != len(args.gt):
        raise ValueError(f"{len(args.pred)} predictions given for {len(args.gt)} ground-truth files")
    pairs: List[Tuple[DepthMap, DepthMap]] = [
        ingest_depth_pair(p, g, args.pred_scale, args.gt_scale) for p, g in zip(args.pred, args.gt)
    ]
    result = evaluate_predictions(pairs, eval_cfg, label="external")
    if args.out:
        write_reports(args.out, result.rows())
    _print_rows(f"{len(pairs)} external pairs", result.rows())
    return 0


def cmd_unproject(args: argparse.Namespace) -> int:
    depth = read_depth(args.depth, args.scale)
    points = unproject(depth, Intrinsics(fx=args.fx, fy=args.fy, cx=args.cx, cy=args.cy))
    write_point_cloud(points, args.out)
    print(f"{len(points)} points written to {args.out}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    suite = run_suite(seeds, args.case, None if args.all_entries else args.entries)
    width = max(len(name) for name in case_names())
    for r in suite.results:
        status = "pass" if r.report.passed else "FAIL"
        detail = f"  {r.report.failure}" if r.report.failure else ""
        print(f"{r.case.ljust(width)}  seed {r.seed}  max rel err {r.report.max_error:.2e}  {status}{detail}")
    print(f"{len(suite.results) - len(suite.failures())}/{len(suite.results)} passed in {suite.seconds:.1f}s")
    return 0 if suite.passed else 1


def cmd_ablate(args: argparse.Namespace) -> int:
    values = _config_values(args)
    values.update(_eval_flag_values(args))
    routed = split_values(values, [TrainConfig, EvalConfig])
    cfg = _train_config(routed[TrainConfig])
    eval_cfg = build_config(EvalConfig, routed[EvalConfig])
    variants = [Variant(v) for v in args.variants.split(",")] if args.variants else list(Variant)
    out_dir = Path(args.out or Path(settings.RUNS_DIR) / "ablation")
    results = run_ablation(cfg, out_dir, eval_cfg, variants, args.count)
    _print_rows(f"Ablation on {args.count} held-out scenes", [(r.label, r.overall) for r in results])
    return 0


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", "-c", help="Flat key = value config file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a config value (repeatable)")


def _add_eval_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--crop", choices=[c.value for c in CropKind], help="Evaluation crop")
    parser.add_argument("--min-depth", type=float, help="Ignore ground truth at or below this depth")
    parser.add_argument("--max-depth", type=float, help="Ignore ground truth above this depth")
    parser.add_argument("--binned", action="store_true", help="Add per-range rows")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthformer", description="Desk-scale DepthFormer toolkit.")
    parser.add_argument("--log-level", default=None, help="Logging level (default: settings.LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="Emit synthetic scenes (depth raster + RGB preview)")
    _add_config_args(p)
    p.add_argument("--out", "-o", required=True, help="Output directory")
    p.add_argument("--split", choices=["train", "heldout"], default="train")
    p.add_argument("--count", type=int, default=HELD_OUT_SCENES, help="Held-out scene count")
    p.add_argument("--format", choices=[".dr16", ".png", ".txt"], default=".dr16", help="Depth file format")
    p.add_argument("--scale", type=float, default=DEFAULT_SCALE, help="Meters per unit for 16-bit formats")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="Train on the fixed synthetic scene set")
    _add_config_args(p)
    p.add_argument("--out", "-o", help="Run directory (default: <RUNS_DIR>/train)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a checkpoint on synthetic scenes")
    _add_config_args(p)
    _add_eval_args(p)
    p.add_argument("--checkpoint", help="Checkpoint file")
    p.add_argument("--split", choices=["train", "heldout"], default="heldout")
    p.add_argument("--count", type=int, default=HELD_OUT_SCENES, help="Held-out scene count")
    p.add_argument("--gt-as-prediction", action="store_true", help="Score ground truth against itself")
    p.add_argument("--out", "-o", help="Write report records and table here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("metrics", help="Score external prediction/ground-truth depth files")
    _add_config_args(p)
    _add_eval_args(p)
    p.add_argument("--pred", action="append", required=True, help="Prediction file (repeatable)")
    p.add_argument("--gt", action="append", required=True, help="Ground-truth file (repeatable)")
    p.add_argument("--pred-scale", type=float, help="Meters per unit of 16-bit predictions")
    p.add_argument("--gt-scale", type=float, help="Meters per unit of 16-bit ground truth")
    p.add_argument("--out", "-o", help="Write report records and table here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("unproject", help="Lift a depth map to an X Y Z point list")
    p.add_argument("--depth", required=True, help="Depth file")
    p.add_argument("--scale", type=float, help="Meters per unit for 16-bit formats")
    p.add_argument("--fx", type=float, required=True)
    p.add_argument("--fy", type=float, required=True)
    p.add_argument("--cx", type=float, required=True)
    p.add_argument("--cy", type=float, required=True)
    p.add_argument("--out", "-o", required=True, help="Point-cloud text file")
    p.set_defaults(func=cmd_unproject)

    p = sub.add_parser("gradcheck", help="Finite-difference check of every parameterized operation")
    p.add_argument("--seeds", default="0,1,2", help="Comma-separated instance seeds")
    p.add_argument("--case", action="append", choices=case_names(), help="Restrict to a case (repeatable)")
    p.add_argument("--entries", type=int, default=6, help="Entries compared per tensor")
    p.add_argument("--all-entries", action="store_true", help="Compare every entry")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="Train and compare baseline, +CB, +HAHI and +CB+HAHI")
    _add_config_args(p)
    _add_eval_args(p)
    p.add_argument("--variants", help="Comma-separated subset, e.g. baseline,+CB+HAHI")
    p.add_argument("--count", type=int, default=HELD_OUT_SCENES, help="Held-out scene count")
    p.add_argument("--out", "-o", help="Output directory (default: <RUNS_DIR>/ablation)")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.func(args)
    except DepthFormerError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"{args.command}: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
