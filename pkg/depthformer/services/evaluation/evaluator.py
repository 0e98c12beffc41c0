"""
Model evaluation and the encoder/neck ablation.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from depthformer.models.depthformer import DepthFormer
from depthformer.schemas.depth import DepthMap, SceneSpec
from depthformer.schemas.evaluation import EvalConfig, MetricReport, RangeBinReport
from depthformer.schemas.network import NetworkConfig, Variant
from depthformer.schemas.training import TrainConfig
from depthformer.services.data.scenes import gen_scenes
from depthformer.services.evaluation.reports import write_ablation_report, write_reports
from depthformer.services.metrics.depth_metrics import (
    aggregate_reports,
    align_to_gt,
    compute_metrics,
    interval_profile,
    range_binned_report,
)
from depthformer.services.training.checkpoint import load_model
from depthformer.services.training.trainer import train

logger = logging.getLogger(__name__)

Sample = Tuple[np.ndarray, DepthMap]
HELD_OUT_SCENES = 32


class EvaluationResult(BaseModel):
    """Dataset-level scores of one model (or one set of predictions)."""
    label: str = Field("Overall", description="Model or variant name")
    overall: MetricReport
    per_image: List[MetricReport] = Field(default_factory=list)
    bins: List[RangeBinReport] = Field(default_factory=list, description="Per-range rows ending with Overall")
    profile: List[Tuple[float, float, float]] = Field(default_factory=list, description="(lo, hi, abs_rel) intervals")

    def rows(self) -> List[Tuple[str, MetricReport]]:
        if self.bins:
            return [(row.label, row.report) for row in self.bins]
        return [("Overall", self.overall)]


def _aggregate_bins(per_image: Sequence[List[RangeBinReport]]) -> List[RangeBinReport]:
    labels: List[str] = []
    grouped: Dict[str, List[MetricReport]] = {}
    for rows in per_image:
        for row in rows:
            if row.label not in grouped:
                labels.append(row.label)
                grouped[row.label] = []
            grouped[row.label].append(row.report)
    # "Overall" is present for every image and stays last
    ordered = [name for name in labels if name != "Overall"] + ["Overall"]
    return [RangeBinReport(label=name, report=aggregate_reports(grouped[name])) for name in ordered]


def evaluate_predictions(
    pairs: Sequence[Tuple[DepthMap, DepthMap]],
    cfg: Optional[EvalConfig] = None,
    label: str = "Overall",
) -> EvaluationResult:
    """
    Score (prediction, ground truth) pairs.

    Predictions smaller than their ground truth are bilinearly upsampled first.

    Args:
        pairs: Predictions with their ground truth
        cfg: Mask, crop and binning options
        label: Name carried into the result

    Returns:
        EvaluationResult: Per-image reports and their average
    """
    cfg = cfg or EvalConfig()
    if not pairs:
        raise ValueError("evaluation needs at least one image")
    per_image, binned, profiles = [], [], []
    for pred, gt in pairs:
        pred = align_to_gt(pred, gt.shape)
        per_image.append(compute_metrics(pred, gt, cfg))
        if cfg.binned:
            binned.append(range_binned_report(pred, gt, cfg))
            profiles.append(interval_profile(pred, gt, cfg))

    profile = []
    if profiles:
        by_interval: Dict[Tuple[float, float], List[float]] = {}
        for rows in profiles:
            for lo, hi, value in rows:
                by_interval.setdefault((lo, hi), []).append(value)
        profile = [(lo, hi, float(np.mean(v))) for (lo, hi), v in sorted(by_interval.items())]

    result = EvaluationResult(
        label=label,
        overall=aggregate_reports(per_image),
        per_image=per_image,
        bins=_aggregate_bins(binned) if binned else [],
        profile=profile,
    )
    logger.info(
        f"{label}: d1 {result.overall.d1:.4f}  abs_rel {result.overall.abs_rel:.4f}  "
        f"rmse {result.overall.rmse:.4f} over {len(per_image)} images"
    )
    return result


def predict_scenes(model: DepthFormer, scenes: Sequence[Sample], workers: int = 1) -> List[DepthMap]:
    """Run the network on every scene image, in order."""
    images = [image for image, _ in scenes]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(model.predict, images))
    return [model.predict(image) for image in images]


def evaluate(
    model: Union[DepthFormer, str, Path],
    scenes: Sequence[Sample],
    cfg: Optional[EvalConfig] = None,
    out_dir: Optional[Union[str, Path]] = None,
    gt_as_prediction: bool = False,
    expected: Optional[NetworkConfig] = None,
    workers: int = 1,
) -> EvaluationResult:
    """
    Evaluate a network on image/depth pairs.

    Args:
        model: A network or a checkpoint path
        scenes: (image, ground truth) pairs
        cfg: Evaluation options
        out_dir: When given, report records and a table are written here
        gt_as_prediction: Score the ground truth against itself, bypassing
            the network (protocol sanity check)
        expected: Network config the checkpoint must match
        workers: Threads running forward passes

    Returns:
        EvaluationResult: Scores over all scenes

    Raises:
        CheckpointSchemaError: If the checkpoint does not fit `expected`,
            listing the offending tensors
    """
    cfg = cfg or EvalConfig()
    if gt_as_prediction:
        label = "ground-truth"
        preds = [gt.detach() for _, gt in scenes]
    else:
        if not isinstance(model, DepthFormer):
            model = load_model(model, expected)
        label = model.variant.value
        preds = predict_scenes(model, scenes, workers)
    result = evaluate_predictions(list(zip(preds, [gt for _, gt in scenes])), cfg, label)
    if out_dir is not None:
        write_reports(out_dir, result.rows())
    return result


def held_out_specs(cfg: TrainConfig, count: int = HELD_OUT_SCENES) -> List[SceneSpec]:
    """Scenes drawn with seeds following the training set, so the two never overlap."""
    first = cfg.scene_seed + cfg.n_scenes
    return [spec.model_copy(update={"seed": first + i}) for i, spec in
            enumerate(cfg.model_copy(update={"n_scenes": count}).scene_specs())]


def variant_dirname(variant: Variant) -> str:
    return Variant(variant).value.strip("+").replace("+", "_").lower()


def run_ablation(
    cfg: TrainConfig,
    out_dir: Union[str, Path],
    eval_cfg: Optional[EvalConfig] = None,
    variants: Sequence[Variant] = tuple(Variant),
    n_eval: int = HELD_OUT_SCENES,
) -> List[EvaluationResult]:
    """
    Train and score each encoder/neck variant on the same held-out scenes.

    Every variant starts from the same seed and sees the same batches. One
    labeled row per variant is written as key/value records, an aligned table
    and a markdown report.

    Args:
        cfg: Shared training settings; the variant flags are overridden
        out_dir: Root directory; each variant trains in its own subdirectory
        eval_cfg: Evaluation options
        variants: Variants in report order
        n_eval: Held-out scene count

    Returns:
        List[EvaluationResult]: One result per variant
    """
    out_dir = Path(out_dir)
    eval_cfg = eval_cfg or EvalConfig()
    scenes = gen_scenes(held_out_specs(cfg, n_eval))
    results = []
    for variant in variants:
        use_cb, use_hahi = Variant(variant).flags
        variant_cfg = cfg.model_copy(update={"use_conv_branch": use_cb, "use_hahi": use_hahi})
        logger.info(f"Ablation: training {Variant(variant).value}")
        checkpoint = train(variant_cfg, out_dir / variant_dirname(variant))
        model = checkpoint.build_model()
        results.append(evaluate(model, scenes, eval_cfg, out_dir / variant_dirname(variant), workers=cfg.workers))

    context = {
        "iterations": cfg.iterations,
        "train scenes": cfg.n_scenes,
        "held-out scenes": n_eval,
        "image size": f"{cfg.height}x{cfg.width}",
        "seed": cfg.seed,
    }
    write_ablation_report(out_dir, [(r.label, r.overall) for r in results], context)
    return results
