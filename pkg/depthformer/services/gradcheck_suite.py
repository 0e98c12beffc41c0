"""
Finite-difference verification of every parameterized network operation.

Each case builds a small random instance (all weights drawn at random, so
zero-initialized heads do not hide terms), reduces the operation's output to
a scalar through a fixed random projection and compares backprop with
central differences for the weights and the inputs.
"""
import logging
import time
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from depthformer.core.gradcheck import GradCheckReport, finite_diff_check
from depthformer.core.tensor import Tensor, parameter
from depthformer.models.conv_stem import ConvStem, encode_conv
from depthformer.models.decoder import Decoder, decode
from depthformer.models.deform_attn import (
    CrossDeformAttention,
    DeformAttention,
    LevelIndexMap,
    deform_cross_attention,
    deform_self_attention,
)
from depthformer.models.hahi import Hahi, hahi_forward
from depthformer.models.losses import silog_loss
from depthformer.models.module import Module, randomize
from depthformer.models.swin import (
    FeaturePyramid,
    PatchMerge,
    TransformerLayer,
    WindowAttention,
    patch_merge,
    transformer_layer,
    window_msa,
)
from depthformer.schemas.depth import DepthMap
from depthformer.schemas.network import ConvStemConfig, DecoderConfig, DeformAttnConfig, HahiConfig

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2)
ENTRIES_PER_TENSOR = 6

Objective = Callable[[], Tensor]
Instance = Tuple[Objective, Dict[str, Tensor]]

LEVEL_SIZES = [(4, 4), (2, 2)]


class GradCheckCase(NamedTuple):
    name: str
    build: Callable[[np.random.Generator], Instance]


class CaseResult(BaseModel):
    """One case on one seed."""
    case: str
    seed: int
    report: GradCheckReport


class SuiteResult(BaseModel):
    results: List[CaseResult] = Field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.report.passed for r in self.results)

    def failures(self) -> List[CaseResult]:
        return [r for r in self.results if not r.report.passed]


def _projection(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    return rng.normal(size=shape)


def _scalar(out: Tensor, projection: np.ndarray) -> Tensor:
    return (out * projection).sum()


def _with_params(module: Module, prefix: str, extra: Dict[str, Tensor]) -> Dict[str, Tensor]:
    named = {f"{prefix}.{name}": p for name, p in module.named_parameters()}
    named.update(extra)
    return named


def _input(rng: np.random.Generator, *shape: int) -> Tensor:
    return parameter(rng.normal(size=shape), name="input")


def _pyramid(rng: np.random.Generator, channels: Sequence[int]) -> List[Tensor]:
    return [parameter(rng.normal(size=(c, h, w))) for c, (h, w) in zip(channels, LEVEL_SIZES)]


def _transformer_layer(rng: np.random.Generator) -> Instance:
    layer = randomize(TransformerLayer(4, 2, window_size=2, shift=True, mlp_ratio=2, rng=rng), rng)
    z = _input(rng, 4, 4, 4)
    projection = _projection(rng, z.shape)
    return (lambda: _scalar(transformer_layer(z, layer), projection)), _with_params(layer, "layer", {"z": z})


def _window_msa(rng: np.random.Generator) -> Instance:
    attn = randomize(WindowAttention(4, 2, rng), rng)
    grid = _input(rng, 4, 4, 4)
    projection = _projection(rng, grid.shape)
    return (lambda: _scalar(window_msa(grid, attn, 2, True), projection)), _with_params(attn, "attn", {"grid": grid})


def _patch_merge(rng: np.random.Generator) -> Instance:
    merge = randomize(PatchMerge(3, rng), rng)
    grid = _input(rng, 3, 4, 4)
    projection = _projection(rng, (6, 2, 2))
    return (lambda: _scalar(patch_merge(grid, merge), projection)), _with_params(merge, "merge", {"grid": grid})


def _encode_conv(rng: np.random.Generator) -> Instance:
    conv = randomize(ConvStem(ConvStemConfig(stem_channels=3, out_channels=4), rng), rng)
    image = _input(rng, 3, 8, 8)
    projection = _projection(rng, (4, 2, 2))
    return (lambda: _scalar(encode_conv(image, conv), projection)), _with_params(conv, "conv", {"image": image})


def _deform_self(rng: np.random.Generator) -> Instance:
    lvmap = LevelIndexMap(LEVEL_SIZES)
    attn = randomize(DeformAttention(4, 2, len(LEVEL_SIZES), 2, rng), rng)
    x = _input(rng, lvmap.num_rows, 4)
    embed = parameter(rng.normal(size=(len(LEVEL_SIZES), 4)))
    projection = _projection(rng, x.shape)
    return (
        lambda: _scalar(deform_self_attention(x, lvmap, embed, attn), projection),
        _with_params(attn, "dsa", {"x": x, "level_embed": embed}),
    )


def _deform_cross(rng: np.random.Generator) -> Instance:
    lvmap = LevelIndexMap(LEVEL_SIZES)
    attn = randomize(CrossDeformAttention(4, 2, len(LEVEL_SIZES), 2, rng), rng)
    queries = _input(rng, 3, 4)
    x_hat = parameter(rng.normal(size=(lvmap.num_rows, 4)))
    projection = _projection(rng, queries.shape)
    return (
        lambda: _scalar(deform_cross_attention(queries, x_hat, lvmap, attn), projection),
        _with_params(attn, "dca", {"queries": queries, "x_hat": x_hat}),
    )


def _hahi_forward(rng: np.random.Generator) -> Instance:
    channels = [4, 8]
    cfg = HahiConfig(channels=4, attention=DeformAttnConfig(num_heads=2, num_points=2))
    neck = randomize(Hahi(cfg, channels, rng, g_channels=3), rng)
    levels = _pyramid(rng, channels)
    g = _input(rng, 3, 4, 4)
    projections = [_projection(rng, level.shape) for level in levels] + [_projection(rng, g.shape)]

    def objective() -> Tensor:
        fused, g_o = hahi_forward(FeaturePyramid(levels), g, neck)
        total = _scalar(g_o, projections[-1])
        for level, projection in zip(fused, projections):
            total = total + _scalar(level, projection)
        return total

    extra = {f"level{n}": level for n, level in enumerate(levels)}
    extra["g"] = g
    return objective, _with_params(neck, "hahi", extra)


def _decode(rng: np.random.Generator) -> Instance:
    channels = [4, 8]
    decoder = randomize(Decoder(DecoderConfig(head_channels=2), channels, rng, g_channels=3), rng)
    levels = _pyramid(rng, channels)
    g = _input(rng, 3, 4, 4)
    projection = _projection(rng, (1, 8, 8))
    extra = {f"level{n}": level for n, level in enumerate(levels)}
    extra["g"] = g
    return (
        lambda: _scalar(decode(FeaturePyramid(levels), g, decoder), projection),
        _with_params(decoder, "decoder", extra),
    )


def _silog(rng: np.random.Generator) -> Instance:
    log_pred = parameter(rng.normal(size=(4, 4)), name="log_pred")
    gt_values = np.exp(rng.normal(size=(4, 4)))
    valid = rng.random((4, 4)) > 0.25
    valid[0, 0] = True
    gt = DepthMap(values=gt_values, valid=valid)
    return (lambda: silog_loss(DepthMap(values=log_pred.exp()), gt)), {"log_pred": log_pred}


CASES: List[GradCheckCase] = [
    GradCheckCase("transformer_layer", _transformer_layer),
    GradCheckCase("window_msa", _window_msa),
    GradCheckCase("patch_merge", _patch_merge),
    GradCheckCase("encode_conv", _encode_conv),
    GradCheckCase("deform_self_attention", _deform_self),
    GradCheckCase("deform_cross_attention", _deform_cross),
    GradCheckCase("hahi_forward", _hahi_forward),
    GradCheckCase("decode", _decode),
    GradCheckCase("silog_loss", _silog),
]


def case_names() -> List[str]:
    return [case.name for case in CASES]


def run_case(case: GradCheckCase, seed: int, max_entries: Optional[int] = ENTRIES_PER_TENSOR) -> CaseResult:
    rng = np.random.default_rng(seed)
    objective, params = case.build(rng)
    report = finite_diff_check(objective, params, max_entries=max_entries, seed=seed)
    level = logging.INFO if report.passed else logging.WARNING
    logger.log(level, f"{case.name} seed {seed}: max relative error {report.max_error:.2e} "
                      f"({'pass' if report.passed else 'FAIL'})")
    return CaseResult(case=case.name, seed=seed, report=report)


def run_suite(
    seeds: Sequence[int] = DEFAULT_SEEDS,
    names: Optional[Sequence[str]] = None,
    max_entries: Optional[int] = ENTRIES_PER_TENSOR,
) -> SuiteResult:
    """
    Run the gradient checks.

    Args:
        seeds: One random instance per seed and case
        names: Restrict to these cases (default: all)
        max_entries: Entries compared per tensor; None compares all

    Returns:
        SuiteResult: Every case/seed report

    Raises:
        ValueError: For an unknown case name
    """
    selected = CASES
    if names:
        unknown = sorted(set(names) - set(case_names()))
        if unknown:
            raise ValueError(f"unknown gradcheck cases {unknown}; choose from {case_names()}")
        selected = [case for case in CASES if case.name in names]

    start = time.perf_counter()
    results = [run_case(case, seed, max_entries) for case in selected for seed in seeds]
    suite = SuiteResult(results=results, seconds=time.perf_counter() - start)
    logger.info(f"Gradient suite: {len(results) - len(suite.failures())}/{len(results)} passed "
                f"in {suite.seconds:.1f}s")
    return suite
