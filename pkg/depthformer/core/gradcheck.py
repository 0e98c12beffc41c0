"""
Central-difference gradient oracle.

Every backward pass in the package is verified against this check.
"""
import logging
from typing import Callable, Dict, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from depthformer.config import settings
from depthformer.core.tensor import Tensor, backprop

logger = logging.getLogger(__name__)

TensorSet = Union[Tensor, Sequence[Tensor], Mapping[str, Tensor]]


class GradCheckReport(BaseModel):
    """Outcome of a finite-difference comparison."""
    errors: Dict[str, float] = Field(default_factory=dict, description="Max relative error per parameter")
    checked: Dict[str, int] = Field(default_factory=dict, description="Entries compared per parameter")
    tolerance: float
    passed: bool
    failure: Optional[str] = Field(None, description="Why the check could not be completed")

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def _named(params: TensorSet) -> Dict[str, Tensor]:
    if isinstance(params, Tensor):
        return {params.name or "x": params}
    if isinstance(params, Mapping):
        return dict(params)
    return {(t.name or f"arg{i}"): t for i, t in enumerate(params)}


def relative_error(analytic: np.ndarray, numeric: np.ndarray, abs_floor: float) -> float:
    """
    Max absolute difference scaled by the larger gradient magnitude.

    Args:
        analytic: Backprop gradient
        numeric: Central-difference estimate at the same entries
        abs_floor: Lower bound of the denominator

    Returns:
        float: max|a - n| / max(max|a|, max|n|, abs_floor)
    """
    if analytic.size == 0:
        return 0.0
    denom = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), abs_floor)
    return float(np.max(np.abs(analytic - numeric))) / denom


def finite_diff_check(
    f: Callable[[], Tensor],
    params: TensorSet,
    h: Optional[float] = None,
    tolerance: Optional[float] = None,
    abs_floor: Optional[float] = None,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare backprop gradients of a scalar function with central differences.

    The function is re-evaluated after perturbing one entry of one parameter
    at a time by ±h; the parameter is restored afterwards.

    Args:
        f: Zero-argument callable returning a single-element tensor that
            depends on `params`
        params: Tensor, sequence of tensors or name → tensor mapping
        h: Perturbation step (default: settings.GRADCHECK_STEP)
        tolerance: Pass threshold on relative error (default: settings.GRADCHECK_TOLERANCE)
        abs_floor: Denominator floor (default: settings.GRADCHECK_ABS_FLOOR)
        max_entries: Compare at most this many randomly chosen entries per parameter
        seed: Seed for entry selection

    Returns:
        GradCheckReport: Per-parameter errors and the pass verdict
    """
    h = settings.GRADCHECK_STEP if h is None else h
    tolerance = settings.GRADCHECK_TOLERANCE if tolerance is None else tolerance
    abs_floor = settings.GRADCHECK_ABS_FLOOR if abs_floor is None else abs_floor
    if h <= 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")

    named = _named(params)
    rng = np.random.default_rng(seed)

    out = f()
    if out.size != 1:
        raise ValueError(f"finite_diff_check needs a scalar function, got output shape {out.shape}")
    analytic = dict(zip(named, backprop(out, list(named.values()))))

    errors: Dict[str, float] = {}
    checked: Dict[str, int] = {}
    for name, tensor in named.items():
        if not tensor.data.flags.c_contiguous:
            tensor.data = np.ascontiguousarray(tensor.data)
        flat = tensor.data.reshape(-1)
        if max_entries is not None and flat.size > max_entries:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        else:
            indices = np.arange(flat.size)

        numeric = np.empty(indices.size)
        for k, index in enumerate(indices):
            original = flat[index]
            try:
                flat[index] = original + h
                f_plus = f().item()
                flat[index] = original - h
                f_minus = f().item()
            finally:
                flat[index] = original
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                message = f"non-finite evaluation perturbing {name}[{int(index)}]"
                logger.warning(message)
                return GradCheckReport(errors=errors, checked=checked, tolerance=tolerance,
                                       passed=False, failure=message)
            numeric[k] = (f_plus - f_minus) / (2.0 * h)

        errors[name] = relative_error(analytic[name].reshape(-1)[indices], numeric, abs_floor)
        checked[name] = int(indices.size)

    passed = all(err <= tolerance for err in errors.values())
    if not passed:
        worst = max(errors, key=errors.get)
        logger.info(f"Gradient check failed: {worst} relative error {errors[worst]:.3e}")
    return GradCheckReport(errors=errors, checked=checked, tolerance=tolerance, passed=passed)
