"""
Tensor core: dense float64 tensors, differentiable operations and the
finite-difference gradient oracle.
"""
from depthformer.core.tensor import Function, Tensor, as_tensor, backprop, parameter
from depthformer.core import ops
from depthformer.core.gradcheck import GradCheckReport, finite_diff_check

__all__ = [
    'Function', 'Tensor', 'as_tensor', 'backprop', 'parameter',
    'ops',
    'GradCheckReport', 'finite_diff_check',
]
