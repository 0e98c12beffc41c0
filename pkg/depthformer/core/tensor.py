"""
Dense float64 tensors with reverse-mode differentiation.

A `Tensor` wraps a NumPy array. Every differentiable operation is a
`Function` subclass whose `apply` records the inputs on the output tensor;
`backprop` walks that record in reverse topological order.
"""
from __future__ import annotations

from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]

DTYPE = np.float64


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """
    Sum out broadcast dimensions so that `grad` matches `shape`.

    Args:
        grad: Gradient with the broadcast (output) shape
        shape: Shape of the operand before broadcasting

    Returns:
        np.ndarray: Gradient reduced to `shape`
    """
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for dim, extent in enumerate(shape):
        if extent == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward` on raw arrays and `backward`, which maps
    the gradient of the output to one gradient per input (None for inputs
    that are not differentiable).
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs: Any, **kwargs: Any) -> "Tensor":
        """
        Run the forward pass and record the operation on the result.

        Args:
            *inputs: Tensors (or array-likes, wrapped as constants)
            **kwargs: Non-differentiable arguments forwarded to `forward`

        Returns:
            Tensor: Output tensor
        """
        tensors = tuple(as_tensor(x) for x in inputs)
        fn = cls(*tensors)
        out = fn.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = any(t.requires_grad for t in tensors)
        return Tensor._wrap(out, requires_grad=requires_grad, ctx=fn if requires_grad else None)


class Tensor:
    """
    A dense row-major array of 64-bit reals.

    Tensors have value semantics: constructing one copies its input, and
    operations never modify their operands.
    """

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._ctx: Optional[Function] = None

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool = False, ctx: Optional[Function] = None) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(array, dtype=DTYPE)
        out.requires_grad = requires_grad
        out.name = None
        out.grad = None
        out._ctx = ctx
        return out

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    # Arithmetic

    def __add__(self, other: Any) -> "Tensor":
        return ops.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return ops.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return ops.mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        return ops.div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return ops.div(other, self)

    def __neg__(self) -> "Tensor":
        return ops.neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        return ops.power(self, exponent)

    def __matmul__(self, other: Any) -> "Tensor":
        return ops.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return ops.getitem(self, index)

    # Reductions and shape

    def sum(self, axis: Union[int, Tuple[int, ...], None] = None, keepdims: bool = False) -> "Tensor":
        return ops.reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Union[int, Tuple[int, ...], None] = None, keepdims: bool = False) -> "Tensor":
        return ops.reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    # Elementwise

    def exp(self) -> "Tensor":
        return ops.exp(self)

    def log(self) -> "Tensor":
        return ops.log(self)

    def sqrt(self) -> "Tensor":
        return ops.sqrt(self)

    def sigmoid(self) -> "Tensor":
        return ops.sigmoid(self)

    def backward(self, seed: Optional[ArrayLike] = None) -> None:
        """
        Accumulate gradients into `.grad` of every reachable leaf that
        requires them.

        Args:
            seed: Gradient of the final objective with respect to this tensor
                (default: ones, valid only for single-element tensors)
        """
        for leaf, grad in _propagate(self, seed).items():
            if leaf.grad is None:
                leaf.grad = grad.copy()
            else:
                leaf.grad = leaf.grad + grad


def as_tensor(value: Any) -> Tensor:
    """Wrap array-likes as constant tensors; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.array(value, dtype=DTYPE))


def parameter(data: ArrayLike, name: Optional[str] = None) -> Tensor:
    """Create a leaf tensor that requires gradients."""
    return Tensor(data, requires_grad=True, name=name)


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def _propagate(output: Tensor, seed: Optional[ArrayLike]) -> Dict[Tensor, np.ndarray]:
    if seed is None:
        if output.size != 1:
            raise ValueError(
                f"backprop needs a seed for non-scalar output of shape {output.shape}"
            )
        seed_array = np.ones_like(output.data)
    else:
        seed_array = np.broadcast_to(np.asarray(seed, dtype=DTYPE), output.shape).copy()

    leaf_grads: Dict[Tensor, np.ndarray] = {}
    if not output.requires_grad:
        return leaf_grads

    pending: Dict[int, np.ndarray] = {id(output): seed_array}
    for node in reversed(_topological_order(output)):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._ctx is None:
            leaf_grads[node] = grad
            continue
        input_grads = node._ctx.backward(grad)
        for parent, parent_grad in zip(node._ctx.inputs, input_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + parent_grad
            else:
                pending[key] = parent_grad
    return leaf_grads


def backprop(
    output: Tensor,
    leaves: Sequence[Tensor],
    seed: Optional[ArrayLike] = None,
) -> List[np.ndarray]:
    """
    Reverse-mode gradients of `output` with respect to `leaves`.

    Gradients from fan-out accumulate by summation. A leaf the output does
    not depend on receives zeros.

    Args:
        output: Result of a composed graph
        leaves: Tensors to differentiate with respect to
        seed: Output gradient (default: ones for a single-element output)

    Returns:
        List[np.ndarray]: One gradient per leaf, shaped like the leaf
    """
    grads = _propagate(output, seed)
    return [grads[leaf].copy() if leaf in grads else np.zeros_like(leaf.data) for leaf in leaves]


from depthformer.core import ops  # noqa: E402
