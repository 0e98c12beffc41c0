"""
Differentiable tensor operations.

Coordinate convention shared by every module: x is the column, y is the row,
and (0, 0) is the center of the top-left pixel.
"""
import math
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from depthformer.config import settings
from depthformer.core.tensor import Function, Tensor, as_tensor, unbroadcast
from depthformer.exceptions import ShapeError

Axis = Union[int, Tuple[int, ...], None]

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


# Elementwise arithmetic

class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return unbroadcast(grad * self.b, self.a.shape), unbroadcast(grad * self.a, self.b.shape)


class Div(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        ga = grad / self.b
        gb = -grad * self.a / (self.b * self.b)
        return unbroadcast(ga, self.a.shape), unbroadcast(gb, self.b.shape)


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Power(Function):
    def forward(self, a, exponent: float):
        self.a, self.exponent = a, exponent
        return a ** exponent

    def backward(self, grad):
        return (grad * self.exponent * self.a ** (self.exponent - 1),)


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, a):
        self.a = a
        return np.log(a)

    def backward(self, grad):
        return (grad / self.a,)


class Sqrt(Function):
    def forward(self, a):
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad):
        # zero subgradient at the origin
        safe = np.where(self.out > 0, self.out, 1.0)
        return (np.where(self.out > 0, grad / (2.0 * safe), 0.0),)


class Sigmoid(Function):
    def forward(self, a):
        self.out = 0.5 * (1.0 + np.tanh(0.5 * a))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Gelu(Function):
    """Tanh approximation of GELU."""

    def forward(self, a):
        self.a = a
        self.t = np.tanh(_GELU_C * (a + _GELU_K * a ** 3))
        return 0.5 * a * (1.0 + self.t)

    def backward(self, grad):
        a, t = self.a, self.t
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_K * a * a)
        return (grad * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * dinner),)


class ClampMin(Function):
    def forward(self, a, minimum: float):
        self.mask = a > minimum
        return np.where(self.mask, a, minimum)

    def backward(self, grad):
        return (grad * self.mask,)


# Reductions and shape

def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


class Sum(Function):
    def forward(self, a, axis: Axis = None, keepdims: bool = False):
        self.shape = a.shape
        self.axes = _normalize_axes(axis, a.ndim)
        self.keepdims = keepdims
        return np.sum(a, axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Reshape(Function):
    def forward(self, a, shape: Tuple[int, ...]):
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, a, axes: Optional[Tuple[int, ...]] = None):
        self.axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
        return np.transpose(a, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):
    def forward(self, a, index: Any):
        self.shape = a.shape
        self.index = index
        return a[index]

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=grad.dtype)
        np.add.at(out, self.index, grad)
        return (out,)


class Concat(Function):
    def forward(self, *arrays, axis: int = 0):
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))


class Roll(Function):
    def forward(self, a, shift: Tuple[int, ...], axes: Tuple[int, ...]):
        self.shift, self.axes = shift, axes
        return np.roll(a, shift, axis=axes)

    def backward(self, grad):
        return (np.roll(grad, tuple(-s for s in self.shift), axis=self.axes),)


class UpsampleNearest(Function):
    """Nearest-neighbour upsampling of the last two axes by an integer factor."""

    def forward(self, a, factor: int = 2):
        self.factor = factor
        return a.repeat(factor, axis=-2).repeat(factor, axis=-1)

    def backward(self, grad):
        f = self.factor
        *lead, h, w = grad.shape
        return (grad.reshape(*lead, h // f, f, w // f, f).sum(axis=(-3, -1)),)


# Linear algebra and normalization

class MatMul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        ga = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        gb = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return unbroadcast(ga, self.a.shape), unbroadcast(gb, self.b.shape)


class Softmax(Function):
    def forward(self, a, axis: int = -1):
        self.axis = axis
        shifted = a - np.max(a, axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / np.sum(e, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        inner = np.sum(grad * self.out, axis=self.axis, keepdims=True)
        return (self.out * (grad - inner),)


class LayerNorm(Function):
    def forward(self, x, gamma, beta, eps: float):
        mean = x.mean(axis=-1, keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.xhat = centered * self.inv_std
        self.gamma = gamma
        return self.xhat * gamma + beta

    def backward(self, grad):
        n = self.xhat.shape[-1]
        lead = tuple(range(grad.ndim - 1))
        dgamma = np.sum(grad * self.xhat, axis=lead)
        dbeta = np.sum(grad, axis=lead)
        dxhat = grad * self.gamma
        dx = (self.inv_std / n) * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - self.xhat * (dxhat * self.xhat).sum(axis=-1, keepdims=True)
        )
        return dx, dgamma, dbeta


class Conv2d(Function):
    """Zero-padded 2-D cross-correlation of a C×H×W map."""

    def forward(self, x, kernel, stride: int = 1, pad: int = 0):
        self.x_shape = x.shape
        self.kernel = kernel
        self.stride, self.pad = stride, pad
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
        kh, kw = kernel.shape[2:]
        self.padded_shape = xp.shape
        self.windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
        return np.einsum("chwij,ocij->ohw", self.windows, kernel, optimize=True)

    def backward(self, grad):
        s = self.stride
        kh, kw = self.kernel.shape[2:]
        gk = np.einsum("ohw,chwij->ocij", grad, self.windows, optimize=True)
        gwin = np.einsum("ohw,ocij->chwij", grad, self.kernel, optimize=True)
        ho, wo = grad.shape[1:]
        gxp = np.zeros(self.padded_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += gwin[:, :, :, i, j]
        p = self.pad
        gx = gxp[:, p:p + self.x_shape[1], p:p + self.x_shape[2]] if p else gxp
        return gx, gk


class BilinearSample(Function):
    """
    Bilinear sampling of (B, C, H, W) maps at (B, P, 2) pixel coordinates.

    Out-of-range neighbours contribute zero.
    """

    def forward(self, value, points):
        b, c, h, w = value.shape
        self.value_shape = value.shape
        x, y = points[..., 0], points[..., 1]
        x0, y0 = np.floor(x), np.floor(y)
        fx, fy = x - x0, y - y0
        x0, y0 = x0.astype(np.int64), y0.astype(np.int64)
        flat = value.reshape(b, c, h * w)

        self.corners = []
        out = np.zeros((b, c, points.shape[1]), dtype=value.dtype)
        for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
            xi, yi = x0 + dx, y0 + dy
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            idx = np.clip(yi, 0, h - 1) * w + np.clip(xi, 0, w - 1)
            wx = fx if dx else 1.0 - fx
            wy = fy if dy else 1.0 - fy
            gathered = np.take_along_axis(flat, np.broadcast_to(idx[:, None, :], (b, c, idx.shape[1])), axis=2)
            gathered = gathered * valid[:, None, :]
            out += gathered * (wx * wy)[:, None, :]
            # d(weight)/dx and d(weight)/dy for this corner
            dwx = (1.0 if dx else -1.0) * wy
            dwy = (1.0 if dy else -1.0) * wx
            self.corners.append((idx, valid, wx * wy, dwx, dwy, gathered))
        return out

    def backward(self, grad):
        b, c, h, w = self.value_shape
        p = grad.shape[2]
        gvalue = np.zeros((c, b * h * w), dtype=grad.dtype)
        gpoints = np.zeros((b, p, 2), dtype=grad.dtype)
        offsets = (np.arange(b) * h * w)[:, None]
        for idx, valid, weight, dwx, dwy, gathered in self.corners:
            contrib = grad * (weight * valid)[:, None, :]
            flat_idx = (idx + offsets).reshape(-1)
            np.add.at(gvalue, (slice(None), flat_idx), contrib.transpose(1, 0, 2).reshape(c, -1))
            dot = np.sum(grad * gathered, axis=1)
            gpoints[..., 0] += dot * dwx
            gpoints[..., 1] += dot * dwy
        gvalue = gvalue.reshape(c, b, h, w).transpose(1, 0, 2, 3)
        return gvalue, gpoints


# Functional API

def add(a: Any, b: Any) -> Tensor:
    return Add.apply(a, b)


def sub(a: Any, b: Any) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Any, b: Any) -> Tensor:
    return Mul.apply(a, b)


def div(a: Any, b: Any) -> Tensor:
    return Div.apply(a, b)


def neg(a: Any) -> Tensor:
    return Neg.apply(a)


def power(a: Any, exponent: float) -> Tensor:
    return Power.apply(a, exponent=float(exponent))


def exp(a: Any) -> Tensor:
    return Exp.apply(a)


def log(a: Any) -> Tensor:
    return Log.apply(a)


def sqrt(a: Any) -> Tensor:
    return Sqrt.apply(a)


def sigmoid(a: Any) -> Tensor:
    return Sigmoid.apply(a)


def gelu(a: Any) -> Tensor:
    return Gelu.apply(a)


def clamp_min(a: Any, minimum: float) -> Tensor:
    return ClampMin.apply(a, minimum=float(minimum))


def reduce_sum(a: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def reduce_mean(a: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = int(np.prod([a.shape[i] for i in _normalize_axes(axis, a.ndim)]))
    return reduce_sum(a, axis=axis, keepdims=keepdims) / float(count)


def reshape(a: Any, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def transpose(a: Any, axes: Optional[Sequence[int]] = None) -> Tensor:
    return Transpose.apply(a, axes=tuple(axes) if axes is not None else None)


def getitem(a: Any, index: Any) -> Tensor:
    return GetItem.apply(a, index=index)


def concat(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def roll(a: Any, shift: Sequence[int], axes: Sequence[int]) -> Tensor:
    return Roll.apply(a, shift=tuple(shift), axes=tuple(axes))


def upsample_nearest(a: Any, factor: int = 2) -> Tensor:
    return UpsampleNearest.apply(a, factor=factor)


def matmul(a: Any, b: Any) -> Tensor:
    """
    Matrix product over the last two axes (leading axes broadcast).

    Args:
        a: Tensor of shape (..., M, K)
        b: Tensor of shape (..., K, N)

    Returns:
        Tensor: Product of shape (..., M, N)
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return MatMul.apply(a, b)


def softmax(x: Any, axis: int = -1) -> Tensor:
    """
    Numerically stable softmax along one axis.

    Args:
        x: Input tensor
        axis: Axis along which slices sum to one

    Returns:
        Tensor: Positive tensor of the same shape
    """
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for rank {x.ndim}")
    return Softmax.apply(x, axis=axis)


def layer_norm(x: Any, gamma: Any, beta: Any, eps: Optional[float] = None) -> Tensor:
    """
    Normalize the last axis to zero mean and unit variance, then apply gamma and beta.

    Args:
        x: Tensor of shape (..., C)
        gamma: Scale of shape (C,)
        beta: Shift of shape (C,)
        eps: Variance floor (default: settings.LAYER_NORM_EPS)

    Returns:
        Tensor: Normalized tensor of the same shape as x
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm parameters {gamma.shape}/{beta.shape} do not match last extent {c}")
    if eps is None:
        eps = settings.LAYER_NORM_EPS
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    return LayerNorm.apply(x, gamma, beta, eps=float(eps))


def conv2d(x: Any, kernel: Any, bias: Any = None, stride: int = 1, pad: int = 0) -> Tensor:
    """
    2-D convolution (cross-correlation) with zero padding.

    Args:
        x: Input of shape (Cin, H, W)
        kernel: Weights of shape (Cout, Cin, kh, kw)
        bias: Optional bias of shape (Cout,)
        stride: Step between output positions
        pad: Zero padding on every side

    Returns:
        Tensor: Output of shape (Cout, H', W'), H' = (H + 2 pad - kh) // stride + 1
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects a C×H×W input and a 4-D kernel, got {x.shape} and {kernel.shape}")
    if kernel.shape[1] != x.shape[0]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape}, kernel {kernel.shape}")
    kh, kw = kernel.shape[2:]
    if kh > x.shape[1] + 2 * pad or kw > x.shape[2] + 2 * pad:
        raise ShapeError(
            f"conv2d kernel {kh}x{kw} larger than padded input {x.shape[1] + 2 * pad}x{x.shape[2] + 2 * pad}"
        )
    if stride < 1:
        raise ValueError(f"conv2d stride must be positive, got {stride}")
    out = Conv2d.apply(x, kernel, stride=stride, pad=pad)
    if bias is not None:
        out = out + reshape(bias, (-1, 1, 1))
    return out


def bilinear_sample(value: Any, points: Any) -> Tensor:
    """
    Sample feature maps at fractional pixel coordinates.

    Points are (x, y) pairs in pixel units; neighbours outside the map
    contribute zero. Differentiable in both the map and the points.

    Args:
        value: Map of shape (C, H, W), or (B, C, H, W) for a batch
        points: Coordinates of shape (P, 2), or (B, P, 2) for a batch

    Returns:
        Tensor: Samples of shape (C, P), or (B, C, P)
    """
    value, points = as_tensor(value), as_tensor(points)
    batched = value.ndim == 4
    if not batched:
        if value.ndim != 3 or points.ndim != 2:
            raise ShapeError(f"bilinear_sample expects (C,H,W) and (P,2), got {value.shape} and {points.shape}")
        value = reshape(value, (1,) + value.shape)
        points = reshape(points, (1,) + points.shape)
    if points.shape[-1] != 2 or points.shape[0] != value.shape[0]:
        raise ShapeError(f"bilinear_sample points {points.shape} incompatible with map {value.shape}")
    out = BilinearSample.apply(value, points)
    return out if batched else reshape(out, out.shape[1:])


def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """
    Linear-interpolation matrix mapping n_in samples to n_out samples.

    Uses the align-corners-false convention with edge clamping, so rows are
    convex combinations of the inputs.

    Args:
        n_in: Source extent
        n_out: Target extent

    Returns:
        np.ndarray: Matrix of shape (n_out, n_in)
    """
    matrix = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1)
        i0 = int(math.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        frac = src - i0
        matrix[i, i0] += 1.0 - frac
        matrix[i, i1] += frac
    return matrix


def resize_bilinear(x: Any, size: Tuple[int, int]) -> Tensor:
    """
    Bilinearly resize the last two axes of x to `size`.

    Args:
        x: Tensor of shape (..., H, W)
        size: Target (H', W')

    Returns:
        Tensor: Resized tensor of shape (..., H', W')
    """
    x = as_tensor(x)
    h, w = x.shape[-2:]
    if (h, w) == tuple(size):
        return x
    rows = Tensor._wrap(resize_matrix(h, size[0]))
    cols = Tensor._wrap(resize_matrix(w, size[1]).T.copy())
    return matmul(matmul(rows, x), cols)


def linear(x: Any, weight: Any, bias: Any = None) -> Tensor:
    """Affine map x @ weight + bias over the last axis."""
    out = matmul(x, weight)
    if bias is not None:
        out = out + bias
    return out


def stack_rows(tensors: List[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along rows."""
    return concat(tensors, axis=0)
