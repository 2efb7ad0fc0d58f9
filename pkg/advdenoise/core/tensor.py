# advdenoise/core/tensor.py
"""Dense tensors with reverse-mode differentiation.

Only the operations the denoiser and the discriminator need are provided.
Tensors are laid out as ``N x C x H x W`` for images and
``out x in x kH x kW`` for convolution weights. Op results are never
mutated; gradients accumulate additively into ``Tensor.grad``.
"""

import contextlib
import threading
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from advdenoise.utils.errors import ShapeError, ValidationError
from advdenoise.utils.validation import validate_drop_probability

BCE_EPSILON = 1e-7

_SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_default_dtype = np.dtype(np.float32)
_grad_state = threading.local()


def get_default_dtype() -> np.dtype:
    return _default_dtype


def set_default_dtype(dtype) -> None:
    """Selects 32-bit (training) or 64-bit (verification) tensors."""
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in _SUPPORTED_DTYPES:
        raise ValidationError(f"Unsupported tensor dtype: {dtype}")
    _default_dtype = dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switches the default dtype of newly created tensors."""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disables graph recording in the current thread."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """An n-dimensional array that records how it was computed."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.array(data, dtype=dtype or _default_dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @classmethod
    def _wrap(cls, data: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Backpropagates from this tensor through the recorded graph."""
        if grad is None:
            if self.size != 1:
                raise ShapeError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.dtype)
        if grad.shape != self.shape:
            raise ShapeError(f"Seed gradient shape {grad.shape} != {self.shape}")

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, neg(other))
        return add(self, -float(other))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return scale(self, 1.0 / other)

    def __getitem__(self, index):
        return take(self, index)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


class Parameter(Tensor):
    """A trainable leaf tensor owned by a model."""

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.trainable = True

    def __repr__(self):
        return f"Parameter(name={self.name!r}, shape={self.shape}, trainable={self.trainable})"


TensorLike = Union[Tensor, np.ndarray, float]


def as_tensor(value: TensorLike) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor._wrap(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# Elementwise arithmetic

def add(a: TensorLike, b: TensorLike) -> Tensor:
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        c = float(b)

        def backward(g):
            if a.requires_grad:
                a._accumulate(g)

        return _result(a.data + np.asarray(c, dtype=a.dtype), (a,), backward)
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape(a, b, "add")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _result(a.data + b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def scale(a: Tensor, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * factor)

    return _result(a.data * np.asarray(factor, dtype=a.dtype), (a,), backward)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two equally shaped tensors."""
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape(a, b, "hadamard")
    a_data, b_data = a.data, b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b_data)
        if b.requires_grad:
            b._accumulate(g * a_data)

    return _result(a_data * b_data, (a, b), backward)


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    data = a.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / data)

    return _result(np.log(data), (a,), backward)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clips values to [lo, hi]; gradient passes only inside the interval."""
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _result(np.clip(a.data, lo, hi), (a,), backward)


# Activations

def relu(x: Tensor) -> Tensor:
    """max(x, 0) with the subgradient at 0 fixed to 0."""
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _result(np.where(mask, x.data, 0).astype(x.dtype), (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, evaluated without overflow for either sign.

    Inputs above about 17 in float32 (37 in float64) round to exactly 1;
    negative inputs reach exactly 0 only at underflow (about -104 in float32).
    """
    x = as_tensor(x)
    data = x.data
    out = np.empty_like(data)
    positive = data >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-data[positive]))
    exp_x = np.exp(data[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out * (1.0 - out))

    return _result(out, (x,), backward)


def dropout(x: Tensor, drop_prob: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) at train time."""
    validate_drop_probability(drop_prob)
    x = as_tensor(x)
    if not training or drop_prob == 0.0:
        return x
    if rng is None:
        raise ValidationError("dropout in training mode needs a random generator")
    keep = 1.0 - drop_prob
    mask = (rng.random(x.shape) >= drop_prob).astype(x.dtype) / np.asarray(keep, dtype=x.dtype)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _result(x.data * mask, (x,), backward)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            x._accumulate(out * (g - (g * out).sum(axis=-1, keepdims=True)))

    return _result(out, (x,), backward)


# Shape manipulation and reductions

def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    original = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"Cannot reshape {original} to {shape}") from e

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(original))

    return _result(data, (x,), backward)


def take(x: Tensor, index) -> Tensor:
    """Basic indexing (integers and slices) with a scatter backward."""
    x = as_tensor(x)
    data = x.data[index]

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[index] += g
            x._accumulate(full)

    return _result(np.array(data), (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, bounds, axis=axis)):
            if t.requires_grad:
                t._accumulate(part)

    return _result(data, tensors, backward)


def tensor_sum(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g, x.shape))

    return _result(np.asarray(x.data.sum(), dtype=x.dtype), (x,), backward)


def mean(x: Tensor) -> Tensor:
    return scale(tensor_sum(x), 1.0 / as_tensor(x).size)


def global_avg_pool(x: Tensor) -> Tensor:
    """N x C x H x W -> N x C."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects N x C x H x W, got {x.shape}")
    n, c, h, w = x.shape

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g[:, :, None, None] / (h * w), x.shape))

    return _result(x.data.mean(axis=(2, 3)), (x,), backward)


# Layers

def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Fully connected map of N x in rows by an out x in weight."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    x_data, w_data = x.data, weight.data
    out = x_data @ w_data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ w_data)
        if weight.requires_grad:
            weight._accumulate(g.T @ x_data)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, backward)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: str = "same",
) -> Tensor:
    """2-D cross-correlation with zero "same" padding.

    ``x`` is N x C_in x H x W (a C_in x H x W input is treated as a batch of
    one and returned without the batch axis). With stride 1 the output keeps
    the input's spatial size.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim == 3:
        batched = conv2d(reshape(x, (1,) + x.shape), weight, bias, stride, padding)
        return reshape(batched, batched.shape[1:])
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    out_ch, in_ch, kh, kw = weight.shape
    if in_ch != c:
        raise ShapeError(f"conv2d: input has {c} channels but weight expects {in_ch}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValidationError(f"conv2d needs odd kernel sizes, got {kh}x{kw}")
    if padding != "same":
        raise ValidationError(f"Unsupported padding mode: {padding!r}")
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    if bias is not None and bias.shape != (out_ch,):
        raise ShapeError(f"conv2d: bias {bias.shape} does not match {out_ch} output channels")

    ph, pw = kh // 2, kw // 2
    ho, wo = (h - 1) // stride + 1, (w - 1) // stride + 1
    w_data = weight.data
    pointwise = kh == 1 and kw == 1

    if pointwise:
        x_view = x.data[:, :, ::stride, ::stride]
        out = np.tensordot(w_data[:, :, 0, 0], x_view, axes=([1], [1])).transpose(1, 0, 2, 3)
        windows = None
    else:
        padded = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        out = np.tensordot(windows, w_data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out, dtype=np.result_type(x.dtype, w_data.dtype))

    def backward(g):
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))
        if weight.requires_grad:
            if pointwise:
                gw = np.tensordot(g, x_view, axes=([0, 2, 3], [0, 2, 3]))
                weight._accumulate(gw[:, :, None, None])
            else:
                weight._accumulate(np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3])))
        if x.requires_grad:
            if pointwise and stride == 1:
                x._accumulate(np.tensordot(w_data[:, :, 0, 0], g, axes=([0], [1])).transpose(1, 0, 2, 3))
                return
            grad_padded = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    contribution = np.tensordot(w_data[:, :, i, j], g, axes=([0], [1]))
                    grad_padded[
                        :, :,
                        i:i + stride * (ho - 1) + 1:stride,
                        j:j + stride * (wo - 1) + 1:stride,
                    ] += contribution.transpose(1, 0, 2, 3)
            x._accumulate(grad_padded[:, :, ph:ph + h, pw:pw + w])

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, backward)


# Losses

def mse_loss(pred: Tensor, target: TensorLike) -> Tensor:
    """Sum of squared differences divided by the element count."""
    pred, target = as_tensor(pred), as_tensor(target)
    _require_same_shape(pred, target, "mse_loss")
    diff = pred.data - target.data
    count = diff.size

    def backward(g):
        factor = g * (2.0 / count)
        if pred.requires_grad:
            pred._accumulate(factor * diff)
        if target.requires_grad:
            target._accumulate(-factor * diff)

    return _result(np.asarray((diff * diff).sum() / count, dtype=diff.dtype), (pred, target), backward)


def bce_loss(prob: Tensor, label) -> Tensor:
    """Mean binary cross entropy; probabilities are clamped to [eps, 1-eps]."""
    prob = as_tensor(prob)
    labels = np.broadcast_to(np.asarray(label, dtype=prob.dtype), prob.shape)
    clipped = np.clip(prob.data, BCE_EPSILON, 1.0 - BCE_EPSILON)
    inside = (prob.data >= BCE_EPSILON) & (prob.data <= 1.0 - BCE_EPSILON)
    count = prob.size
    losses = -(labels * np.log(clipped) + (1.0 - labels) * np.log(1.0 - clipped))

    def backward(g):
        if prob.requires_grad:
            d = -(labels / clipped - (1.0 - labels) / (1.0 - clipped)) / count
            prob._accumulate(g * d * inside)

    return _result(np.asarray(losses.sum() / count, dtype=prob.dtype), (prob,), backward)


def smoothed_power_sum(w: Tensor, p: float, eps: float) -> Tensor:
    """sum((w^2 + eps)^(p/2) - eps^(p/2)), a differentiable stand-in for sum |w|^p."""
    w = as_tensor(w)
    data = w.data
    base = data * data + eps
    value = (np.power(base, p / 2.0) - eps ** (p / 2.0)).sum()

    def backward(g):
        if w.requires_grad:
            w._accumulate(g * p * data * np.power(base, p / 2.0 - 1.0))

    return _result(np.asarray(value, dtype=w.dtype), (w,), backward)
