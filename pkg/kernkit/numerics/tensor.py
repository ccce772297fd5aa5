"""
Dense tensors on a reverse-mode automatic differentiation tape.

Every operation records its output on the :class:`Graph` its inputs belong to.
Nodes are appended in creation order, so insertion order is a topological
order and :func:`backward` is a single reverse sweep.
"""
import contextlib
import logging
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from kernkit.errors import NumericError, ShapeError
from kernkit.numerics.params import ParameterStore

logger = logging.getLogger(__name__)

_FLOAT_MODES = {"float32": np.float32, "float64": np.float64}
_float_mode = "float32"

LAYER_NORM_EPS = 1e-5

BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]
ArrayLike = Union[np.ndarray, float, int, Sequence[float]]


def set_float_mode(mode: str) -> None:
    """
    Select the process-wide float precision for new tensors.

    Args:
        mode: "float32" (training default) or "float64" (verification)
    """
    global _float_mode
    if mode not in _FLOAT_MODES:
        raise ValueError(f"Unknown float mode '{mode}', expected one of {sorted(_FLOAT_MODES)}")
    _float_mode = mode


def get_float_mode() -> str:
    return _float_mode


def get_dtype() -> type:
    return _FLOAT_MODES[_float_mode]


@contextlib.contextmanager
def float_mode(mode: str) -> Iterator[None]:
    """Temporarily switch the float mode."""
    previous = _float_mode
    set_float_mode(mode)
    try:
        yield
    finally:
        set_float_mode(previous)


class Tensor:
    """One node of a :class:`Graph`: an array plus how it was produced."""

    __slots__ = ("graph", "data", "node_id", "op", "inputs", "param_name", "needs_grad", "_backward")

    def __init__(
        self,
        graph: "Graph",
        data: np.ndarray,
        op: str,
        inputs: Tuple["Tensor", ...] = (),
        backward: Optional[BackwardFn] = None,
        param_name: Optional[str] = None,
    ):
        self.graph = graph
        self.data = data
        self.op = op
        self.inputs = inputs
        self.param_name = param_name
        self.needs_grad = param_name is not None or any(t.needs_grad for t in inputs)
        self._backward = backward
        self.node_id = -1

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape}, id={self.node_id})"

    def __add__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


class Graph:
    """
    Record of every operation of one forward pass.

    Parameter leaves are read from the attached :class:`ParameterStore` on
    first use and cached by name.
    """

    def __init__(self, params: Optional[ParameterStore] = None):
        self.params = params
        self.nodes: List[Tensor] = []
        self._leaves: Dict[str, Tensor] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, tensor: Tensor) -> Tensor:
        tensor.node_id = len(self.nodes)
        self.nodes.append(tensor)
        return tensor

    def constant(self, value: ArrayLike) -> Tensor:
        """Add a non-trainable input."""
        data = np.asarray(value, dtype=get_dtype())
        if not np.all(np.isfinite(data)):
            raise NumericError(f"non-finite input of shape {data.shape}")
        return self._record(Tensor(self, data, "constant"))

    def param(self, name: str) -> Tensor:
        """Return the leaf for parameter ``name``, creating it on first use."""
        leaf = self._leaves.get(name)
        if leaf is not None:
            return leaf
        if self.params is None or name not in self.params:
            raise KeyError(f"Unknown parameter '{name}'")
        data = np.asarray(self.params[name], dtype=get_dtype())
        if not np.all(np.isfinite(data)):
            raise NumericError(f"parameter '{name}' holds non-finite values")
        leaf = self._record(Tensor(self, data, "param", param_name=name))
        self._leaves[name] = leaf
        return leaf

    @property
    def parameter_leaves(self) -> Dict[str, Tensor]:
        return dict(self._leaves)


def _graph_of(*items: object) -> Graph:
    graph = None
    for item in items:
        if isinstance(item, Tensor):
            if graph is None:
                graph = item.graph
            elif item.graph is not graph:
                raise ValueError("Tensors from different graphs cannot be combined")
    if graph is None:
        raise ValueError("At least one operand must be a Tensor")
    return graph


def _lift(graph: Graph, value: Union[Tensor, ArrayLike]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return graph.constant(value)


def _emit(graph: Graph, data: np.ndarray, op: str, inputs: Tuple[Tensor, ...],
          backward: BackwardFn) -> Tensor:
    return graph._record(Tensor(graph, data, op, inputs, backward))


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# Elementwise arithmetic

def add(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    graph = _graph_of(a, b)
    a, b = _lift(graph, a), _lift(graph, b)
    _broadcast_shape("add", a, b)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit(graph, a.data + b.data, "add", (a, b), backward)


def sub(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    graph = _graph_of(a, b)
    a, b = _lift(graph, a), _lift(graph, b)
    _broadcast_shape("sub", a, b)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit(graph, a.data - b.data, "sub", (a, b), backward)


def mul(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    graph = _graph_of(a, b)
    a, b = _lift(graph, a), _lift(graph, b)
    _broadcast_shape("mul", a, b)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit(graph, a.data * b.data, "mul", (a, b), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        # subgradient 0 at exactly 0
        return (g * mask,)

    return _emit(x.graph, np.where(mask, x.data, 0).astype(x.data.dtype), "relu", (x,), backward)


# Linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, broadcasting leading axes."""
    graph = _graph_of(a, b)
    a, b = _lift(graph, a), _lift(graph, b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g: np.ndarray) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.needs_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.needs_grad else None
        return ga, gb

    return _emit(graph, a.data @ b.data, "matmul", (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight + bias``."""
    return add(matmul(x, weight), bias)


# Normalisation and activations over the last axis

def softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit(x.graph, y, "softmax", (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """
    Normalise the last axis to zero mean and unit variance, then scale and shift.

    A constant row normalises to all zeros because ``eps`` sits inside the
    square root.
    """
    d = x.shape[-1] if x.data.ndim else 0
    if d < 2:
        raise ShapeError(f"layer_norm: last dimension must be >= 2, got shape {x.shape}")
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: incompatible shapes {x.shape} and {gain.shape}/{bias.shape}")

    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    inv_std = 1.0 / np.sqrt((centred * centred).mean(axis=-1, keepdims=True) + eps)
    x_hat = centred * inv_std

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        d_hat = g * gain.data
        gx = inv_std * (
            d_hat
            - d_hat.mean(axis=-1, keepdims=True)
            - x_hat * (d_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        g_gain = (g * x_hat).reshape(-1, d).sum(axis=0)
        g_bias = g.reshape(-1, d).sum(axis=0)
        return gx, g_gain, g_bias

    return _emit(x.graph, x_hat * gain.data + bias.data, "layer_norm", (x, gain, bias), backward)


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    graph = _graph_of(*tensors)
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise ShapeError(f"concat: incompatible shapes {tensors[0].shape} and {t.shape}")
    splits = np.cumsum([t.shape[-1] for t in tensors])[:-1]

    def backward(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(np.split(g, splits, axis=-1))

    data = np.concatenate([t.data for t in tensors], axis=-1)
    return _emit(graph, data, "concat", tuple(tensors), backward)


# Reductions and losses

def mean_abs(x: Tensor) -> Tensor:
    """Mean of absolute values over every element (scalar output)."""
    n = x.data.size

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        # sign(0) = 0
        return (np.sign(x.data) * (g / n),)

    return _emit(x.graph, np.asarray(np.abs(x.data).mean(), dtype=x.data.dtype), "mean_abs", (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit(x.graph, np.asarray(x.data.sum(), dtype=x.data.dtype), "sum", (x,), backward)


def mean(x: Tensor, axes: Tuple[int, ...]) -> Tensor:
    """Mean over ``axes`` (dropped from the output shape)."""
    axes = tuple(a % x.data.ndim for a in axes)
    count = int(np.prod([x.shape[a] for a in axes]))

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        expanded = np.expand_dims(g, axes)
        return (np.broadcast_to(expanded, x.shape) / count,)

    return _emit(x.graph, x.data.mean(axis=axes), "mean", (x,), backward)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """
    Mean categorical cross-entropy.

    Args:
        logits: (B, K) unnormalised scores
        targets: (B,) integer categories in [0, K)
    """
    targets = np.asarray(targets)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: incompatible shapes {logits.shape} and {targets.shape}")
    k = logits.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise ValueError(f"cross_entropy: targets outside [0, {k})")
    rows = np.arange(targets.size)
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    loss = -log_probs[rows, targets].mean()

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = exp / total
        grad[rows, targets] -= 1.0
        return (grad * (g / targets.size),)

    return _emit(logits.graph, np.asarray(loss, dtype=logits.data.dtype), "cross_entropy", (logits,), backward)


# Shape manipulation

def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: incompatible shapes {x.shape} and {tuple(shape)}") from None

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (g.reshape(x.shape),)

    return _emit(x.graph, data, "reshape", (x,), backward)


def transpose(x: Tensor, axes: Tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (np.transpose(g, inverse),)

    return _emit(x.graph, np.transpose(x.data, axes), "transpose", (x,), backward)


def take(x: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Gather entries along ``axis`` (indices may repeat)."""
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % x.data.ndim

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        gx = np.zeros_like(x.data)
        np.add.at(np.moveaxis(gx, axis, 0), indices, np.moveaxis(g, axis, 0))
        return (gx,)

    return _emit(x.graph, np.take(x.data, indices, axis=axis), "take", (x,), backward)


# Convolution

def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 2, padding: int = 1) -> Tensor:
    """
    2-D convolution on channel-last input.

    Args:
        x: (B, H, W, C_in)
        weight: (C_in, k, k, C_out)
        bias: (C_out,)
    """
    if x.data.ndim != 4 or weight.data.ndim != 4 or x.shape[3] != weight.shape[0]:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} and {weight.shape}")
    b, h, w, c_in = x.shape
    _, k, k2, c_out = weight.shape
    if k != k2 or bias.shape != (c_out,):
        raise ShapeError(f"conv2d: incompatible shapes {weight.shape} and {bias.shape}")

    padded = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    h_out, w_out = windows.shape[1], windows.shape[2]
    cols = windows.reshape(b * h_out * w_out, c_in * k * k)
    w_mat = weight.data.reshape(c_in * k * k, c_out)
    out = (cols @ w_mat + bias.data).reshape(b, h_out, w_out, c_out)

    def backward(g: np.ndarray) -> Tuple[Optional[np.ndarray], np.ndarray, np.ndarray]:
        flat = g.reshape(-1, c_out)
        g_weight = (cols.T @ flat).reshape(weight.shape)
        g_bias = flat.sum(axis=0)
        if not x.needs_grad:
            return None, g_weight, g_bias
        d_windows = (flat @ w_mat.T).reshape(b, h_out, w_out, c_in, k, k)
        d_padded = np.zeros_like(padded)
        for ki in range(k):
            for kj in range(k):
                d_padded[
                    :,
                    ki:ki + stride * (h_out - 1) + 1:stride,
                    kj:kj + stride * (w_out - 1) + 1:stride,
                    :,
                ] += d_windows[..., ki, kj]
        return d_padded[:, padding:padding + h, padding:padding + w, :], g_weight, g_bias

    return _emit(x.graph, out, "conv2d", (x, weight, bias), backward)


# Reverse sweep

def backward(graph: Graph, loss: Tensor) -> Dict[str, np.ndarray]:
    """
    Gradients of a scalar ``loss`` with respect to every parameter of the graph's store.

    Parameters the loss does not reach get zero gradients.

    Raises:
        ShapeError: If ``loss`` is not a scalar
    """
    if loss.graph is not graph:
        raise ValueError("loss does not belong to this graph")
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")

    pending: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    param_grads: Dict[str, np.ndarray] = {}

    for node in reversed(graph.nodes[: loss.node_id + 1]):
        g = pending.pop(node.node_id, None)
        if g is None or not node.needs_grad:
            continue
        if node.param_name is not None:
            param_grads[node.param_name] = g
            continue
        if node._backward is None:
            continue
        for source, grad in zip(node.inputs, node._backward(g)):
            if grad is None or not source.needs_grad:
                continue
            if source.node_id in pending:
                pending[source.node_id] = pending[source.node_id] + grad
            else:
                pending[source.node_id] = grad

    result: Dict[str, np.ndarray] = {}
    if graph.params is not None:
        for name, value in graph.params.items():
            grad = param_grads.get(name)
            if grad is None:
                result[name] = np.zeros_like(value)
            else:
                result[name] = np.asarray(grad, dtype=value.dtype).reshape(value.shape)
    return result
