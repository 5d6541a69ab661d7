"""Dense float64 tensors with a reverse-mode tape.

Every op returns a new :class:`Tensor`. When at least one input requires a
gradient, the result keeps references to its parents and a closure that maps
the output cotangent to parent cotangents. :func:`backward` walks that DAG in
reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class NonFiniteError(ValueError):
    """A tensor would contain NaN or Inf."""


class GraphStateError(RuntimeError):
    """Backward requested on a graph that has not run, or was already released."""


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64, copy=True)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values in tensor {name or ''}".strip())
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple["Tensor", ...], backward: BackwardFn, op: str):
        if not np.isfinite(data).all():
            raise NonFiniteError(f"op '{op}' produced non-finite values")
        out = cls.__new__(cls)
        out.data = data
        out.name = None
        out.op = op
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.op == "leaf"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{tag})"

    __array_priority__ = 1000

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# -- elementwise -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def bw(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return Tensor._from_op(out, (a, b), bw, "div")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out,), "exp")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor._from_op(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def activation(a: Tensor, kind: str = "relu") -> Tensor:
    if kind == "relu":
        return relu(a)
    if kind == "identity":
        return a
    raise ValueError(f"unknown activation {kind!r}")


# -- reductions --------------------------------------------------------------


def reduce_sum(a: Tensor) -> Tensor:
    shape = a.shape
    return Tensor._from_op(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Full contraction ``sum(a * b)`` returning a 0-d tensor."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"dot: shape mismatch {a.shape} vs {b.shape}")
    val = np.asarray(np.dot(a.data.ravel(), b.data.ravel()))
    return Tensor._from_op(val, (a, b), lambda g: (g * b.data, g * a.data), "dot")


def sumsq(a: Tensor) -> Tensor:
    val = np.asarray(np.dot(a.data.ravel(), a.data.ravel()))
    return Tensor._from_op(val, (a,), lambda g: (2.0 * g * a.data,), "sumsq")


# -- structural --------------------------------------------------------------


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {old} as {tuple(shape)}") from None
    return Tensor._from_op(out, (a,), lambda g: (g.reshape(old),), "reshape")


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    splits = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(out, parts, bw, "concat")


def upsample2x(a: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling over the last two axes of a [C,H,W] tensor."""
    if a.ndim != 3:
        raise DimensionError(f"upsample2x expects [C,H,W], got {a.shape}")
    out = a.data.repeat(2, axis=1).repeat(2, axis=2)
    C, H, W = a.shape

    def bw(g):
        return (g.reshape(C, H, 2, W, 2).sum(axis=(2, 4)),)

    return Tensor._from_op(out, (a,), bw, "upsample2x")


def linear_map(
    a: Tensor,
    forward: Callable[[np.ndarray], np.ndarray],
    adjoint: Callable[[np.ndarray], np.ndarray],
    op: str = "linear",
) -> Tensor:
    """Apply a fixed linear map given by a ``forward``/``adjoint`` pair."""
    out = np.asarray(forward(a.data), dtype=np.float64)
    return Tensor._from_op(out, (a,), lambda g: (adjoint(g),), op)


def matvec(W: np.ndarray, a: Tensor) -> Tensor:
    """``W @ vec(a)`` reshaped to ``a.shape``; W is a constant square matrix."""
    W = np.asarray(W, dtype=np.float64)
    shape = a.shape
    if W.shape != (a.size, a.size):
        raise DimensionError(f"matvec: matrix {W.shape} vs tensor of size {a.size}")
    return linear_map(a, lambda x: (W @ x.ravel()).reshape(shape), lambda g: (W.T @ g.ravel()).reshape(shape), "matvec")


# -- convolution -------------------------------------------------------------


def _im2col(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    """``[C,Hp,Wp]`` padded input -> ``[C*k*k, Ho*Wo]`` patch matrix."""
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    C, Ho, Wo = win.shape[:3]
    return np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(C * k * k, Ho * Wo)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Zero-padded 2-D cross-correlation, ``[C_in,H,W] -> [C_out,H/stride,W/stride]``."""
    if x.ndim != 3 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects input [C,H,W] and kernel [O,C,k,k], got {x.shape}, {kernel.shape}")
    C, H, W = x.shape
    O, Ck, k, k2 = kernel.shape
    if Ck != C:
        raise DimensionError(f"conv2d: kernel expects {Ck} input channels, input has {C}")
    if k != k2 or k % 2 == 0:
        raise DimensionError(f"conv2d: kernel must be square with odd size, got {k}x{k2}")
    if bias is not None and bias.shape != (O,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({O},)")
    p = (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p)))
    cols = _im2col(xp, k, stride)
    Ho, Wo = (H + stride - 1) // stride, (W + stride - 1) // stride
    kmat = kernel.data.reshape(O, C * k * k)
    out = kmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(O, Ho, Wo)

    def bw(g):
        g2 = g.reshape(O, Ho * Wo)
        gk = (g2 @ cols.T).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad and stride == 1:
            # transposed conv = correlation of the padded gradient with the flipped kernel
            gcols = _im2col(np.pad(g.reshape(O, Ho, Wo), ((0, 0), (p, p), (p, p))), k, 1)
            kflip = kernel.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(C, O * k * k)
            gx = (kflip @ gcols).reshape(C, H, W)
        elif x.requires_grad:
            dcols = (kmat.T @ g2).reshape(C, k, k, Ho, Wo)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += dcols[:, i, j]
            gx = gxp[:, p : p + H, p : p + W]
        if bias is None:
            return gx, gk
        return gx, gk, g2.sum(axis=1)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._from_op(out, parents, bw, "conv2d")


# -- graph & backward --------------------------------------------------------


def _topological(output: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


class Graph:
    """Topologically ordered view of everything an output depends on.

    Built after the forward pass. ``parameters`` are the trainable leaves
    reachable from the output.
    """

    def __init__(self, output: Tensor | None = None):
        self.output = output
        self.nodes: list[Tensor] = _topological(output) if output is not None and output.requires_grad else []
        self.parameters: list[Tensor] = [n for n in self.nodes if n.is_leaf]
        self.released = False

    def __len__(self) -> int:
        return len(self.nodes)


class Gradients(dict):
    """Mapping ``Tensor -> ndarray`` keyed by tensor identity."""

    def of(self, t: Tensor) -> np.ndarray:
        g = self.get(t)
        return np.zeros_like(t.data) if g is None else g


def backward(
    graph: Graph | Tensor,
    output_grad=None,
    wrt: Iterable[Tensor] | None = None,
    retain_graph: bool = False,
) -> Gradients:
    """Reverse-mode sweep returning cotangents of every reachable leaf.

    ``output_grad`` defaults to ones (seed 1 for scalars). Leaves listed in
    ``wrt`` but unreachable from the output get zero gradients.
    """
    if isinstance(graph, Tensor):
        graph = Graph(graph)
    if graph.output is None:
        raise GraphStateError("backward called before any forward pass was recorded")
    if graph.released:
        raise GraphStateError("graph already released by a previous backward; pass retain_graph=True")
    out = graph.output
    seed = np.ones_like(out.data) if output_grad is None else np.asarray(
        output_grad.data if isinstance(output_grad, Tensor) else output_grad, dtype=np.float64
    )
    if seed.shape != out.shape:
        raise DimensionError(f"seed shape {seed.shape} != output shape {out.shape}")

    grads: dict[int, np.ndarray] = {id(out): seed}
    result = Gradients()
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            result[node] = g
            continue
        if node._backward is None:
            raise GraphStateError(f"node '{node.op}' has no saved backward state")
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    if not retain_graph:
        for node in graph.nodes:
            if not node.is_leaf:
                node._backward = None
                node._parents = ()
        graph.released = True
    if wrt is not None:
        for t in wrt:
            if t not in result:
                result[t] = np.zeros_like(t.data)
    return result
