"""Dense channels-last tensors with a reverse-mode tape.

Every op builds a node only when one of its inputs requires a gradient, so
pure evaluation (energy on frozen weights, generation) allocates no graph.
Layout is channels-last and batch-free: an image feature map is
``(H, W, C)``, a spatio-temporal one ``(H, W, T, C)``, a waveform one
``(T, C)``.
"""
from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, GeometryError, ShapeError

_dtype = np.dtype(np.float32)

# when a list, hard_sigmoid and norm append the distance of their inputs to
# the nearest non-differentiable point
kink_log: list | None = None


def default_dtype() -> np.dtype:
    return _dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype new tensors are created with.

    Used by the gradient checker, which needs 64-bit arithmetic for central
    differences to be meaningful at h=1e-3.
    """
    global _dtype
    old = _dtype
    _dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _dtype = old


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype != _dtype:
            arr = arr.astype(_dtype)
        if arr.ndim > 5:
            raise ShapeError(f"tensor rank {arr.ndim} exceeds 5")
        self.data = arr
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return scale(self, 1.0 / other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ (no broadcasting)")
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} differ (no broadcasting)")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ (no broadcasting)")
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a, c: float, shift: float = 0.0) -> Tensor:
    """``c * a + shift`` for python scalars ``c`` and ``shift``."""
    a = as_tensor(a)
    c = a.data.dtype.type(c)
    out = a.data * c
    if shift:
        out = out + a.data.dtype.type(shift)
    return _node(out, (a,), lambda g: (g * c,))


def hard_sigmoid(x) -> Tensor:
    """``min(max(x, 0), 1)``; slope 1 strictly inside (0, 1), 0 elsewhere."""
    x = as_tensor(x)
    inside = (x.data > 0) & (x.data < 1)
    if kink_log is not None and x.data.size:
        kink_log.append(float(np.min(np.minimum(np.abs(x.data), np.abs(x.data - 1)))))
    out = np.clip(x.data, 0, 1)
    return _node(out, (x,), lambda g: (g * inside,))


# ---------------------------------------------------------------- reductions

def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return _node(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,),
                 lambda g: (np.full(shape, g, dtype=x.data.dtype),))


def norm(x) -> Tensor:
    """Frobenius norm. The subgradient at ``x = 0`` is taken to be 0."""
    x = as_tensor(x)
    n = np.sqrt(np.sum(x.data * x.data))
    if kink_log is not None:
        # curvature grows like 1/n, so stay a decade further away than for clamps
        kink_log.append(float(n) / 5)

    def backward(g):
        if n == 0:
            return (np.zeros_like(x.data),)
        return (x.data * (g / n),)

    return _node(np.asarray(n, dtype=x.data.dtype), (x,), backward)


def add_scalars(terms: Sequence[Tensor]) -> Tensor:
    """Sum a sequence of rank-0 tensors left to right."""
    if not terms:
        raise ContractError("add_scalars needs at least one term")
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return total


# ---------------------------------------------------------------- reshaping

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def upsample2(x) -> Tensor:
    """Nearest-neighbour x2 upsampling along every axis except the channel axis."""
    x = as_tensor(x)
    out = x.data
    nsp = x.ndim - 1
    for ax in range(nsp):
        out = np.repeat(out, 2, axis=ax)

    def backward(g):
        shape = []
        for ext in x.shape[:-1]:
            shape += [ext, 2]
        shape.append(x.shape[-1])
        return (g.reshape(shape).sum(axis=tuple(range(1, 2 * nsp, 2))),)

    return _node(out, (x,), backward)


# ---------------------------------------------------------------- statistics

def gram(feature) -> Tensor:
    """Normalised Gram matrix ``F^T F / N`` of an ``(..., C)`` feature map."""
    feature = as_tensor(feature)
    c = feature.shape[-1]
    f = feature.data.reshape(-1, c)
    n = f.shape[0]
    if n == 0:
        raise ShapeError("gram: feature map has no spatial elements")
    inv = f.dtype.type(1.0 / n)
    out = (f.T @ f) * inv

    def backward(g):
        return ((f @ (g + g.T) * inv).reshape(feature.shape),)

    return _node(out, (feature,), backward)


def channel_mean(feature) -> Tensor:
    """Per-channel mean over every spatial/temporal position."""
    feature = as_tensor(feature)
    c = feature.shape[-1]
    f = feature.data.reshape(-1, c)
    n = f.shape[0]
    if n == 0:
        raise ShapeError("channel_mean: feature map has no spatial elements")
    inv = f.dtype.type(1.0 / n)
    out = f.sum(axis=0) * inv
    shape = feature.shape

    def backward(g):
        return (np.broadcast_to(g * inv, shape).copy(),)

    return _node(out, (feature,), backward)


# ---------------------------------------------------------------- convolution

def _per_axis(value, n: int, what: str) -> tuple[int, ...]:
    if np.isscalar(value):
        value = (int(value),) * n
    value = tuple(int(v) for v in value)
    if len(value) != n:
        raise ShapeError(f"{what} has {len(value)} entries for {n} spatial axes")
    return value


def conv_output_shape(in_shape, kernel_shape, stride=1, dilation=1, padding=0) -> tuple[int, ...]:
    """Spatial output extents of a convolution, without computing it."""
    nsp = len(kernel_shape)
    stride = _per_axis(stride, nsp, "stride")
    dilation = _per_axis(dilation, nsp, "dilation")
    padding = _per_axis(padding or 0, nsp, "padding")
    return tuple(
        (n + 2 * p - d * (k - 1) - 1) // s + 1
        for n, k, s, d, p in zip(in_shape, kernel_shape, stride, dilation, padding)
    )


def conv(x, kernel, bias=None, stride=1, dilation=1, padding=None) -> Tensor:
    """N-d cross-correlation over all leading axes of a channels-last input.

    ``x`` is ``(*spatial, C_in)``, ``kernel`` is ``(*k, C_in, C_out)`` and the
    optional ``bias`` is ``(C_out,)``. ``padding`` is None (valid) or a
    per-axis zero-padding amount. Accumulation runs over kernel offsets in
    row-major order, which fixes the floating point summation order.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    nsp = x.ndim - 1
    if nsp < 1:
        raise ShapeError(f"conv: input must have spatial axes plus a channel axis, got {x.shape}")
    if kernel.ndim != nsp + 2:
        raise ShapeError(f"conv: kernel rank {kernel.ndim} does not match input with {nsp} spatial axes")
    cin, cout = kernel.shape[-2], kernel.shape[-1]
    if x.shape[-1] != cin:
        raise ShapeError(f"conv: input has {x.shape[-1]} channels, kernel expects {cin}")
    ksz = kernel.shape[:nsp]
    stride = _per_axis(stride, nsp, "stride")
    dilation = _per_axis(dilation, nsp, "dilation")
    pad = _per_axis(padding or 0, nsp, "padding")
    if min(stride) < 1 or min(dilation) < 1 or min(pad) < 0:
        raise ShapeError("conv: stride and dilation must be >= 1, padding >= 0")
    outsz = conv_output_shape(x.shape[:-1], ksz, stride, dilation, pad)
    if min(outsz) < 1:
        raise GeometryError(
            f"conv: input {x.shape[:-1]} with kernel {ksz}, dilation {dilation}, "
            f"stride {stride}, padding {pad} gives output extent {outsz}")

    xp = x.data
    if any(pad):
        xp = np.pad(xp, [(p, p) for p in pad] + [(0, 0)])
    w = kernel.data
    offsets = list(itertools.product(*(range(k) for k in ksz)))

    def window(off):
        return tuple(slice(o * d, o * d + s * (n - 1) + 1, s)
                     for o, d, s, n in zip(off, dilation, stride, outsz))

    out = np.zeros(outsz + (cout,), dtype=x.data.dtype)
    for off in offsets:
        out += xp[window(off)] @ w[off]
    parents = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv: bias shape {bias.shape} != ({cout},)")
        out += bias.data
        parents.append(bias)

    def backward(g):
        gx = gw = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for off in offsets:
                gxp[window(off)] += g @ w[off].T
            if any(pad):
                gxp = gxp[tuple(slice(p, p + n) for p, n in zip(pad, x.shape[:-1]))]
            gx = gxp
        if kernel.requires_grad:
            gw = np.empty_like(w)
            g2 = g.reshape(-1, cout)
            for off in offsets:
                gw[off] = xp[window(off)].reshape(-1, cin).T @ g2
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.reshape(-1, cout).sum(axis=0) if bias.requires_grad else None)
        return tuple(grads)

    return _node(out, parents, backward)


# ---------------------------------------------------------------- reverse pass

def backward(output: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a one-element ``output`` with respect to each of ``wrt``.

    Leaves that ``output`` does not depend on get zero gradients.
    """
    if output.data.size != 1:
        raise ContractError(f"backward needs a one-element output, got shape {output.shape}")
    wanted = {id(t) for t in wrt}
    results = {id(t): None for t in wrt}
    if output.requires_grad:
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
            for p in reversed(node._parents):
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if id(node) in wanted:
                results[id(node)] = g
            if node._backward is None:
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg
    return [results[id(t)] if results[id(t)] is not None else np.zeros_like(t.data)
            for t in wrt]


# ---------------------------------------------------------------- randomness

def gaussian_noise(shape, std: float = 1.0, rng_seed=0) -> np.ndarray:
    """I.i.d. ``N(0, std^2)`` entries; ``rng_seed`` is an int or a Generator."""
    if std < 0:
        raise ContractError(f"gaussian_noise: std must be >= 0, got {std}")
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if std == 0:
        return np.zeros(shape, dtype=_dtype)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    out = rng.standard_normal(shape, dtype=np.float64 if _dtype == np.float64 else np.float32)
    if std != 1:
        out *= out.dtype.type(std)
    return out
