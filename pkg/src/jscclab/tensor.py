"""Minimal reverse-mode autodiff on numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward() walks
the recorded graph in reverse topological order and accumulates gradients into
every leaf that asked for them. The op set is exactly what the victim models,
the channel layer and the losses in this repository need; there is no general
graph machinery beyond that.

Training runs in float32. Gradient checks rebuild the same graphs in float64
(pass dtype explicitly or use float64 leaves) so finite differences are
meaningful.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class NonFiniteError(FloatingPointError):
    """NaN or Inf surfaced where the contract requires finite values."""


def _as_array(x, dtype=None):
    a = np.asarray(x, dtype=dtype)
    if a.dtype not in (np.float32, np.float64):
        a = a.astype(np.float32)
    return a


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        if not np.isfinite(self.data).all():
            raise NonFiniteError("tensor constructed with non-finite values")
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @classmethod
    def _wrap(cls, data, parents, backward):
        """Internal: op result; skips the finiteness scan on hot paths."""
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.requires_grad = any(p.requires_grad for p in parents)
        t._parents = parents if t.requires_grad else ()
        t._backward = backward if t.requires_grad else None
        return t

    # -- basic introspection ------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    # -- reverse pass ---------------------------------------------------------
    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into every reachable requires_grad leaf.

        seed defaults to ones (a scalar loss seeds with 1.0).
        """
        topo, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        grads = {id(self): np.ones_like(self.data) if seed is None else _as_array(seed, self.dtype)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    if id(parent) in grads:
                        grads[id(parent)] += pg
                    else:
                        grads[id(parent)] = pg
            else:  # leaf
                node.grad = g if node.grad is None else node.grad + g

    # -- operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)


def _const(x, like: Tensor):
    if isinstance(x, Tensor):
        return x
    t = Tensor.__new__(Tensor)
    t.data = np.asarray(x, dtype=like.dtype)
    t.grad = None
    t.requires_grad = False
    t._parents = ()
    t._backward = None
    return t


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back to the original operand shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ----------------------------------------------------

def add(a, b):
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _const(b, a)
    out = a.data + b.data
    return Tensor._wrap(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _const(b, a)
    out = a.data - b.data
    return Tensor._wrap(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _const(b, a)
    out = a.data * b.data
    return Tensor._wrap(
        out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _const(b, a)
    out = a.data / b.data
    return Tensor._wrap(
        out, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def power(a: Tensor, p: float):
    out = a.data ** p
    return Tensor._wrap(out, (a,), lambda g: (g * p * a.data ** (p - 1),))


def exp(a: Tensor):
    out = np.exp(a.data)
    return Tensor._wrap(out, (a,), lambda g: (g * out,))


def log(a: Tensor):
    out = np.log(a.data)
    return Tensor._wrap(out, (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor):
    out = np.sqrt(a.data)
    return Tensor._wrap(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a: Tensor):
    out = np.tanh(a.data)
    return Tensor._wrap(out, (a,), lambda g: (g * (1.0 - out * out),))


# -- reductions and shape ops --------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).astype(a.dtype, copy=True),)

    return Tensor._wrap(np.asarray(out), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims=False):
    n = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def reshape(a: Tensor, shape):
    out = a.data.reshape(shape)
    return Tensor._wrap(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes):
    axes = tuple(axes) if axes else tuple(range(a.data.ndim))[::-1]
    inv = np.argsort(axes)
    out = a.data.transpose(axes)
    return Tensor._wrap(out, (a,), lambda g: (g.transpose(inv),))


def concat(parts, axis: int):
    parts = list(parts)
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._wrap(out, tuple(parts), backward)


# -- matmul ---------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor):
    if a.shape[-1] != b.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return (ga, gb)

    return Tensor._wrap(out, (a, b), backward)


# -- nonlinearities ---------------------------------------------------------------

def relu(a: Tensor):
    out = np.maximum(a.data, 0)
    return Tensor._wrap(out, (a,), lambda g: (g * (a.data > 0),))


def sigmoid(a: Tensor):
    out = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor._wrap(out, (a,), lambda g: (g * out * (1.0 - out),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor):
    """tanh-approximated GeLU: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return Tensor._wrap(out, (a,), backward)


def prelu(a: Tensor, slope: Tensor):
    """PReLU with one learned slope shared across the layer."""
    pos = a.data > 0
    out = np.where(pos, a.data, slope.data * a.data)

    def backward(g):
        ga = g * np.where(pos, 1.0, slope.data)
        gs = np.array((g * np.where(pos, 0.0, a.data)).sum(), dtype=a.dtype).reshape(slope.shape)
        return (ga, gs)

    return Tensor._wrap(out, (a, slope), backward)


def softmax(a: Tensor, axis: int = -1):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return Tensor._wrap(out, (a,), backward)


def layernorm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = a.shape[-1]
    if d < 2:
        raise ShapeError("layernorm needs a normalized axis of length >= 2")
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data

    def backward(g):
        gxhat = g * gain.data
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        red = tuple(range(a.data.ndim - 1))
        ggain = (g * xhat).sum(axis=red)
        gbias = g.sum(axis=red)
        return (gx, ggain, gbias)

    return Tensor._wrap(out, (a, gain, bias), backward)


# -- losses -----------------------------------------------------------------------

def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean squared error over all elements; gradient 2*(pred-target)/N."""
    target = _const(target, pred)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = np.asarray((diff * diff).mean(dtype=pred.dtype))

    def backward(g):
        scale = 2.0 / pred.size
        gp = g * scale * diff
        return (gp, -gp)

    return Tensor._wrap(out, (pred, target), backward)


# -- structured ops used by the victims ---------------------------------------------

def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int, padding: int):
    """Cross-correlation of NHWC input with OCHW kernels.

    Implemented as tap-by-tap im2col into one (B*OH*OW, KH*KW*C) matrix plus a
    single GEMM; the backward pass reuses the patch matrix for the weight
    gradient and scatter-adds the input gradient tap by tap. Channels-last
    keeps every copy chunked along a contiguous axis.
    """
    if stride < 1 or padding < 0:
        raise ShapeError(f"invalid stride/padding: {stride}/{padding}")
    B, H, W, C = x.shape
    O, CI, KH, KW = w.shape
    if CI != C:
        raise ShapeError(f"conv2d channel mismatch: input {C}, kernel {CI}")
    if H + 2 * padding < KH or W + 2 * padding < KW:
        raise ShapeError("kernel does not fit padded input")
    OH = (H + 2 * padding - KH) // stride + 1
    OW = (W + 2 * padding - KW) // stride + 1

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0))) if padding else x.data
    cols = np.empty((B, OH, OW, KH, KW, C), x.dtype)
    for i in range(KH):
        for j in range(KW):
            cols[:, :, :, i, j, :] = xp[:, i : i + stride * OH : stride, j : j + stride * OW : stride, :]
    cols2 = cols.reshape(B * OH * OW, KH * KW * C)
    w_mat = np.ascontiguousarray(w.data.transpose(2, 3, 1, 0)).reshape(KH * KW * C, O)
    y = cols2 @ w_mat
    if b is not None:
        y += b.data
    out = y.reshape(B, OH, OW, O)

    def backward(g):
        g_mat = g.reshape(B * OH * OW, O)
        gw = (cols2.T @ g_mat).reshape(KH, KW, C, O).transpose(3, 2, 0, 1)
        gb = None if b is None else g_mat.sum(axis=0)
        gx = None
        if x.requires_grad:
            dcols = (g_mat @ w_mat.T).reshape(B, OH, OW, KH, KW, C)
            gxp = np.zeros((B, H + 2 * padding, W + 2 * padding, C), x.dtype)
            for i in range(KH):
                for j in range(KW):
                    gxp[:, i : i + stride * OH : stride, j : j + stride * OW : stride, :] += dcols[:, :, :, i, j, :]
            gx = gxp[:, padding : padding + H, padding : padding + W, :] if padding else gxp
        if b is None:
            return (gx, np.ascontiguousarray(gw))
        return (gx, np.ascontiguousarray(gw), gb)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._wrap(out, parents, backward)


def upsample2x(x: Tensor):
    """Nearest-neighbour 2x upsampling of NHWC input."""
    out = x.data.repeat(2, axis=1).repeat(2, axis=2)

    def backward(g):
        B, H2, W2, C = g.shape
        return (g.reshape(B, H2 // 2, 2, W2 // 2, 2, C).sum(axis=(2, 4)),)

    return Tensor._wrap(out, (x,), backward)


# -- gradient checking -----------------------------------------------------------

def grad_check(fn, leaves, step: float = 1e-5) -> float:
    """Compare analytic and central finite-difference gradients.

    fn() must rebuild the graph from the current leaf values and return a
    scalar Tensor; leaves are the float64 Tensors to differentiate against.
    Returns the max relative error across every leaf element.
    """
    for leaf in leaves:
        if leaf.dtype != np.float64:
            raise TypeError("grad_check requires float64 leaves")
        leaf.zero_grad()
    out = fn()
    out.backward()
    analytic = [np.zeros_like(l.data) if l.grad is None else l.grad.copy() for l in leaves]

    worst = 0.0
    for leaf, ana in zip(leaves, analytic):
        flat = leaf.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = fn().item()
            flat[i] = orig - step
            lo = fn().item()
            flat[i] = orig
            num = (hi - lo) / (2 * step)
            a = ana.reshape(-1)[i]
            rel = abs(a - num) / max(abs(a), abs(num), 1.0)
            worst = max(worst, rel)
    return worst
