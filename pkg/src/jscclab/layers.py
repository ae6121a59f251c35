"""Parameterized layers built on the autodiff core.

Each layer owns its parameter Tensors, exposes them through params(), and is
callable on a Tensor. Weights are initialized uniformly in
+-sqrt(6 / (fan_in + fan_out)); biases, layernorm offsets start at zero.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .rng import RandomStream
from .tensor import Tensor


def _glorot(rng: RandomStream, shape, fan_in: int, fan_out: int, dtype) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform_range(-bound, bound, shape, dtype), requires_grad=True)


class Layer:
    def params(self) -> list[tuple[str, Tensor]]:
        return []

    def __call__(self, x: Tensor) -> Tensor:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, d_in: int, d_out: int, rng: RandomStream, bias: bool = True, dtype=np.float32):
        self.w = _glorot(rng, (d_in, d_out), d_in, d_out, dtype)
        self.b = Tensor(np.zeros(d_out, dtype), requires_grad=True) if bias else None

    def params(self):
        out = [("w", self.w)]
        if self.b is not None:
            out.append(("b", self.b))
        return out

    def __call__(self, x):
        y = T.matmul(x, self.w)
        return y if self.b is None else T.add(y, self.b)


class Conv2d(Layer):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, padding: int,
                 rng: RandomStream, dtype=np.float32):
        fan_in = c_in * kernel * kernel
        fan_out = c_out * kernel * kernel
        self.w = _glorot(rng, (c_out, c_in, kernel, kernel), fan_in, fan_out, dtype)
        self.b = Tensor(np.zeros(c_out, dtype), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def __call__(self, x):
        return T.conv2d(x, self.w, self.b, self.stride, self.padding)


class PReLU(Layer):
    """Single learned negative slope shared over the layer."""

    def __init__(self, init: float = 0.25, dtype=np.float32):
        self.a = Tensor(np.full((), init, dtype), requires_grad=True)

    def params(self):
        return [("a", self.a)]

    def __call__(self, x):
        return T.prelu(x, self.a)


class Activation(Layer):
    """Stateless elementwise activation: gelu | relu | sigmoid."""

    _FNS = {"gelu": T.gelu, "relu": T.relu, "sigmoid": T.sigmoid}

    def __init__(self, kind: str):
        if kind not in self._FNS:
            raise ValueError(f"unknown activation {kind!r}")
        self.kind = kind

    def __call__(self, x):
        return self._FNS[self.kind](x)


class LayerNorm(Layer):
    def __init__(self, d: int, dtype=np.float32):
        self.gain = Tensor(np.ones(d, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(d, dtype), requires_grad=True)

    def params(self):
        return [("gain", self.gain), ("bias", self.bias)]

    def __call__(self, x):
        return T.layernorm(x, self.gain, self.bias)


class Reshape(Layer):
    """Fixed reshape of the trailing dims, batch dim untouched."""

    def __init__(self, shape: tuple[int, ...]):
        self.shape = tuple(shape)

    def __call__(self, x):
        return T.reshape(x, (x.shape[0],) + self.shape)


class Flatten(Layer):
    def __call__(self, x):
        return T.reshape(x, (x.shape[0], -1))


class DepthToSpace(Layer):
    """Move r*r channel groups into a r-times finer spatial grid (NHWC)."""

    def __init__(self, factor: int = 2):
        self.factor = factor

    def __call__(self, x):
        B, H, W, C = x.shape
        r = self.factor
        t = T.reshape(x, (B, H, W, r, r, C // (r * r)))
        t = T.transpose(t, (0, 1, 3, 2, 4, 5))
        return T.reshape(t, (B, H * r, W * r, C // (r * r)))


class PatchEmbed(Layer):
    """Cut an NHWC image into p*p patches and project each to d dims."""

    def __init__(self, patch: int, c: int, h: int, w: int, d: int, rng: RandomStream, dtype=np.float32):
        if h % patch or w % patch:
            raise ValueError(f"patch {patch} does not tile {h}x{w}")
        self.patch = patch
        self.tokens = (h // patch) * (w // patch)
        self.proj = Dense(patch * patch * c, d, rng, dtype=dtype)

    def params(self):
        return [("proj." + n, p) for n, p in self.proj.params()]

    def __call__(self, x):
        B, H, W, C = x.shape
        p = self.patch
        t = T.reshape(x, (B, H // p, p, W // p, p, C))
        t = T.transpose(t, (0, 1, 3, 2, 4, 5))  # B, gh, gw, p, p, C
        t = T.reshape(t, (B, self.tokens, p * p * C))
        return self.proj(t)


class PatchUnembed(Layer):
    """Inverse of PatchEmbed: per-token projection back to pixels, reassemble."""

    def __init__(self, patch: int, c: int, h: int, w: int, d: int, rng: RandomStream, dtype=np.float32):
        self.patch = patch
        self.c, self.h, self.w = c, h, w
        self.proj = Dense(d, patch * patch * c, rng, dtype=dtype)

    def params(self):
        return [("proj." + n, p) for n, p in self.proj.params()]

    def __call__(self, x):
        B = x.shape[0]
        p, c, h, w = self.patch, self.c, self.h, self.w
        t = self.proj(x)
        t = T.reshape(t, (B, h // p, w // p, p, p, c))
        t = T.transpose(t, (0, 1, 3, 2, 4, 5))  # B, gh, p, gw, p, C
        return T.reshape(t, (B, h, w, c))


class PosEmbed(Layer):
    """Learned additive position vectors, one per token."""

    def __init__(self, tokens: int, d: int, rng: RandomStream, dtype=np.float32):
        bound = np.sqrt(6.0 / (tokens + d))
        self.pos = Tensor(rng.uniform_range(-bound, bound, (tokens, d), dtype), requires_grad=True)

    def params(self):
        return [("pos", self.pos)]

    def __call__(self, x):
        return T.add(x, self.pos)


def self_attention(f: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d)) v with q,k,v projected from f by the three weights."""
    d = f.shape[-1]
    q = T.matmul(f, w_q)
    k = T.matmul(f, w_k)
    v = T.matmul(f, w_v)
    scores = T.mul(T.matmul(q, T.transpose(k, tuple(range(k.data.ndim - 2)) + (k.data.ndim - 1, k.data.ndim - 2))),
                   1.0 / np.sqrt(d))
    return T.matmul(T.softmax(scores, axis=-1), v)


class TransformerLayer(Layer):
    """One victim-model transformer layer.

    Stage one adds the projected concatenation of all attention heads back onto
    the raw input; stage two adds an MLP of that sum back onto it. Both stages
    read their block input through a GeLU + layernorm preprocessing step, and
    the attention scores are scaled by sqrt(d) (the full feature width, not the
    per-head width).
    """

    def __init__(self, d: int, heads: int, rng: RandomStream, dtype=np.float32, mlp_ratio: int = 4):
        if d % heads:
            raise ValueError(f"feature dim {d} not divisible by {heads} heads")
        self.d = d
        self.heads = heads
        d_s = d // heads
        self.w_q = [_glorot(rng, (d, d_s), d, d_s, dtype) for _ in range(heads)]
        self.w_k = [_glorot(rng, (d, d_s), d, d_s, dtype) for _ in range(heads)]
        self.w_v = [_glorot(rng, (d, d_s), d, d_s, dtype) for _ in range(heads)]
        self.w_o = _glorot(rng, (d, d), d, d, dtype)
        self.ln_attn = LayerNorm(d, dtype)
        self.ln_mlp = LayerNorm(d, dtype)
        self.mlp_in = Dense(d, mlp_ratio * d, rng, dtype=dtype)
        self.mlp_out = Dense(mlp_ratio * d, d, rng, dtype=dtype)

    def params(self):
        out = []
        for i in range(self.heads):
            out += [(f"h{i}.wq", self.w_q[i]), (f"h{i}.wk", self.w_k[i]), (f"h{i}.wv", self.w_v[i])]
        out.append(("wo", self.w_o))
        out += [("ln_attn." + n, p) for n, p in self.ln_attn.params()]
        out += [("ln_mlp." + n, p) for n, p in self.ln_mlp.params()]
        out += [("mlp_in." + n, p) for n, p in self.mlp_in.params()]
        out += [("mlp_out." + n, p) for n, p in self.mlp_out.params()]
        return out

    def msa(self, f: Tensor) -> Tensor:
        g = self.ln_attn(T.gelu(f))
        heads = [self_attention(g, self.w_q[i], self.w_k[i], self.w_v[i]) for i in range(self.heads)]
        return T.add(f, T.matmul(T.concat(heads, axis=-1), self.w_o))

    def __call__(self, f: Tensor) -> Tensor:
        a = self.msa(f)
        m = self.ln_mlp(T.gelu(a))
        return T.add(a, self.mlp_out(T.gelu(self.mlp_in(m))))


