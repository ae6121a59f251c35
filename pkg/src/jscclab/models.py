"""Victim codec models: compact conv (default), mini transformer, and mlp.

Every architecture maps an NHWC image batch with pixels in [0, 1] to a
power-normalized batch of 2k interleaved reals (k complex symbols) and back,
with k = round(R * h * w * c). Decoders mirror their encoder stack shape for
shape and end in a sigmoid so reconstructions stay inside [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .channel import power_normalize
from .layers import (Activation, Conv2d, Dense, DepthToSpace, Flatten, Layer, PatchEmbed,
                     PatchUnembed, PosEmbed, PReLU, Reshape, TransformerLayer)
from .rng import INIT, RandomStream
from .tensor import ShapeError, Tensor

ARCH_KINDS = ("conv", "vit_mini", "mlp")


class ModelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ArchDescriptor:
    """Shape contract of one codec: source dims plus the bandwidth ratio."""

    kind: str
    height: int = 28
    width: int = 28
    channels: int = 1
    bandwidth_ratio: float = 1.0 / 6.0

    def __post_init__(self):
        if self.kind not in ARCH_KINDS:
            raise ModelConfigError(f"unknown arch kind {self.kind!r}")
        if self.bandwidth_ratio * self.n < 1:
            raise ModelConfigError(
                f"bandwidth ratio {self.bandwidth_ratio} yields no symbols for n={self.n}")

    @property
    def n(self) -> int:
        return self.height * self.width * self.channels

    @property
    def k(self) -> int:
        """Complex symbols per image: round(R*n), nearest integer."""
        return int(round(self.bandwidth_ratio * self.n))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "height": self.height, "width": self.width,
                "channels": self.channels, "bandwidth_ratio": self.bandwidth_ratio}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchDescriptor":
        return cls(kind=d["kind"], height=int(d["height"]), width=int(d["width"]),
                   channels=int(d["channels"]), bandwidth_ratio=float(d["bandwidth_ratio"]))


@dataclass
class JsccModel:
    """Encoder/decoder layer stacks plus their provenance."""

    arch: ArchDescriptor
    encoder: list[Layer]
    decoder: list[Layer]
    seed: int
    config_hash: str = ""
    # encoder activation shapes, input through output; the decoder mirrors them
    shape_trace: list[tuple[int, ...]] = field(default_factory=list)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for prefix, stack in (("enc", self.encoder), ("dec", self.decoder)):
            for i, layer in enumerate(stack):
                for name, p in layer.params():
                    out.append((f"{prefix}.{i}.{name}", p))
        return out


# -- architecture builders -------------------------------------------------------

def _conv_stacks(arch: ArchDescriptor, rng: RandomStream, dtype):
    h, w, c = arch.height, arch.width, arch.channels
    if h % 4 or w % 4:
        raise ModelConfigError("conv arch needs height/width divisible by 4")
    c1, c2 = 16, 32
    hh, ww = h // 4, w // 4
    feat = c2 * hh * ww
    enc = [
        Conv2d(c, c1, 5, 2, 2, rng, dtype), PReLU(dtype=dtype),
        Conv2d(c1, c2, 3, 2, 1, rng, dtype), PReLU(dtype=dtype),
        Flatten(),
        Dense(feat, 2 * arch.k, rng, dtype=dtype),
    ]
    # Upsampling happens via sub-pixel (depth-to-space) stages so every conv
    # runs on the coarse grids; full-resolution convs dominate CPU time.
    dec = [
        Dense(2 * arch.k, feat, rng, dtype=dtype), PReLU(dtype=dtype),
        Reshape((hh, ww, c2)),
        Conv2d(c2, 4 * c1, 3, 1, 1, rng, dtype), PReLU(dtype=dtype),
        DepthToSpace(2),
        Conv2d(c1, 4 * c, 3, 1, 1, rng, dtype),
        DepthToSpace(2),
        Activation("sigmoid"),
    ]
    return enc, dec


def _mlp_stacks(arch: ArchDescriptor, rng: RandomStream, dtype):
    n = arch.n
    hidden = max(8, n // 2)
    enc = [Flatten(), Dense(n, hidden, rng, dtype=dtype), PReLU(dtype=dtype),
           Dense(hidden, 2 * arch.k, rng, dtype=dtype)]
    dec = [Dense(2 * arch.k, hidden, rng, dtype=dtype), PReLU(dtype=dtype),
           Dense(hidden, n, rng, dtype=dtype), Activation("sigmoid"),
           Reshape((arch.height, arch.width, arch.channels))]
    return enc, dec


VIT_PATCH = 7
VIT_DIM = 64
VIT_HEADS = 4
VIT_ENC_LAYERS = 2
VIT_DEC_LAYERS = 1


def _vit_stacks(arch: ArchDescriptor, rng: RandomStream, dtype):
    h, w, c = arch.height, arch.width, arch.channels
    if h % VIT_PATCH or w % VIT_PATCH:
        raise ModelConfigError(f"vit_mini needs dims divisible by patch {VIT_PATCH}")
    if VIT_DIM % VIT_HEADS:
        raise ModelConfigError("vit_mini head count must divide feature dim")
    tokens = (h // VIT_PATCH) * (w // VIT_PATCH)
    enc: list[Layer] = [
        PatchEmbed(VIT_PATCH, c, h, w, VIT_DIM, rng, dtype),
        PosEmbed(tokens, VIT_DIM, rng, dtype),
    ]
    enc += [TransformerLayer(VIT_DIM, VIT_HEADS, rng, dtype) for _ in range(VIT_ENC_LAYERS)]
    enc += [Flatten(), Dense(tokens * VIT_DIM, 2 * arch.k, rng, dtype=dtype)]
    dec: list[Layer] = [
        Dense(2 * arch.k, tokens * VIT_DIM, rng, dtype=dtype),
        Reshape((tokens, VIT_DIM)),
        PosEmbed(tokens, VIT_DIM, rng, dtype),
    ]
    dec += [TransformerLayer(VIT_DIM, VIT_HEADS, rng, dtype) for _ in range(VIT_DEC_LAYERS)]
    dec += [PatchUnembed(VIT_PATCH, c, h, w, VIT_DIM, rng, dtype),
            Activation("sigmoid")]
    return enc, dec


_BUILDERS = {"conv": _conv_stacks, "mlp": _mlp_stacks, "vit_mini": _vit_stacks}


def build_model(arch: ArchDescriptor, seed: int, dtype=np.float32) -> JsccModel:
    """Initialize a codec for the descriptor; deterministic in (arch, seed)."""
    rng = RandomStream(seed, INIT)
    enc, dec = _BUILDERS[arch.kind](arch, rng, dtype)
    model = JsccModel(arch=arch, encoder=enc, decoder=dec, seed=seed)
    model.shape_trace = _trace_shapes(model, dtype)
    return model


def _trace_shapes(model: JsccModel, dtype) -> list[tuple[int, ...]]:
    a = model.arch
    x = Tensor(np.zeros((1, a.height, a.width, a.channels), dtype))
    shapes = [x.shape[1:]]
    for layer in model.encoder:
        x = layer(x)
        shapes.append(x.shape[1:])
    return shapes


def _run(stack: list[Layer], x: Tensor) -> Tensor:
    for layer in stack:
        x = layer(x)
    return x


def encode(model: JsccModel, x: Tensor) -> Tensor:
    """Map images to power-normalized symbol vectors of exactly 2k reals."""
    a = model.arch
    expect = (a.height, a.width, a.channels)
    if x.shape[1:] != expect:
        raise ShapeError(f"encode expects batch of {expect}, got {x.shape}")
    if x.data.min() < 0.0 or x.data.max() > 1.0:
        raise ValueError("encode: pixel values outside [0, 1]")
    return power_normalize(_run(model.encoder, x))


def decode(model: JsccModel, z: Tensor) -> Tensor:
    """Map received symbol vectors back to images in [0, 1]."""
    if z.shape[-1] != 2 * model.arch.k:
        raise ShapeError(f"decode expects vectors of length {2 * model.arch.k}, got {z.shape}")
    return _run(model.decoder, z)


def decoder_mirror_shapes(model: JsccModel, dtype=np.float32) -> list[tuple[int, ...]]:
    """Decoder activation shapes, output back to input, for symmetry checks."""
    z = Tensor(np.zeros((1, 2 * model.arch.k), dtype))
    shapes = [z.shape[1:]]
    for layer in model.decoder:
        z = layer(z)
        shapes.append(z.shape[1:])
    return shapes[::-1]
