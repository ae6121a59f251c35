"""Bit-exact model checkpoints.

Layout: 8-byte magic, u32 format version, u32 manifest length, JSON manifest,
raw little-endian float32 blob (tensors concatenated in manifest order), u32
CRC-32 of the blob. The manifest records the model kind, arch descriptor,
tensor names/shapes in order, seed and config hash, so a load can verify it is
being asked for the model it holds. Save -> load round-trips bits exactly.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .evalkit import ProbeClassifier, probe_stack
from .models import ArchDescriptor, JsccModel, build_model
from .rng import PROBE, RandomStream

MAGIC = b"JSCCLAB\x00"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack(manifest: dict, tensors: list[np.ndarray]) -> bytes:
    blob = b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes() for t in tensors)
    mjson = json.dumps(manifest, sort_keys=True).encode()
    return b"".join([
        MAGIC,
        struct.pack("<II", FORMAT_VERSION, len(mjson)),
        mjson,
        blob,
        struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF),
    ])


def _unpack(raw: bytes, path) -> tuple[dict, np.ndarray]:
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    off = len(MAGIC)
    version, mlen = struct.unpack_from("<II", raw, off)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    off += 8
    manifest = json.loads(raw[off : off + mlen].decode())
    off += mlen
    blob = raw[off:-4]
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(blob) & 0xFFFFFFFF != crc:
        raise CheckpointError(f"{path}: checksum mismatch, blob is corrupted")
    return manifest, np.frombuffer(blob, dtype="<f4")


def _fill(named_params, manifest: dict, flat: np.ndarray, path):
    expect = [(n, list(p.shape)) for n, p in named_params]
    got = [(t["name"], t["shape"]) for t in manifest["tensors"]]
    if expect != got:
        raise CheckpointError(f"{path}: tensor layout mismatch with requested architecture")
    off = 0
    for _, p in named_params:
        n = p.size
        if off + n > flat.size:
            raise CheckpointError(f"{path}: blob shorter than manifest tensors")
        p.data = flat[off : off + n].reshape(p.shape).astype(np.float32)
        off += n
    if off != flat.size:
        raise CheckpointError(f"{path}: blob longer than manifest tensors")


def save_checkpoint(model: JsccModel, path) -> None:
    named = model.named_parameters()
    manifest = {
        "kind": "jscc",
        "arch": model.arch.to_dict(),
        "tensors": [{"name": n, "shape": list(p.shape)} for n, p in named],
        "seed": model.seed,
        "config_hash": model.config_hash,
    }
    Path(path).write_bytes(_pack(manifest, [p.data for _, p in named]))


def load_checkpoint(path, expect_arch: ArchDescriptor | None = None) -> JsccModel:
    manifest, flat = _unpack(Path(path).read_bytes(), path)
    if manifest.get("kind") != "jscc":
        raise CheckpointError(f"{path}: holds a {manifest.get('kind')!r} model, expected jscc")
    arch = ArchDescriptor.from_dict(manifest["arch"])
    if expect_arch is not None and arch != expect_arch:
        raise CheckpointError(
            f"{path}: checkpoint arch {arch} does not match requested {expect_arch}")
    model = build_model(arch, seed=int(manifest["seed"]))
    model.config_hash = manifest.get("config_hash", "")
    _fill(model.named_parameters(), manifest, flat, path)
    return model


def save_probe(probe: ProbeClassifier, path) -> None:
    named = probe.named_parameters()
    manifest = {
        "kind": "probe",
        "image_shape": list(probe.image_shape),
        "classes": probe.classes,
        "tensors": [{"name": n, "shape": list(p.shape)} for n, p in named],
        "seed": probe.seed,
        "test_accuracy": probe.test_accuracy,
    }
    Path(path).write_bytes(_pack(manifest, [p.data for _, p in named]))


def load_probe(path) -> ProbeClassifier:
    manifest, flat = _unpack(Path(path).read_bytes(), path)
    if manifest.get("kind") != "probe":
        raise CheckpointError(f"{path}: holds a {manifest.get('kind')!r} model, expected probe")
    shape = tuple(manifest["image_shape"])
    probe = ProbeClassifier(
        layers=probe_stack(shape, int(manifest["classes"]), RandomStream(int(manifest["seed"]), PROBE)),
        image_shape=shape, classes=int(manifest["classes"]), seed=int(manifest["seed"]),
        test_accuracy=float(manifest["test_accuracy"]))
    _fill(probe.named_parameters(), manifest, flat, path)
    return probe
