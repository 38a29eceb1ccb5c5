"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    magic   4 bytes  b"CAB1"
    version u32
    cfg_len u32, then cfg_len bytes of sorted-key config JSON
    n_params u32
    per parameter: u16 name length, utf-8 name, u8 ndim,
                   u32 per dimension, float64 raw data

Save -> load -> save is byte-identical because parameter order follows
registration order and the config JSON uses sorted keys.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import EmpathyModel, ModelConfig

MAGIC = b"CAB1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_bytes(model: EmpathyModel) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(cfg)))
    parts.append(cfg)
    named = list(model.named_parameters())
    parts.append(struct.pack("<I", len(named)))
    for name, p in named:
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", p.data.ndim))
        for d in p.data.shape:
            parts.append(struct.pack("<I", d))
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return b"".join(parts)


def save(model: EmpathyModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_bytes(model))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def read(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.read(4))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.read(2))[0]

    def u8(self) -> int:
        return struct.unpack("<B", self.read(1))[0]


def load_bytes(blob: bytes) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    r = _Reader(blob)
    if r.read(4) != MAGIC:
        raise CheckpointError("bad magic bytes, not a checkpoint file")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    cfg = ModelConfig.from_dict(json.loads(r.read(r.u32()).decode("utf-8")))
    params: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.read(r.u16()).decode("utf-8")
        ndim = r.u8()
        shape = tuple(r.u32() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.read(count * 8), dtype="<f8").reshape(shape)
        params[name] = data.astype(np.float64)
    return cfg, params


def load(path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        return load_bytes(fh.read())


def restore(model: EmpathyModel, cfg: ModelConfig,
            params: dict[str, np.ndarray]) -> EmpathyModel:
    """Copy loaded parameters into a model built for the same config."""
    if model.config.to_dict() != cfg.to_dict():
        raise CheckpointError("checkpoint config does not match the model config")
    own = dict(model.named_parameters())
    if set(own) != set(params):
        missing = set(own) ^ set(params)
        raise CheckpointError(f"parameter name mismatch: {sorted(missing)[:5]}")
    for name, value in params.items():
        if own[name].data.shape != value.shape:
            raise CheckpointError(f"shape mismatch for {name}: "
                                  f"{own[name].data.shape} vs {value.shape}")
        own[name].data[...] = value
    return model


def load_model(path, rng=None) -> tuple[EmpathyModel, ModelConfig]:
    cfg, params = load(path)
    rng = rng if rng is not None else np.random.default_rng(0)
    model = EmpathyModel(cfg, rng)
    restore(model, cfg, params)
    return model, cfg
