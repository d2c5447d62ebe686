"""Binary checkpoint files: magic "FOVD", versioned, little-endian f32.

Layout: magic, u32 version, u32-length JSON config block, u32 tensor
count, then per tensor a u16-length name, u8 rank, u32 dims, and the raw
row-major f32 payload. Tensor order is fixed by parameter name order so
identical states serialize byte-identically.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import DiTConfig, DiTParams
from .tensor import Parameter

MAGIC = b"FOVD"
VERSION = 1

_LATENT_MEAN = "latent_norm.mean"
_LATENT_STD = "latent_norm.std"


class CheckpointError(ValueError):
    """File is not a valid checkpoint or is incompatible with the reader."""


@dataclass
class Checkpoint:
    """Model weights plus the latent normalization constants they assume."""

    params: DiTParams
    latent_mean: np.ndarray
    latent_std: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def config(self) -> DiTConfig:
        return self.params.config


def save(path: str | Path, ckpt: Checkpoint):
    cfg_block = json.dumps(
        {"model": asdict(ckpt.params.config), "meta": ckpt.meta}, sort_keys=True
    ).encode()
    tensors = list(ckpt.params.named())
    tensors.append((_LATENT_MEAN, ckpt.latent_mean))
    tensors.append((_LATENT_STD, ckpt.latent_std))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(cfg_block)))
        fh.write(cfg_block)
        fh.write(struct.pack("<I", len(tensors)))
        for name, t in tensors:
            arr = np.ascontiguousarray(t.data if isinstance(t, Parameter) else t, dtype="<f4")
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a FOVD checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        (cfg_len,) = struct.unpack("<I", fh.read(4))
        blob = json.loads(fh.read(cfg_len).decode())
        (count,) = struct.unpack("<I", fh.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode()
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(4 * size), dtype="<f4").reshape(shape)
            tensors[name] = data
    config = DiTConfig(**blob["model"])
    try:
        mean = tensors.pop(_LATENT_MEAN)
        std = tensors.pop(_LATENT_STD)
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing latent normalization tensors") from exc
    params = DiTParams(config=config, tensors={k: Parameter(v) for k, v in tensors.items()})
    return Checkpoint(params=params, latent_mean=mean.copy(), latent_std=std.copy(), meta=blob["meta"])
