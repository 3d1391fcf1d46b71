"""Checkpoint files.

Layout: b"PUMC", u32 config length, canonical key-sorted JSON config,
u64 parameter-blob length, then every parameter in declaration order as a
PUMT-serialized tensor.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from ..autograd.io import FormatError, read_tensor, tensor_to_bytes
from .models import Model, ModelConfig, build_model

MAGIC = b"PUMC"


def checkpoint_bytes(model: Model) -> bytes:
    cfg = model.config.canonical().encode()
    blob = b"".join(tensor_to_bytes(p.data) for p in model.parameters())
    return MAGIC + struct.pack("<I", len(cfg)) + cfg + struct.pack("<Q", len(blob)) + blob


def save_checkpoint(model: Model, path) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(model))
    return path


def load_checkpoint(path) -> Model:
    return checkpoint_from_bytes(Path(path).read_bytes())


def checkpoint_from_bytes(buf: bytes) -> Model:
    fh = io.BytesIO(buf)
    if fh.read(4) != MAGIC:
        raise FormatError("not a PUMC checkpoint")
    try:
        (n_cfg,) = struct.unpack("<I", fh.read(4))
        cfg = ModelConfig.from_dict(json.loads(fh.read(n_cfg).decode()))
        (n_blob,) = struct.unpack("<Q", fh.read(8))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}") from exc
    start = fh.tell()
    if len(buf) - start != n_blob:
        raise FormatError(f"parameter blob is {len(buf) - start} bytes, header says {n_blob}")
    model = build_model(cfg, seed=0)
    for name, p in model.named_parameters():
        arr = read_tensor(fh)
        if arr.shape != p.shape:
            raise FormatError(f"parameter {name}: stored shape {arr.shape} != {p.shape}")
        p.data = np.array(arr, dtype=np.float32)
    if fh.tell() - start != n_blob:
        raise FormatError("parameter blob length mismatch")
    return model


def copy_model(model: Model) -> Model:
    return checkpoint_from_bytes(checkpoint_bytes(model))
