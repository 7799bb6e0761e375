"""Flat binary parameter checkpoints.

Layout (little-endian): magic "HSCK" | u32 version | u32 config_len | model
config JSON | u32 tensor count | per tensor: u32 name_len | name | u32 ndim |
ndim x u32 | real64 data. Reloading is bit-exact.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

import numpy as np

from ablations import build_variant
from errors import DatasetFormatError
from fusion_model import FusionTransformer
from models import ModelConfig

logger = logging.getLogger(__name__)

MAGIC = b"HSCK"
VERSION = 1


def encode_checkpoint(model: FusionTransformer) -> bytes:
    cfg = json.dumps(model.cfg.to_dict(), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg, struct.pack("<I", len(model.store))]
    for name, t in model.store.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
        parts.append(t.data.astype("<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(model: FusionTransformer, path: Path):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(encode_checkpoint(model))
    tmp.replace(path)
    logger.info("saved %d tensors to %s", len(model.store), path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.buf):
            raise DatasetFormatError(f"truncated checkpoint while reading {what}", self.offset)
        chunk = self.buf[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def u32(self, what: str, count: int = 1) -> tuple[int, ...]:
        return struct.unpack(f"<{count}I", self.take(4 * count, what))


def decode_checkpoint(buf: bytes) -> FusionTransformer:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise DatasetFormatError("bad checkpoint magic", 0)
    version, cfg_len = r.u32("header", 2)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported checkpoint version {version}", 4)
    try:
        cfg = ModelConfig.from_dict(json.loads(r.take(cfg_len, "model config").decode("utf-8")))
    except (ValueError, TypeError, KeyError) as e:
        raise DatasetFormatError(f"unreadable model config: {e}", 12) from None
    model = build_variant(cfg)
    (count,) = r.u32("tensor count")
    if count != len(model.store):
        raise DatasetFormatError(f"checkpoint holds {count} tensors, model expects {len(model.store)}", r.offset)
    for _ in range(count):
        start = r.offset
        (name_len,) = r.u32("tensor name length")
        try:
            name = r.take(name_len, "tensor name").decode("utf-8")
        except UnicodeDecodeError:
            raise DatasetFormatError("tensor name is not valid UTF-8", start) from None
        (ndim,) = r.u32(f"rank of {name}")
        shape = r.u32(f"shape of {name}", ndim) if ndim else ()
        if name not in model.store or model.store[name].shape != tuple(shape):
            raise DatasetFormatError(f"tensor {name!r} with shape {tuple(shape)} does not fit the model", start)
        n = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(8 * n, f"data of {name}"), dtype="<f8").reshape(shape)
        model.store[name].data[...] = data
    if r.offset != len(buf):
        raise DatasetFormatError(f"{len(buf) - r.offset} trailing bytes", r.offset)
    return model


def load_checkpoint(path: Path) -> FusionTransformer:
    return decode_checkpoint(Path(path).read_bytes())
