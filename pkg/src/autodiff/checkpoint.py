"""Binary checkpoint codec.

Layout (little-endian)::

    b"BAPN" | u32 version | record*

    record = u32 name_len | name (utf-8) | u32 ndim | u32 dims[ndim]
             | u32 step_count | f32 data | f32 m | f32 v

BatchNorm running statistics are stored as records with zero moments.
"""
import io
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from src.autodiff.nn import Module
from src.utils.errors import CheckpointCorrupt, IoFailure
from src.utils.logging import get_logger

logger = get_logger(__name__)

MAGIC = b"BAPN"
VERSION = 1
_U32 = struct.Struct("<I")


def _write_record(stream, name: str, data: np.ndarray, m: np.ndarray, v: np.ndarray, step_count: int) -> None:
    encoded = name.encode("utf-8")
    stream.write(_U32.pack(len(encoded)))
    stream.write(encoded)
    stream.write(_U32.pack(data.ndim))
    for dim in data.shape:
        stream.write(_U32.pack(dim))
    stream.write(_U32.pack(step_count))
    for array in (data, m, v):
        stream.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def encode_checkpoint(model: Module) -> bytes:
    stream = io.BytesIO()
    stream.write(MAGIC)
    stream.write(_U32.pack(VERSION))
    for name, p in model.named_parameters():
        _write_record(stream, name, p.data, p.m, p.v, p.step_count)
    for name, buffer in model.named_buffers():
        zeros = np.zeros_like(buffer)
        _write_record(stream, name, buffer, zeros, zeros, 0)
    return stream.getvalue()


def save_checkpoint(model: Module, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(model))
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc
    logger.info(f"💾 Checkpoint saved to {path}")
    return path


def _take(blob: bytes, offset: int, count: int) -> Tuple[bytes, int]:
    if offset + count > len(blob):
        raise CheckpointCorrupt("checkpoint ends in the middle of a record")
    return blob[offset:offset + count], offset + count


def decode_checkpoint(blob: bytes) -> Dict[str, dict]:
    """Records keyed by name: {"data", "m", "v", "step_count"}."""
    if blob[:4] != MAGIC:
        raise CheckpointCorrupt("bad magic bytes")
    raw, offset = _take(blob, 4, 4)
    version = _U32.unpack(raw)[0]
    if version != VERSION:
        raise CheckpointCorrupt(f"unsupported checkpoint version {version}")

    records = {}
    while offset < len(blob):
        raw, offset = _take(blob, offset, 4)
        name_bytes, offset = _take(blob, offset, _U32.unpack(raw)[0])
        try:
            name = name_bytes.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointCorrupt("record name is not utf-8") from exc
        raw, offset = _take(blob, offset, 4)
        ndim = _U32.unpack(raw)[0]
        raw, offset = _take(blob, offset, 4 * ndim)
        shape = struct.unpack(f"<{ndim}I", raw)
        raw, offset = _take(blob, offset, 4)
        step_count = _U32.unpack(raw)[0]
        count = int(np.prod(shape, dtype=np.int64))
        arrays = []
        for _ in range(3):
            raw, offset = _take(blob, offset, 4 * count)
            arrays.append(np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32))
        records[name] = {"data": arrays[0], "m": arrays[1], "v": arrays[2], "step_count": step_count}
    return records


def load_checkpoint(model: Module, path) -> Module:
    """Fill ``model`` in place; names and shapes must match exactly."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointCorrupt(f"checkpoint not found: {path}")
    records = decode_checkpoint(path.read_bytes())

    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    expected = set(params) | set(buffers)
    if set(records) != expected:
        missing = sorted(expected - set(records))[:3]
        extra = sorted(set(records) - expected)[:3]
        raise CheckpointCorrupt(f"record names do not match the model (missing {missing}, unexpected {extra})")

    for name, p in params.items():
        record = records[name]
        if record["data"].shape != p.shape:
            raise CheckpointCorrupt(f"{name}: shape {record['data'].shape} != {p.shape}")
        p.data = record["data"].astype(p.dtype)
        p.m = record["m"].astype(p.dtype)
        p.v = record["v"].astype(p.dtype)
        p.step_count = record["step_count"]
        p.grad = None
    for name, buffer in buffers.items():
        record = records[name]
        if record["data"].shape != buffer.shape:
            raise CheckpointCorrupt(f"{name}: shape {record['data'].shape} != {buffer.shape}")
        buffer[...] = record["data"]
    logger.info(f"✅ Loaded {len(params)} parameters from {path}")
    return model
