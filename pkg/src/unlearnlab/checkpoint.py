"""Binary weight checkpoints with digest verification.

Layout: 8-byte magic, u32 format version, u32 header length, a UTF-8 JSON
header {config, dtype, segments, sha256-of-payload}, then the raw parameter
values little-endian in segment order. Loads reject any digest or version
mismatch outright; writes go to a temp file renamed on completion so a crash
never leaves a half-written checkpoint behind.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, ParameterVector, Segment

MAGIC = b"ULABCKPT"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _payload_bytes(pv: ParameterVector) -> bytes:
    return np.ascontiguousarray(pv.values, dtype=pv.values.dtype.newbyteorder("<")).tobytes()


def checkpoint_save(pv: ParameterVector, config: ModelConfig, path: str | Path) -> None:
    path = Path(path)
    payload = _payload_bytes(pv)
    header = {
        "config": config.to_dict(),
        "dtype": pv.values.dtype.name,
        "segments": [[s.name, s.offset, s.length] for s in pv.segments],
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload)
    os.replace(tmp, path)


def checkpoint_load(path: str | Path) -> tuple[ParameterVector, ModelConfig]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) + 8 or data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    hstart = len(MAGIC) + 8
    if len(data) < hstart + hlen:
        raise CheckpointError(f"{path}: truncated header")
    header = json.loads(data[hstart : hstart + hlen])
    payload = data[hstart + hlen :]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CheckpointError(f"{path}: payload digest mismatch")
    dtype = np.dtype(header["dtype"]).newbyteorder("<")
    values = np.frombuffer(payload, dtype=dtype).astype(header["dtype"], copy=True)
    segments = tuple(Segment(n, o, l) for n, o, l in header["segments"])
    if values.size != sum(s.length for s in segments):
        raise CheckpointError(f"{path}: truncated payload")
    pv = ParameterVector(values, segments)
    return pv, ModelConfig.from_dict(header["config"])
