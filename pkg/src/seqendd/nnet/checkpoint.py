"""Checkpoint container.

Layout: an 8-byte magic, a little-endian uint64 header length, a UTF-8
JSON header (format version, model config, parameter table), the raw
parameter data as little-endian float64 in table order, and a trailing
32-byte SHA-256 digest of everything before it.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import InputError
from . import autodiff as ad
from .model import ModelConfig, SeqModel

MAGIC = b"SEQENDD\x00"
FORMAT_VERSION = 1


def save_checkpoint(model: SeqModel, path) -> None:
    names = sorted(model.params)
    table = []
    offset = 0
    for name in names:
        shape = list(model.params[name].shape)
        count = int(np.prod(shape)) if shape else 1
        table.append({"name": name, "shape": shape, "offset": offset, "count": count})
        offset += count
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "config": model.config.to_dict(), "params": table},
        sort_keys=True,
    ).encode("utf-8")
    body = b"".join(np.ascontiguousarray(model.params[n].value, dtype="<f8").tobytes() for n in names)
    blob = MAGIC + struct.pack("<Q", len(header)) + header + body
    Path(path).write_bytes(blob + hashlib.sha256(blob).digest())


def load_checkpoint(path) -> SeqModel:
    path = Path(path)
    if not path.exists():
        raise InputError("checkpoint not found", location=str(path))
    raw = path.read_bytes()
    blob, digest = raw[:-32], raw[-32:]
    if len(raw) < 48 or not blob.startswith(MAGIC):
        raise InputError("not a checkpoint file", location=str(path))
    if hashlib.sha256(blob).digest() != digest:
        raise InputError("checksum mismatch", location=str(path))
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    if header["format_version"] != FORMAT_VERSION:
        raise InputError(f"unsupported format version {header['format_version']}", location=str(path))
    data = np.frombuffer(blob[16 + hlen :], dtype="<f8")
    params = {}
    for entry in header["params"]:
        chunk = data[entry["offset"] : entry["offset"] + entry["count"]]
        params[entry["name"]] = ad.parameter(chunk.astype(np.float64).reshape(entry["shape"]), name=entry["name"])
    return SeqModel(ModelConfig(**header["config"]), params)
