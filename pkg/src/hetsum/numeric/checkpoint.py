"""Binary parameter checkpoints.

Layout: one version byte, an 8-byte little-endian manifest length, a UTF-8
JSON manifest (``params``: name/shape/offset entries plus free-form ``meta``),
then every parameter as raw little-endian float64 in manifest order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_arrays(path, arrays: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    offset = 0
    for name, arr in arrays.items():
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += int(np.prod(arr.shape, dtype=np.int64)) * 8
    manifest = json.dumps({"params": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_arrays(path) -> tuple[dict, dict]:
    raw = Path(path).read_bytes()
    if not raw:
        raise CheckpointError(f"{path}: empty checkpoint")
    if raw[0] != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {raw[0]}")
    (length,) = struct.unpack("<Q", raw[1:9])
    manifest = json.loads(raw[9:9 + length].decode("utf-8"))
    base = 9 + length
    arrays = {}
    for entry in manifest["params"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = base + entry["offset"]
        if start + 8 * count > len(raw):
            raise CheckpointError(f"{path}: truncated data for {entry['name']}")
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=start)
        arrays[entry["name"]] = arr.astype(np.float64).reshape(entry["shape"])
    return arrays, manifest.get("meta", {})
