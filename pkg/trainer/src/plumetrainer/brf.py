"""Minimal BRF reader/writer for the trainer.

Implements just the slices of the BRF interchange format the trainer needs:
reading [V, S, V] stack tiles and mask tiles, and writing prediction masks
(u8) and probability fields (f32). Deliberately independent of the
producing package; the on-disk format is the contract.

Format recap: one JSON header line ending in 0x0A, then a raw band-
sequential row-major little-endian payload whose byte count must match
width*height*bands*dtype_size exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("|u1")}


class BrfError(ValueError):
    pass


def _parse(path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise BrfError(f"{path}: missing header line")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("magic") != "BRF1":
        raise BrfError(f"{path}: not a BRF1 file")
    dtype = _DTYPES.get(header.get("dtype"))
    if dtype is None:
        raise BrfError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    w, h = int(header["width"]), int(header["height"])
    bands = header.get("bands")
    n = len(bands) if header.get("kind") == "scene" else 1
    payload = raw[nl + 1 :]
    if len(payload) != w * h * n * dtype.itemsize:
        raise BrfError(f"{path}: payload size mismatch")
    return header, np.frombuffer(payload, dtype=dtype).reshape(n, h, w)


def read_stack(path) -> np.ndarray:
    """Read a [V, S, V] stack tile as a (3, H, W) float32 array."""
    header, data = _parse(path)
    if header.get("kind") != "scene" or header.get("meta", {}).get("stack") != "vsv":
        raise BrfError(f"{path}: not a feature-stack file")
    if header.get("bands") != ["V", "S", "V2"]:
        raise BrfError(f"{path}: unexpected stack bands {header.get('bands')}")
    return np.ascontiguousarray(data.astype(np.float32))


def read_mask(path) -> np.ndarray:
    """Read a mask tile as a (H, W) uint8 array."""
    header, data = _parse(path)
    if header.get("kind") != "mask":
        raise BrfError(f"{path}: not a mask file")
    return np.ascontiguousarray(data[0])


def _write(path, header: dict, payload: bytes) -> None:
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    Path(path).write_bytes(line + payload)


def write_mask(labels: np.ndarray, path) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    h, w = labels.shape
    _write(
        path,
        {"magic": "BRF1", "kind": "mask", "dtype": "u8",
         "width": w, "height": h, "meta": {}},
        labels.tobytes(),
    )


def write_field(values: np.ndarray, path) -> None:
    values = np.ascontiguousarray(values, dtype="<f4")
    if not np.all(np.isfinite(values)):
        raise BrfError("refusing to write non-finite field values")
    h, w = values.shape
    _write(
        path,
        {"magic": "BRF1", "kind": "field", "dtype": "f32",
         "width": w, "height": h, "meta": {}},
        values.tobytes(),
    )
