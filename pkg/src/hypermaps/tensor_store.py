"""Binary tensor files and the dataset manifest.

Tensor file layout (everything little-endian):

    offset  size        field
    0       4           magic, the ASCII bytes "HMTF"
    4       4           version, uint32 (currently 1)
    8       1           dtype code, uint8 (0 = float32, 1 = float64)
    9       1           ndim, uint8 (1 for flat vectors, 3 for C x H x W maps)
    10      4 * ndim    dims, uint32 each
    ...     itemsize*n  payload, row-major floats, n = product of dims

Writes are deterministic: the same dims/values produce identical bytes, so
files can be golden-hashed. The manifest is a JSON file listing one entry
per image with its per-layer tensor paths, fold tag (t0/t1) and optional
mask paths; paths are resolved relative to the manifest's directory.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, TensorFormatError, ValidationError

MAGIC = b"HMTF"
VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

TIME_TAGS = ("t0", "t1")
LAYER_NAMES = ("pool2", "conv4_3", "fc7")


def write_tensor_to(fh, dims, values, dtype_code: int = 0) -> None:
    """Serialize one tensor to an open binary stream."""
    dims = tuple(int(d) for d in dims)
    if len(dims) == 0:
        raise ValidationError("dims must be nonempty")
    if len(dims) not in (1, 3):
        raise ValidationError(f"ndim must be 1 or 3, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise ValidationError(f"dims must be positive, got {dims}")
    if dtype_code not in _DTYPES:
        raise ValidationError(f"unknown dtype code {dtype_code}")
    arr = np.ascontiguousarray(values, dtype=_DTYPES[dtype_code]).reshape(-1)
    n = int(np.prod(dims))
    if arr.size != n:
        raise ValidationError(
            f"value count {arr.size} does not match product of dims {dims} = {n}"
        )
    fh.write(MAGIC)
    fh.write(struct.pack("<I", VERSION))
    fh.write(struct.pack("<BB", dtype_code, len(dims)))
    fh.write(struct.pack(f"<{len(dims)}I", *dims))
    fh.write(arr.tobytes())


def write_tensor(path, dims, values, dtype_code: int = 0) -> None:
    """Write a tensor file atomically (temp file + rename)."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        write_tensor_to(fh, dims, values, dtype_code)
    os.replace(tmp, path)


def read_tensor_from(fh, name: str = "<stream>"):
    """Read one tensor; returns (dims, values) with values a 1-D array."""

    def need(n, what):
        buf = fh.read(n)
        if len(buf) != n:
            raise TensorFormatError(
                f"{name}: truncated {what}: expected {n} bytes, got {len(buf)}"
            )
        return buf

    magic = need(4, "magic")
    if magic != MAGIC:
        raise TensorFormatError(f"{name}: bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", need(4, "version"))
    if version != VERSION:
        raise TensorFormatError(f"{name}: unsupported version {version}")
    dtype_code, ndim = struct.unpack("<BB", need(2, "header"))
    if dtype_code not in _DTYPES:
        raise TensorFormatError(f"{name}: unsupported dtype code {dtype_code}")
    if ndim not in (1, 3):
        raise TensorFormatError(f"{name}: unsupported ndim {ndim}")
    dims = struct.unpack(f"<{ndim}I", need(4 * ndim, "dims"))
    dtype = _DTYPES[dtype_code]
    n = int(np.prod(dims))
    payload = fh.read(n * dtype.itemsize)
    if len(payload) != n * dtype.itemsize:
        raise TensorFormatError(
            f"{name}: truncated payload: expected {n * dtype.itemsize} bytes,"
            f" got {len(payload)}"
        )
    values = np.frombuffer(payload, dtype=dtype)
    return dims, values


def read_tensor(path):
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"tensor file not found: {path}")
    with open(path, "rb") as fh:
        return read_tensor_from(fh, name=path)


def read_tensor_array(path) -> np.ndarray:
    """Like read_tensor but reshaped to its dims."""
    dims, values = read_tensor(path)
    return values.reshape(dims)


@dataclass
class ManifestEntry:
    image_id: str
    time_tag: str
    layer_files: dict
    image_size: tuple  # (H, W) pixels
    change_mask_path: str | None = None
    label_mask_path: str | None = None
    fc7_granularity: str = "per_image"


@dataclass
class DatasetManifest:
    entries: list
    root: str = "."

    def resolve(self, rel) -> str:
        return os.path.normpath(os.path.join(self.root, rel))

    def fold(self, time_tag: str) -> list:
        return [e for e in self.entries if e.time_tag == time_tag]


@dataclass
class Violation:
    entry_index: int  # -1 for manifest-level problems
    field: str
    message: str

    def __str__(self):
        return f"entry {self.entry_index}, {self.field}: {self.message}"


def load_manifest(path) -> DatasetManifest:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"manifest not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "entries" not in doc:
        raise ValidationError(f"manifest {path} has no 'entries' list")
    entries = []
    for i, raw in enumerate(doc["entries"]):
        try:
            entries.append(
                ManifestEntry(
                    image_id=str(raw["image_id"]),
                    time_tag=str(raw["time_tag"]),
                    layer_files=dict(raw["layer_files"]),
                    image_size=tuple(int(v) for v in raw["image_size"]),
                    change_mask_path=raw.get("change_mask_path"),
                    label_mask_path=raw.get("label_mask_path"),
                    fc7_granularity=raw.get("fc7_granularity", "per_image"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"manifest {path}, entry {i}: {exc}") from exc
    return DatasetManifest(entries=entries, root=os.path.dirname(path) or ".")


def validate_manifest(manifest: DatasetManifest, required_layers=LAYER_NAMES):
    """Check manifest invariants; returns a list of Violations (empty = valid)."""
    violations = []
    seen_tags = set()
    for i, entry in enumerate(manifest.entries):
        if entry.time_tag not in TIME_TAGS:
            violations.append(
                Violation(i, "time_tag", f"must be one of {TIME_TAGS}, got {entry.time_tag!r}")
            )
        else:
            seen_tags.add(entry.time_tag)
        for layer in required_layers:
            rel = entry.layer_files.get(layer)
            if rel is None:
                violations.append(Violation(i, "layer_files", f"missing layer {layer!r}"))
            elif not os.path.exists(manifest.resolve(rel)):
                violations.append(
                    Violation(i, "layer_files", f"{layer} file not found: {rel}")
                )
        if len(entry.image_size) != 2 or any(v < 1 for v in entry.image_size):
            violations.append(
                Violation(i, "image_size", f"bad image size {entry.image_size}")
            )
        if entry.fc7_granularity not in ("per_image", "per_patch"):
            violations.append(
                Violation(i, "fc7_granularity", f"unknown value {entry.fc7_granularity!r}")
            )
        for fld in ("change_mask_path", "label_mask_path"):
            rel = getattr(entry, fld)
            if rel is not None and not os.path.exists(manifest.resolve(rel)):
                violations.append(Violation(i, fld, f"file not found: {rel}"))
    missing = set(TIME_TAGS) - seen_tags
    if manifest.entries and missing:
        violations.append(
            Violation(-1, "time_tag", f"fold(s) {sorted(missing)} have no entries")
        )
    return violations


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "entries": [
            {
                "image_id": e.image_id,
                "time_tag": e.time_tag,
                "layer_files": e.layer_files,
                "image_size": list(e.image_size),
                "change_mask_path": e.change_mask_path,
                "label_mask_path": e.label_mask_path,
                "fc7_granularity": e.fc7_granularity,
            }
            for e in manifest.entries
        ]
    }
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
