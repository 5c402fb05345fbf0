"""Named-tensor container files.

Layout: one UTF-8 JSON header line carrying format/version, arbitrary
metadata and an ordered tensor manifest ``[{"name", "shape", "dtype"}]``;
then the raw row-major little-endian bytes of each tensor, concatenated in
manifest order. Model checkpoints store every tensor as fp32.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .errors import FormatError

CHECKPOINT_FORMAT = "bem-checkpoint"
CHECKPOINT_VERSION = 1

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def save_tensors(path: str, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    manifest = []
    for name in sorted(tensors):
        arr = tensors[name]
        code = "<f8" if arr.dtype == np.float64 else "<f4"
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": code})
    header = dict(meta)
    header["tensors"] = manifest
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for entry in manifest:
            arr = tensors[entry["name"]]
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[entry["dtype"]]).tobytes())


def load_tensors(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError(f"{path}: not a tensor container (bad header line)") from None
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header.get("tensors", []):
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise FormatError(f"{path}: unsupported tensor dtype {entry['dtype']!r}")
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"{path}: truncated tensor data for {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes after tensors")
    return header, tensors


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()
