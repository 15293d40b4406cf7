"""Flat binary containers for tensors and model checkpoints.

Both formats are a 4-byte magic, a little-endian uint32 header length, a JSON
header (utf-8, sorted keys), then raw little-endian tensor bytes in C order.
Writing the same arrays twice produces byte-identical files.

Tensor file  (magic PSTN): header {"dtype", "shape"} and one payload tensor.
Checkpoint   (magic PSCK): header {"format_version", "seed", "config",
"tensors": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]} followed by
the payload buffers at their stated offsets (relative to the payload start,
name-sorted, densely packed).
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import IOFailure, MissingArtifact

TENSOR_MAGIC = b"PSTN"
CHECKPOINT_MAGIC = b"PSCK"
CHECKPOINT_FORMAT_VERSION = 1

_ALLOWED_DTYPES = ("float32", "float64", "int64", "int32", "uint8")


def _dtype_of(arr: np.ndarray) -> str:
    name = arr.dtype.name
    if name not in _ALLOWED_DTYPES:
        raise IOFailure(f"unsupported tensor dtype {name}")
    return name


def _encode_header(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise IOFailure(f"truncated file while reading {what}")
    return data


def save_tensor(path, arr: np.ndarray) -> None:
    """Write one array to ``path`` in the PSTN container."""
    a = np.ascontiguousarray(arr)
    header = _encode_header({"dtype": _dtype_of(a), "shape": list(a.shape)})
    try:
        with open(str(path), "wb") as fh:
            fh.write(TENSOR_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes(order="C"))
    except OSError as exc:
        raise IOFailure(f"cannot write tensor file {path}: {exc}") from exc


def load_tensor(path, mmap: bool = False) -> np.ndarray:
    """Read a PSTN tensor; ``mmap=True`` memory-maps the payload read-only."""
    path = str(path)
    if not os.path.isfile(path):
        raise MissingArtifact(f"tensor file not found: {path}")
    try:
        with open(path, "rb") as fh:
            magic = _read_exact(fh, 4, "magic")
            if magic != TENSOR_MAGIC:
                raise IOFailure(f"{path}: bad magic {magic!r}")
            (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
            header = json.loads(_read_exact(fh, hlen, "header").decode("utf-8"))
            dtype = np.dtype(header["dtype"]).newbyteorder("<")
            shape = tuple(int(s) for s in header["shape"])
            offset = fh.tell()
        if mmap:
            arr = np.memmap(path, dtype=dtype, mode="r", offset=offset, shape=shape)
            return arr
        with open(path, "rb") as fh:
            fh.seek(offset)
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            buf = _read_exact(fh, nbytes, "payload")
        return np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    except (OSError, ValueError, KeyError) as exc:
        raise IOFailure(f"cannot read tensor file {path}: {exc}") from exc


def save_checkpoint(path, tensors: dict, config: dict, seed: int) -> None:
    """Write named tensors plus config echo and seed to a PSCK container.

    Tensor payloads are laid out densely in name order, so the file bytes are
    a pure function of (tensors, config, seed).
    """
    items = []
    offset = 0
    arrays = {}
    for name in sorted(tensors):
        a = np.ascontiguousarray(tensors[name])
        arrays[name] = a
        items.append(
            {
                "name": name,
                "dtype": _dtype_of(a),
                "shape": list(a.shape),
                "offset": offset,
                "nbytes": int(a.nbytes),
            }
        )
        offset += int(a.nbytes)
    header = _encode_header(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "seed": int(seed),
            "config": config,
            "tensors": items,
        }
    )
    try:
        with open(str(path), "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            for name in sorted(arrays):
                a = arrays[name]
                fh.write(a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes(order="C"))
    except OSError as exc:
        raise IOFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path):
    """Read a PSCK container.

    Returns:
        (meta, tensors): meta is the decoded header dict (format_version,
        seed, config, tensors manifest); tensors maps name -> ndarray.
    """
    path = str(path)
    if not os.path.isfile(path):
        raise MissingArtifact(f"checkpoint not found: {path}")
    try:
        with open(path, "rb") as fh:
            magic = _read_exact(fh, 4, "magic")
            if magic != CHECKPOINT_MAGIC:
                raise IOFailure(f"{path}: bad magic {magic!r}")
            (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
            meta = json.loads(_read_exact(fh, hlen, "header").decode("utf-8"))
            if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
                raise IOFailure(
                    f"{path}: unsupported format version {meta.get('format_version')}"
                )
            payload_start = fh.tell()
            tensors = {}
            for item in meta["tensors"]:
                dtype = np.dtype(item["dtype"]).newbyteorder("<")
                shape = tuple(int(s) for s in item["shape"])
                fh.seek(payload_start + int(item["offset"]))
                buf = _read_exact(fh, int(item["nbytes"]), f"tensor {item['name']}")
                tensors[item["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
        return meta, tensors
    except (OSError, ValueError, KeyError) as exc:
        raise IOFailure(f"cannot read checkpoint {path}: {exc}") from exc
