"""Flat binary container for named arrays plus a JSON metadata header.

Used for model checkpoints and serialized datasets. Layout:

    bytes 0..7    magic ``b"GHARRS1\\n"``
    u32 (LE)      byte length of the JSON header
    header        UTF-8 JSON: {"meta": {...}, "arrays": [{name, dtype, shape}, ...]}
    payload       raw C-order little-endian array bytes, in header order

Arrays are written sorted by name and the header uses sorted keys, so the
same content always serializes to the same bytes (round-trips bit-exactly).
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import MalformedFileError

MAGIC = b"GHARRS1\n"


def save_arrays(path, arrays: dict, meta: dict | None = None) -> None:
    """Write named numpy arrays and a JSON-serializable metadata dict."""
    names = sorted(arrays)
    header = {
        "meta": meta or {},
        "arrays": [
            {
                "name": name,
                "dtype": np.lib.format.dtype_to_descr(
                    arrays[name].dtype.newbyteorder("<")
                ),
                "shape": list(arrays[name].shape),
            }
            for name in names
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name in names:
            f.write(np.ascontiguousarray(arrays[name]).astype(
                arrays[name].dtype.newbyteorder("<"), copy=False).tobytes())


def load_arrays(path) -> tuple[dict, dict]:
    """Read a container written by :func:`save_arrays`.

    Returns ``(arrays, meta)``. Raises :class:`MalformedFileError` on a bad
    magic string or truncated payload.
    """
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise MalformedFileError(f"{path}: not an array container (bad magic)")
        (header_len,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(header_len).decode("utf-8"))
        arrays = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise MalformedFileError(f"{path}: truncated array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        trailing = f.read(1)
        if trailing:
            raise MalformedFileError(f"{path}: trailing bytes after payload")
    return arrays, header["meta"]
