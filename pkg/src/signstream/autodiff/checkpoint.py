"""Checkpoint persistence: a text index plus one float32 little-endian blob.

The index file holds ``# key=value`` metadata lines followed by one
``name<TAB>shape<TAB>offset`` line per array, sorted by name. Offsets are
byte positions into the companion ``.bin`` blob. Round-trips of float32
arrays are bit-exact.
"""

from __future__ import annotations

import os
from typing import Optional

import numpy as np

from ..errors import CorruptionError


def save(path_prefix: str, arrays: dict[str, np.ndarray], meta: Optional[dict] = None) -> None:
    names = sorted(arrays)
    os.makedirs(os.path.dirname(os.path.abspath(path_prefix)), exist_ok=True)
    lines = []
    for key, value in sorted((meta or {}).items()):
        lines.append(f"# {key}={value}")
    offset = 0
    blob_parts = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        shape = ",".join(str(s) for s in arr.shape) or "scalar"
        lines.append(f"{name}\t{shape}\t{offset}")
        blob_parts.append(arr.tobytes())
        offset += arr.nbytes
    with open(path_prefix + ".idx", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(path_prefix + ".bin", "wb") as fh:
        fh.write(b"".join(blob_parts))


def load(path_prefix: str) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    meta: dict[str, str] = {}
    entries: list[tuple[str, tuple[int, ...], int]] = []
    with open(path_prefix + ".idx", "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# "):
                key, _, value = line[2:].partition("=")
                meta[key] = value
                continue
            name, shape_str, offset_str = line.split("\t")
            shape = () if shape_str == "scalar" else tuple(int(s) for s in shape_str.split(","))
            entries.append((name, shape, int(offset_str)))
    with open(path_prefix + ".bin", "rb") as fh:
        blob = fh.read()
    arrays: dict[str, np.ndarray] = {}
    for name, shape, offset in entries:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(blob):
            raise CorruptionError(f"checkpoint blob truncated for entry {name!r}")
        arrays[name] = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape).copy()
    return arrays, meta
