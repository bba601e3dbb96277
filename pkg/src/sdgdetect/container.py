"""Model container files: one JSON header line plus raw array payloads.

Layout: a single UTF-8 JSON line (sorted keys, no timestamps, so identical
inputs give identical bytes), then each declared array as little-endian
C-order raw bytes in header order. Embedding and TF-IDF containers use
32-bit floats; classifier containers keep 64-bit weights so a save/load
round trip reproduces scores exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class ContainerError(Exception):
    """A container file is malformed or truncated."""


def write_container(
    path: str | Path,
    meta: dict,
    arrays: list[tuple[str, np.ndarray]],
    dtype: str = "<f4",
) -> None:
    """Write ``meta`` and named arrays; ``dtype`` applies to every payload."""
    header = {
        "format": "sdgdetect-container-v1",
        "meta": meta,
        "arrays": [
            {"name": name, "shape": list(arr.shape), "dtype": dtype} for name, arr in arrays
        ],
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8"))
        fh.write(b"\n")
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes())


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container, returning (meta, arrays as float64)."""
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerError(f"{path}: bad container header: {exc}") from exc
        if not isinstance(header, dict) or header.get("format") != "sdgdetect-container-v1":
            raise ContainerError(f"{path}: not a sdgdetect container")
        arrays: dict[str, np.ndarray] = {}
        for spec in header.get("arrays", []):
            dt = np.dtype(spec["dtype"])
            shape = tuple(int(x) for x in spec["shape"])
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize if shape else dt.itemsize
            raw = fh.read(n_bytes)
            if len(raw) != n_bytes:
                raise ContainerError(f"{path}: truncated payload for array {spec['name']!r}")
            arrays[spec["name"]] = (
                np.frombuffer(raw, dtype=dt).reshape(shape).astype(np.float64)
            )
        if fh.read(1):
            raise ContainerError(f"{path}: trailing bytes after declared payload")
    return header["meta"], arrays
