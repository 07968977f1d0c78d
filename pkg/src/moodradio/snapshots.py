"""Versioned binary container for model artifacts.

A snapshot is a single file: an 8-byte magic, a little-endian uint32 length,
a UTF-8 JSON header, then the raw bytes of each array in header order
(C-contiguous, little-endian). The layout contains no timestamps, so saving
the same payload twice produces byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

MAGIC = b"MRSNAP01"
FORMAT_VERSION = 1


class SnapshotError(Exception):
    """Unreadable or structurally invalid snapshot file."""


class SnapshotVersionError(SnapshotError):
    """Snapshot format version not supported by this build."""


def save_snapshot(
    path: str | Path,
    kind: str,
    payload: dict[str, Any],
    arrays: dict[str, np.ndarray] | None = None,
    model_version: str | None = None,
) -> None:
    """Write a snapshot. `payload` must be JSON-serializable."""
    arrays = arrays or {}
    header: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "model_version": model_version,
        "payload": payload,
        "arrays": [
            {
                "name": name,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
            }
            for name, arr in arrays.items()
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(4, "little"))
        fh.write(header_bytes)
        for name, arr in arrays.items():
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_snapshot(
    path: str | Path, expected_kind: str | None = None
) -> tuple[dict[str, Any], dict[str, np.ndarray], str | None]:
    """Read a snapshot, returning (payload, arrays, model_version)."""
    path = Path(path)
    if not path.exists():
        raise SnapshotError(f"snapshot file not found: {path}")
    data = path.read_bytes()
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise SnapshotError(f"corrupt snapshot (bad magic): {path}")
    offset = len(MAGIC)
    header_len = int.from_bytes(data[offset : offset + 4], "little")
    offset += 4
    if offset + header_len > len(data):
        raise SnapshotError(f"corrupt snapshot (truncated header): {path}")
    try:
        header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"corrupt snapshot (unreadable header): {path}") from exc
    offset += header_len

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise SnapshotVersionError(
            f"snapshot version {version!r} in {path} not supported "
            f"(this build reads version {FORMAT_VERSION})"
        )
    kind = header.get("kind")
    if expected_kind is not None and kind != expected_kind:
        raise SnapshotError(f"snapshot kind {kind!r} in {path}, expected {expected_kind!r}")

    arrays: dict[str, np.ndarray] = {}
    for spec in header.get("arrays", []):
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = dtype.itemsize * count
        if offset + nbytes > len(data):
            raise SnapshotError(f"corrupt snapshot (truncated array {spec['name']!r}): {path}")
        arr = np.frombuffer(data[offset : offset + nbytes], dtype=dtype).reshape(shape)
        arrays[spec["name"]] = arr.copy()
        offset += nbytes
    if offset != len(data):
        raise SnapshotError(f"corrupt snapshot (trailing bytes): {path}")
    return header["payload"], arrays, header.get("model_version")
