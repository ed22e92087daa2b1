"""Single-file checkpoint container.

Layout: one line of JSON (no embedded newlines) terminated by '\n', then the
raw little-endian payloads. The header maps each tensor name to
(dtype, shape, byte-offset), offsets relative to the end of the header line.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .tensor import Tensor

FORMAT_VERSION = 1


def save_checkpoint(path, tensors: dict[str, Tensor | np.ndarray],
                    meta: dict | None = None) -> None:
    entries = {}
    offset = 0
    arrays = []
    for name, t in tensors.items():
        arr = t.data if isinstance(t, Tensor) else np.asarray(t)
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        entries[name] = [str(arr.dtype), list(arr.shape), offset]
        arrays.append(le)
        offset += le.nbytes
    header = {"format_version": FORMAT_VERSION, "tensors": entries,
              "meta": meta or {}}
    blob = json.dumps(header, separators=(",", ":")).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(blob)
        for le in arrays:
            fh.write(le.tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise DataError(f"{path}: not a checkpoint file (no header line)")
    try:
        header = json.loads(raw[:nl])
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: bad checkpoint header: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format_version "
                        f"{header.get('format_version')!r}")
    payload = raw[nl + 1:]
    out = {}
    for name, (dtype, shape, offset) in header["tensors"].items():
        dt = np.dtype(dtype).newbyteorder("<")
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=offset)
        out[name] = arr.astype(np.dtype(dtype)).reshape(shape)
    return out, header.get("meta", {})


def load_into(path, named_params: dict[str, Tensor]) -> dict:
    """Load a checkpoint into an existing parameter dict, strict on names."""
    arrays, meta = load_checkpoint(path)
    missing = set(named_params) - set(arrays)
    extra = set(arrays) - set(named_params)
    if missing or extra:
        raise DataError(f"checkpoint mismatch: missing={sorted(missing)[:5]} "
                        f"extra={sorted(extra)[:5]}")
    for name, p in named_params.items():
        arr = arrays[name]
        if tuple(arr.shape) != tuple(p.shape):
            raise DataError(f"checkpoint tensor {name}: shape {arr.shape} "
                            f"vs expected {p.shape}")
        p.data = arr.astype(p.data.dtype)
    return meta
