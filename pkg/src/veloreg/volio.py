"""Raw little-endian volumes with a JSON header sidecar.

``<name>.raw`` holds the payload, ``<name>.json`` the header::

    {"dims": [N1, N2, N3], "dtype": "f32" | "u16",
     "order": "x3-fastest", "domain": "2pi"}
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_DTYPES = {"f32": np.dtype("<f4"), "u16": np.dtype("<u2")}
ORDER = "x3-fastest"
DOMAIN = "2pi"


class VolumeFormatError(ValueError):
    pass


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".raw", ".json"):
        p = p.with_suffix("")
    return p.with_suffix(".raw"), p.with_suffix(".json")


def dtype_tag(arr: np.ndarray) -> str:
    if arr.dtype.kind == "f":
        return "f32"
    if arr.dtype.kind in "ui":
        return "u16"
    raise VolumeFormatError(f"unsupported array dtype {arr.dtype}")


def write_volume(field: np.ndarray, path) -> Path:
    """Write a scalar field (``f32``) or label map (``u16``); returns the .raw path."""
    if field.ndim != 3:
        raise VolumeFormatError(f"expected a 3D array, got shape {field.shape}")
    tag = dtype_tag(field)
    if tag == "u16" and field.size and (field.min() < 0 or field.max() > 0xFFFF):
        raise VolumeFormatError("label values do not fit in uint16")
    raw, meta = _paths(path)
    raw.parent.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(field, dtype=_DTYPES[tag])
    raw.write_bytes(payload.tobytes())
    header = {"dims": list(field.shape), "dtype": tag, "order": ORDER, "domain": DOMAIN}
    meta.write_text(json.dumps(header, indent=2) + "\n")
    return raw


def read_header(path) -> dict:
    _, meta = _paths(path)
    if not meta.exists():
        raise VolumeFormatError(f"missing header sidecar {meta}")
    try:
        header = json.loads(meta.read_text())
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"unreadable header {meta}: {exc}") from exc
    if header.get("dtype") not in _DTYPES:
        raise VolumeFormatError(f"unknown dtype tag {header.get('dtype')!r}")
    if header.get("order", ORDER) != ORDER:
        raise VolumeFormatError(f"unsupported order {header['order']!r}")
    if header.get("domain", DOMAIN) != DOMAIN:
        raise VolumeFormatError(f"unsupported domain {header['domain']!r}")
    dims = header.get("dims")
    if not isinstance(dims, list) or len(dims) != 3 or any(
            not isinstance(n, int) or n <= 0 for n in dims):
        raise VolumeFormatError(f"bad dims {dims!r}")
    return header


def read_volume(path) -> np.ndarray:
    """Read a volume; float payloads come back as float32, labels as uint16."""
    raw, _ = _paths(path)
    header = read_header(path)
    if not raw.exists():
        raise VolumeFormatError(f"missing payload {raw}")
    dt = _DTYPES[header["dtype"]]
    data = raw.read_bytes()
    expected = int(np.prod(header["dims"])) * dt.itemsize
    if len(data) != expected:
        raise VolumeFormatError(
            f"{raw}: payload is {len(data)} bytes, header implies {expected}")
    arr = np.frombuffer(data, dtype=dt).reshape(header["dims"])
    return arr.astype(dt.newbyteorder("="))


def write_vector(field: np.ndarray, stem) -> list[Path]:
    """Write a vector field as three volumes ``<stem>_1 .. <stem>_3``."""
    stem = Path(stem)
    return [write_volume(field[i].astype(np.float32), stem.parent / f"{stem.name}_{i + 1}")
            for i in range(3)]


def read_vector(stem) -> np.ndarray:
    stem = Path(stem)
    comps = [read_volume(stem.parent / f"{stem.name}_{i + 1}") for i in range(3)]
    if len({c.shape for c in comps}) != 1:
        raise VolumeFormatError("vector components have different dims")
    return np.stack(comps)
