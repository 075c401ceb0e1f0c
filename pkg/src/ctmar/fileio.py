"""Bit-exact array files, manifests, and 16-bit PNG import.

Every array is stored as a flat little-endian float32 payload (``.f32``)
next to a JSON sidecar header (``.json``) that records shape, byte order,
a sha256 of the payload, and caller metadata (role, spacing, intensity
window, ...). Headers and manifests are canonical JSON (sorted keys,
fixed separators) so byte-identical reruns produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

__all__ = [
    "canonical_json",
    "write_array",
    "read_array",
    "read_header",
    "header_digest",
    "write_manifest",
    "read_manifest",
    "write_bundle",
    "read_bundle",
    "import_png16",
]


def canonical_json(payload: dict[str, Any]) -> str:
    """Deterministic JSON encoding used for headers and manifests."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _stem(path: str | Path) -> Path:
    p = Path(path)
    if p.suffix in (".f32", ".json"):
        return p.with_suffix("")
    return p


def write_array(path: str | Path, values: np.ndarray, metadata: dict[str, Any] | None = None) -> Path:
    """Write ``values`` as float32 payload + JSON header; returns the stem path.

    Values are cast to float32; callers that need bit-exact round trips
    should hand in float32 already.
    """
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(values, dtype="<f4")
    payload = arr.tobytes()
    header: dict[str, Any] = {
        "byte_order": "little",
        "dtype": "float32",
        "shape": list(arr.shape),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    for key, value in (metadata or {}).items():
        if key in header:
            raise ValueError(f"metadata key {key!r} collides with a reserved header field")
        header[key] = value
    stem.with_suffix(".f32").write_bytes(payload)
    stem.with_suffix(".json").write_text(canonical_json(header) + "\n")
    return stem


def read_header(path: str | Path) -> dict[str, Any]:
    return json.loads(_stem(path).with_suffix(".json").read_text())


def read_array(path: str | Path) -> tuple[np.ndarray, dict[str, Any]]:
    """Read an array file, verifying length and payload hash."""
    stem = _stem(path)
    header = read_header(stem)
    if header.get("dtype") != "float32" or header.get("byte_order") != "little":
        raise ValueError(f"{stem}: unsupported dtype/byte order in header")
    payload = stem.with_suffix(".f32").read_bytes()
    shape = tuple(int(n) for n in header["shape"])
    expected = int(np.prod(shape)) * 4 if shape else 4
    if len(payload) != expected:
        raise ValueError(f"{stem}: payload is {len(payload)} bytes, header implies {expected}")
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["sha256"]:
        raise ValueError(f"{stem}: payload sha256 mismatch (corrupt or edited file)")
    values = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return values.copy(), header


def header_digest(path: str | Path) -> str:
    """sha256 of the canonical header, used to pin files inside manifests."""
    header = read_header(path)
    return hashlib.sha256(canonical_json(header).encode()).hexdigest()


def write_manifest(path: str | Path, payload: dict[str, Any]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(canonical_json(payload) + "\n")
    return p


def read_manifest(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def write_bundle(
    path: str | Path, arrays: dict[str, np.ndarray], metadata: dict[str, Any] | None = None
) -> Path:
    """Write named float64 arrays as one ``.bin`` payload + JSON sidecar.

    Used for model checkpoints, where float32 quantization would break
    exact agreement between a trained model and its reloaded copy.
    Entries are laid out in sorted name order, so equal contents give
    byte-identical files.
    """
    stem = Path(path)
    if stem.suffix in (".bin", ".json"):
        stem = stem.with_suffix("")
    stem.parent.mkdir(parents=True, exist_ok=True)
    chunks: list[bytes] = []
    entries: dict[str, Any] = {}
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        blob = arr.tobytes()
        entries[name] = {"offset": offset, "shape": list(arr.shape)}
        chunks.append(blob)
        offset += len(blob)
    payload = b"".join(chunks)
    header: dict[str, Any] = {
        "byte_order": "little",
        "dtype": "float64",
        "entries": entries,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    if metadata:
        header["metadata"] = metadata
    stem.with_suffix(".bin").write_bytes(payload)
    stem.with_suffix(".json").write_text(canonical_json(header) + "\n")
    return stem


def read_bundle(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """Read a checkpoint bundle, verifying the payload hash."""
    stem = Path(path)
    if stem.suffix in (".bin", ".json"):
        stem = stem.with_suffix("")
    header = json.loads(stem.with_suffix(".json").read_text())
    if header.get("dtype") != "float64" or header.get("byte_order") != "little":
        raise ValueError(f"{stem}: unsupported bundle dtype/byte order")
    payload = stem.with_suffix(".bin").read_bytes()
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise ValueError(f"{stem}: bundle payload sha256 mismatch")
    arrays: dict[str, np.ndarray] = {}
    for name, entry in header["entries"].items():
        shape = tuple(int(n) for n in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = int(entry["offset"])
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        arrays[name] = arr.reshape(shape).copy()
    return arrays, header


def import_png16(path: str | Path, intensity_window: tuple[float, float]) -> np.ndarray:
    """Load a 16-bit grayscale PNG and map [0, 65535] onto the window."""
    lo, hi = intensity_window
    if not hi > lo:
        raise ValueError(f"intensity window must satisfy hi > lo, got ({lo}, {hi})")
    with Image.open(path) as img:
        if img.mode != "I;16" and img.mode != "I":
            raise ValueError(f"{path}: expected 16-bit grayscale PNG, got mode {img.mode!r}")
        raw = np.asarray(img, dtype=np.float64)
    if raw.max() > 65535 or raw.min() < 0:
        raise ValueError(f"{path}: sample values outside the 16-bit range")
    return (lo + (raw / 65535.0) * (hi - lo)).astype(np.float32)
