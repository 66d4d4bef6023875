"""Raster file format: a small JSON header next to a raw float32
little-endian payload.

The header carries {"kind": "image"|"sinogram", "shape": [rows, cols],
"pixel_size": number, "dtype": "f32le", "data": relative payload path} and,
for sinograms, the angle list in radians. For a sinogram, "pixel_size" is
the detector spacing. Headers are written with sorted keys so identical
content is byte-identical.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError
from .tomo import Image, Sinogram

__all__ = ["write_raster", "read_raster", "write_json", "read_json"]

_DTYPE = "f32le"


def _header_path(path) -> Path:
    p = Path(path)
    if p.suffix != ".json":
        p = p.with_suffix(".json")
    return p


def write_json(path, obj) -> None:
    """Serialize JSON deterministically (sorted keys, fixed separators)."""
    text = json.dumps(obj, sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc


def write_raster(path, obj: Image | Sinogram) -> Path:
    """Write an image or sinogram as header JSON plus .bin payload; returns
    the header path. Values are stored as row-major float32."""
    header_path = _header_path(path)
    data_path = header_path.with_suffix(".bin")
    if isinstance(obj, Image):
        header = {
            "kind": "image",
            "shape": [obj.height, obj.width],
            "pixel_size": obj.pixel_size,
            "dtype": _DTYPE,
            "data": data_path.name,
        }
        values = obj.values
    elif isinstance(obj, Sinogram):
        header = {
            "kind": "sinogram",
            "shape": [obj.n_angles, obj.n_detectors],
            "angles": [float(a) for a in obj.angles],
            "pixel_size": obj.detector_spacing,
            "dtype": _DTYPE,
            "data": data_path.name,
        }
        values = obj.values
    else:
        raise TypeError(f"cannot write {type(obj).__name__} as a raster")
    payload = np.ascontiguousarray(values, dtype="<f4")
    data_path.write_bytes(payload.tobytes())
    write_json(header_path, header)
    return header_path


def read_raster(path) -> Image | Sinogram:
    """Read a raster pair back; values come in as float32 widened to
    float64."""
    header_path = _header_path(path)
    header = read_json(header_path)
    for key in ("kind", "shape", "pixel_size", "dtype", "data"):
        if key not in header:
            raise FormatError(f"{header_path}: missing header field {key!r}")
    if header["dtype"] != _DTYPE:
        raise FormatError(f"{header_path}: unsupported dtype {header['dtype']!r}")
    shape = header["shape"]
    if (
        not isinstance(shape, list)
        or len(shape) != 2
        or any((not isinstance(v, int)) or v <= 0 for v in shape)
    ):
        raise FormatError(f"{header_path}: bad shape {shape!r}")
    rows, cols = shape
    data_path = header_path.parent / header["data"]
    raw = data_path.read_bytes()
    if len(raw) != 4 * rows * cols:
        raise FormatError(
            f"{data_path}: payload is {len(raw)} bytes, expected {4 * rows * cols}"
        )
    values = np.frombuffer(raw, dtype="<f4").reshape(rows, cols).astype(np.float64)
    if header["kind"] == "image":
        return Image(cols, rows, float(header["pixel_size"]), values)
    if header["kind"] == "sinogram":
        angles = header.get("angles")
        if angles is None or len(angles) != rows:
            raise FormatError(f"{header_path}: sinogram needs {rows} angles")
        return Sinogram(np.asarray(angles, dtype=np.float64), float(header["pixel_size"]), values)
    raise FormatError(f"{header_path}: unknown kind {header['kind']!r}")
