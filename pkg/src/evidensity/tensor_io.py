"""Array and annotation I/O.

Arrays travel as NPY v1.0 containers: magic ``\\x93NUMPY``, version (1, 0),
a Python-literal header dict with ``descr`` ``<f4`` or ``<f8``,
``fortran_order`` false and a 2-D ``(H, W)`` or 3-D ``(T, H, W)`` shape,
followed by the raw little-endian payload.  Everything is converted to
float64 on ingest; 3-D stacks are additionally clamped to [0, 1] (with the
clamp count logged) because they hold per-source likelihood maps.

Head annotations are JSON::

    {"width": int, "height": int, "points": [[x, y], ...],
     "perspective": {"rows": [int, ...], "scale": [float, ...]}}

``perspective`` is optional and maps image rows to a bandwidth multiplier;
rows must be strictly increasing and scales positive.  Between sampled rows
the scale is interpolated linearly; beyond the table it is clamped.
"""

from __future__ import annotations

import ast
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    NpyFormatError,
    ParameterError,
    RankError,
    SchemaError,
    ShapeError,
    ValidationError,
)

logger = logging.getLogger(__name__)

_MAGIC = b"\x93NUMPY"
_VERSION = b"\x01\x00"
_HEADER_START = len(_MAGIC) + 2 + 2  # magic + version + uint16 header length
_ALLOWED_DESCR = ("<f4", "<f8")

WORKING_DTYPE = np.float64


@dataclass(frozen=True)
class HeadAnnotations:
    """Head-center points for one image plus an optional perspective table."""

    width: int
    height: int
    points: np.ndarray  # (N, 2) float64, columns (x, y)
    perspective_rows: np.ndarray | None = None
    perspective_scale: np.ndarray | None = None

    def scale_at(self, row):
        """Perspective bandwidth multiplier at image row(s) ``row``."""
        if self.perspective_rows is None:
            return np.ones_like(np.asarray(row, dtype=float))
        return np.interp(row, self.perspective_rows, self.perspective_scale)


def _check_finite(values: np.ndarray) -> None:
    finite = np.isfinite(values)
    if not finite.all():
        index = np.unravel_index(int(np.argmin(finite)), values.shape)
        raise DataError(f"non-finite value at index {tuple(int(i) for i in index)}")


def _check_shape(shape: tuple[int, ...]) -> None:
    if len(shape) not in (2, 3):
        raise RankError(f"expected a 2-D map or 3-D stack, got rank {len(shape)}")
    if any(dim <= 0 for dim in shape):
        raise ShapeError(f"degenerate dimensions {shape}")


def _parse_header(blob: bytes) -> tuple[np.dtype, tuple[int, ...], int]:
    if len(blob) < len(_MAGIC) or blob[: len(_MAGIC)] != _MAGIC:
        raise NpyFormatError("bad magic string", 0)
    if len(blob) < len(_MAGIC) + 2 or blob[len(_MAGIC) : len(_MAGIC) + 2] != _VERSION:
        raise NpyFormatError("unsupported container version (need 1.0)", len(_MAGIC))
    if len(blob) < _HEADER_START:
        raise NpyFormatError("truncated header length field", len(_MAGIC) + 2)
    header_len = int.from_bytes(blob[len(_MAGIC) + 2 : _HEADER_START], "little")
    data_start = _HEADER_START + header_len
    if len(blob) < data_start:
        raise NpyFormatError("truncated header", _HEADER_START)
    try:
        header = ast.literal_eval(blob[_HEADER_START:data_start].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise NpyFormatError(f"unparsable header dict: {exc}", _HEADER_START) from None
    if not isinstance(header, dict) or not {"descr", "fortran_order", "shape"} <= set(header):
        raise NpyFormatError("header missing descr/fortran_order/shape", _HEADER_START)
    descr = header["descr"]
    if descr not in _ALLOWED_DESCR:
        raise NpyFormatError(f"unsupported descr {descr!r} (need <f4 or <f8)", _HEADER_START)
    if header["fortran_order"] is not False:
        raise NpyFormatError("fortran_order must be false", _HEADER_START)
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(d, int) for d in shape):
        raise NpyFormatError(f"malformed shape {shape!r}", _HEADER_START)
    return np.dtype(descr), shape, data_start


def read_array(path) -> np.ndarray:
    """Load a density map (2-D) or realization stack (3-D) from ``path``.

    Returns a C-contiguous float64 array.  Stacks are clamped to [0, 1];
    the number of clamped values is logged.
    """
    blob = Path(path).read_bytes()
    dtype, shape, data_start = _parse_header(blob)
    _check_shape(shape)
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(blob) - data_start != expected:
        raise NpyFormatError(
            f"payload holds {len(blob) - data_start} bytes, header promises {expected}",
            data_start,
        )
    values = np.frombuffer(blob, dtype=dtype, offset=data_start).reshape(shape)
    values = np.ascontiguousarray(values, dtype=WORKING_DTYPE)
    _check_finite(values)
    if values.ndim == 3:
        outside = int(np.count_nonzero((values < 0.0) | (values > 1.0)))
        if outside:
            logger.info("clamped %d stack values to [0, 1] while reading %s", outside, path)
            values = np.clip(values, 0.0, 1.0)
    return values


def _atomic_write_bytes(payload: bytes, path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_array(values, path, dtype: str = "<f8") -> None:
    """Store a 2-D map or 3-D stack at ``path``; write-then-read is bit-exact.

    The file is written to a temporary sibling and renamed into place, so a
    failed write never clobbers an existing output.
    """
    if dtype not in _ALLOWED_DESCR:
        raise ParameterError(f"unsupported descr {dtype!r} (need <f4 or <f8)")
    values = np.asarray(values, dtype=WORKING_DTYPE)
    _check_shape(values.shape)
    _check_finite(values)
    if values.ndim == 2 and (values < 0.0).any():
        index = np.unravel_index(int(np.argmax(values < 0.0)), values.shape)
        raise DataError(f"negative density value at index {tuple(int(i) for i in index)}")
    if values.ndim == 3 and ((values < 0.0) | (values > 1.0)).any():
        raise DataError("stack values must lie in [0, 1]")
    header = {
        "descr": dtype,
        "fortran_order": False,
        "shape": tuple(int(d) for d in values.shape),
    }
    text = (
        "{"
        + ", ".join(f"'{key}': {header[key]!r}" for key in ("descr", "fortran_order", "shape"))
        + ", }"
    )
    # Pad so the payload starts on a 64-byte boundary, newline-terminated.
    unpadded = _HEADER_START + len(text) + 1
    text = text + " " * (-unpadded % 64) + "\n"
    payload = (
        _MAGIC
        + _VERSION
        + len(text).to_bytes(2, "little")
        + text.encode("latin1")
        + np.ascontiguousarray(values.astype(np.dtype(dtype))).tobytes()
    )
    _atomic_write_bytes(payload, path)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise SchemaError(message)


def read_annotations(path) -> HeadAnnotations:
    """Parse a head-annotation JSON file (see module docstring for schema)."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
    _require(isinstance(raw, dict), "top level must be an object")
    for key in ("width", "height"):
        _require(
            key in raw and isinstance(raw[key], int) and not isinstance(raw[key], bool),
            f"'{key}' must be an integer",
        )
        _require(raw[key] > 0, f"'{key}' must be positive")
    width, height = raw["width"], raw["height"]
    _require(isinstance(raw.get("points"), list), "'points' must be a list")
    points = np.zeros((len(raw["points"]), 2), dtype=WORKING_DTYPE)
    for i, entry in enumerate(raw["points"]):
        _require(
            isinstance(entry, list) and len(entry) == 2
            and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in entry),
            f"point {i} must be an [x, y] pair of numbers",
        )
        x, y = float(entry[0]), float(entry[1])
        if not (np.isfinite(x) and np.isfinite(y) and 0 <= x < width and 0 <= y < height):
            raise ValidationError(
                f"point {i} at ({x}, {y}) outside [0, {width}) x [0, {height})"
            )
        points[i] = (x, y)
    rows = scale = None
    if "perspective" in raw and raw["perspective"] is not None:
        table = raw["perspective"]
        _require(isinstance(table, dict), "'perspective' must be an object")
        _require(
            isinstance(table.get("rows"), list) and isinstance(table.get("scale"), list),
            "'perspective' needs 'rows' and 'scale' lists",
        )
        _require(len(table["rows"]) == len(table["scale"]) and len(table["rows"]) >= 1,
                 "'rows' and 'scale' must have equal, nonzero length")
        rows = np.asarray(table["rows"], dtype=WORKING_DTYPE)
        scale = np.asarray(table["scale"], dtype=WORKING_DTYPE)
        _require(bool((np.diff(rows) > 0).all()), "'rows' must be strictly increasing")
        _require(
            bool(np.isfinite(scale).all() and (scale > 0).all()),
            "'scale' values must be positive and finite",
        )
    return HeadAnnotations(width, height, points, rows, scale)


def write_annotations(annotations: HeadAnnotations, path) -> None:
    raw: dict = {
        "width": annotations.width,
        "height": annotations.height,
        "points": [[float(x), float(y)] for x, y in annotations.points],
    }
    if annotations.perspective_rows is not None:
        raw["perspective"] = {
            "rows": [int(r) for r in annotations.perspective_rows],
            "scale": [float(s) for s in annotations.perspective_scale],
        }
    _atomic_write_bytes(json.dumps(raw, indent=2).encode("utf-8"), path)
