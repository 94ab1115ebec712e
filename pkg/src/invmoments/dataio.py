"""Reading samples from text and binary files."""

from __future__ import annotations

import sys

import numpy as np

from .errors import DataError
from .lstats import Sample


def parse_csv_text(text):
    """One value per line; blank lines and ``#`` comments are ignored.

    A line may hold several comma-separated fields, in which case the first
    is used.
    """
    values = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        field = line.split(",", 1)[0].strip()
        try:
            values.append(float(field))
        except ValueError:
            raise DataError(f"line {lineno}: cannot parse {field!r} as a number") from None
    return values


def read_csv(path):
    if path == "-":
        text = sys.stdin.read()
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from None
    return _to_sample(parse_csv_text(text), path)


def read_binary(path):
    """Raw little-endian float64 stream."""
    try:
        if path == "-":
            raw = sys.stdin.buffer.read()
        else:
            with open(path, "rb") as fh:
                raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if len(raw) % 8:
        raise DataError(f"{path}: size {len(raw)} is not a multiple of 8 bytes")
    return _to_sample(np.frombuffer(raw, dtype="<f8"), path)


def read_sample(path, fmt="auto"):
    """Read a sample; ``fmt`` is ``"csv"``, ``"bin"`` or ``"auto"`` (by extension)."""
    if fmt == "auto":
        fmt = "bin" if str(path).endswith((".bin", ".f64", ".raw")) else "csv"
    if fmt == "csv":
        return read_csv(path)
    if fmt == "bin":
        return read_binary(path)
    raise DataError(f"unknown data format {fmt!r}")


def _to_sample(values, path):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise DataError(f"{path}: no data values")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite values")
    return Sample(arr)
