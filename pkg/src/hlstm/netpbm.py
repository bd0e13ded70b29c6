"""Binary PPM (P6) / PGM (P5) reading and writing, 8- or 16-bit."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _header(kind, width, height, maxval):
    return f"{kind}\n{width} {height}\n{maxval}\n".encode("ascii")


def _dtype(maxval):
    return np.dtype(">u2") if maxval > 255 else np.dtype("u1")


def write_pgm(path, array, maxval=255):
    array = np.asarray(array)
    if array.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    if array.min() < 0 or array.max() > maxval:
        raise ValueError(f"values outside [0, {maxval}]")
    h, w = array.shape
    Path(path).write_bytes(_header("P5", w, h, maxval) + array.astype(_dtype(maxval)).tobytes())


def write_ppm(path, rgb):
    """``rgb`` is 3 x H x W in [0, 1]; stored as 8-bit after rounding."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError("PPM needs a 3 x H x W array")
    _, h, w = rgb.shape
    data = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    Path(path).write_bytes(_header("P6", w, h, 255) + np.moveaxis(data, 0, -1).tobytes())


def _read(path):
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos].decode("ascii"))
    pos += 1  # single whitespace before the raster
    kind, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    return kind, w, h, maxval, raw[pos:]


def read_pgm(path):
    kind, w, h, maxval, body = _read(path)
    if kind != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    return np.frombuffer(body, dtype=_dtype(maxval), count=w * h).reshape(h, w).astype(np.int64)


def read_ppm(path):
    """Returns 3 x H x W float64 in [0, 1]."""
    kind, w, h, maxval, body = _read(path)
    if kind != "P6":
        raise ValueError(f"{path}: not a binary PPM")
    data = np.frombuffer(body, dtype=_dtype(maxval), count=w * h * 3).reshape(h, w, 3)
    return np.moveaxis(data.astype(np.float64) / maxval, -1, 0)
