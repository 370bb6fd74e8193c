"""Image file I/O: PFM float maps and 8/16-bit PNG, plus atomic writes."""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np
from PIL import Image

from .errors import ConfigurationError


def write_pfm(path, data: np.ndarray):
    """Write a little-endian PFM (scale -1.0), grayscale 'Pf' or color 'PF'.

    PFM stores rows bottom-to-top.
    """
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        header = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
    else:
        raise ConfigurationError("PFM supports HxW or HxWx3 arrays")
    h, w = data.shape[:2]
    payload = np.flipud(data).astype("<f4").tobytes()
    blob = header + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n" + payload
    atomic_write_bytes(path, blob)


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header not in (b"Pf", b"PF"):
            raise ConfigurationError(f"not a PFM file: {path}")
        dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        count = w * h * (3 if header == b"PF" else 1)
        fmt = "<" if scale < 0 else ">"
        raw = np.frombuffer(fh.read(count * 4), dtype=fmt + "f4", count=count)
    shape = (h, w, 3) if header == b"PF" else (h, w)
    return np.flipud(raw.reshape(shape)).astype(np.float64)


def write_png(path, data: np.ndarray, bit_depth: int = 8):
    """Write [0,1] float data as 8- or 16-bit PNG (grayscale or RGB)."""
    data = np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0)
    if bit_depth == 8:
        arr = np.round(data * 255).astype(np.uint8)
        img = Image.fromarray(arr)
    elif bit_depth == 16:
        if data.ndim != 2:
            raise ConfigurationError("16-bit PNG export is grayscale only")
        arr = np.round(data * 65535).astype(np.uint16)
        img = Image.fromarray(arr)
    else:
        raise ConfigurationError("bit depth must be 8 or 16")
    _atomic_save(path, img)


def write_png_indices(path, indices: np.ndarray):
    """Write small nonnegative integer labels (depth plane indices) as 16-bit PNG."""
    arr = np.asarray(indices)
    if arr.min() < 0 or arr.max() > 65535:
        raise ConfigurationError("indices out of 16-bit range")
    _atomic_save(path, Image.fromarray(arr.astype(np.uint16)))


def read_png_indices(path) -> np.ndarray:
    return np.asarray(Image.open(path)).astype(np.int64)


def read_png(path) -> np.ndarray:
    """Read a PNG into [0,1] floats, preserving channel count."""
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype in (np.uint16, np.int32):
        return arr.astype(np.float64) / 65535.0
    raise ConfigurationError(f"unsupported PNG sample type {arr.dtype}")


def read_image(path) -> np.ndarray:
    path = str(path)
    if path.lower().endswith(".pfm"):
        return read_pfm(path)
    return read_png(path)


def atomic_write_bytes(path, blob: bytes):
    """Write via a temp file in the same directory, then rename."""
    path = str(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode())


def _atomic_save(path, img: Image.Image):
    import io

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())
