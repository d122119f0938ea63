"""PFM (portable float map) reading/writing plus per-frame metadata sidecars.

We write little-endian PFM only (scale line -1.0), 1-channel "Pf" or
3-channel "PF", rows stored bottom-to-top as the format requires. A frame's
metadata sidecar is a plain-text key=value file next to the .pfm with the
same stem and a .txt suffix.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .imaging import LinearImage


def _read_token(f) -> bytes:
    """Read one whitespace-delimited header token."""
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise FormatError("unexpected end of PFM header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float32 array of shape (H, W, C), top row first."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise FormatError(f"{path}: not a PFM file (magic {magic!r})")
        try:
            width = int(_read_token(f))
            height = int(_read_token(f))
            scale = float(_read_token(f))
        except ValueError as e:
            raise FormatError(f"{path}: malformed PFM header: {e}") from None
        if width <= 0 or height <= 0:
            raise FormatError(f"{path}: bad PFM dimensions {width}x{height}")
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise FormatError(f"{path}: truncated PFM payload")
        data = np.frombuffer(raw, dtype=endian + "f4").reshape(height, width, channels)
    # PFM stores rows bottom-up
    return np.ascontiguousarray(data[::-1]).astype(np.float32)


def write_pfm(path, data: np.ndarray) -> None:
    """Write a (H, W) or (H, W, C) float32 array as little-endian PFM, atomically."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ParameterError(f"PFM supports 1 or 3 channels, got shape {arr.shape}")
    height, width, channels = arr.shape
    magic = b"PF" if channels == 3 else b"Pf"
    payload = np.ascontiguousarray(arr[::-1]).astype("<f4").tobytes()
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{width} {height}\n".encode())
        f.write(b"-1.0\n")
        f.write(payload)
    os.replace(tmp, path)


def write_sidecar(path, meta: dict) -> None:
    """Write key=value metadata lines next to a frame, atomically."""
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as f:
        for key, value in meta.items():
            f.write(f"{key}={value}\n")
    os.replace(tmp, path)


def read_sidecar(path) -> dict:
    """Parse a key=value sidecar into a dict of floats where possible."""
    meta = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            try:
                meta[key] = float(value)
            except ValueError:
                meta[key] = value
    return meta


def sidecar_path(pfm_path) -> Path:
    return Path(pfm_path).with_suffix(".txt")


def save_frame(img: LinearImage, path, iso: float = 100.0, duration_s: float = 0.0) -> None:
    """Write a frame PFM plus its exposure metadata sidecar."""
    write_pfm(path, img.data)
    write_sidecar(
        sidecar_path(path),
        {"exposure_scale": repr(img.exposure_scale), "iso": repr(float(iso)), "duration_s": repr(float(duration_s))},
    )


def load_frame(path) -> LinearImage:
    """Read a frame PFM; exposure comes from the sidecar if present, else 1.0."""
    data = read_pfm(path)
    exposure = 1.0
    sc = sidecar_path(path)
    if sc.exists():
        meta = read_sidecar(sc)
        exposure = float(meta.get("exposure_scale", 1.0))
    return LinearImage(data, exposure_scale=exposure)
