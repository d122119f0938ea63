"""Wire formats shared with the runtime: PFM images and LHDRW001 weight files.

Implemented from the format definitions, not imported from the runtime
package, so the two sides genuinely exercise the interface.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LHDRW001"
ACTIVATION_CODES = {"none": 0, "relu": 1, "tanh": 2}
ACTIVATION_NAMES = {v: k for k, v in ACTIVATION_CODES.items()}

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def read_pfm(path) -> np.ndarray:
    """PFM file to (H, W, C) float32, top row first."""
    with open(path, "rb") as f:
        def token():
            t = b""
            while True:
                c = f.read(1)
                if not c:
                    raise ValueError(f"{path}: truncated PFM header")
                if c.isspace():
                    if t:
                        return t
                    continue
                t += c

        magic = token()
        channels = {b"PF": 3, b"Pf": 1}.get(magic)
        if channels is None:
            raise ValueError(f"{path}: not a PFM file")
        width, height = int(token()), int(token())
        scale = float(token())
        endian = "<" if scale < 0 else ">"
        raw = f.read(width * height * channels * 4)
        if len(raw) != width * height * channels * 4:
            raise ValueError(f"{path}: truncated PFM payload")
        data = np.frombuffer(raw, dtype=endian + "f4").reshape(height, width, channels)
    return np.ascontiguousarray(data[::-1]).astype(np.float32)


def write_pfm(path, data: np.ndarray) -> None:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    magic = b"PF" if arr.shape[2] == 3 else b"Pf"
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{arr.shape[1]} {arr.shape[0]}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(arr[::-1]).astype("<f4").tobytes())
    os.replace(tmp, path)


def read_sidecar(path) -> dict:
    meta = {}
    with open(path) as f:
        for line in f:
            if "=" in line:
                key, _, value = line.strip().partition("=")
                try:
                    meta[key] = float(value)
                except ValueError:
                    meta[key] = value
    return meta


def load_manifest(sample_dir) -> dict:
    with open(Path(sample_dir) / "manifest.json") as f:
        return json.load(f)


def save_bundle(layers: list, path, metadata: dict | None = None) -> None:
    """Write layers [(kernel (k,k,in,out) f32, bias (out,) f32, activation)] as LHDRW001.

    When metadata is given, a JSON sidecar is written next to the bundle.
    """
    parts = [MAGIC, struct.pack("<I", len(layers))]
    for kernel, bias, activation in layers:
        kernel = np.ascontiguousarray(kernel, dtype=np.float32)
        bias = np.ascontiguousarray(bias, dtype=np.float32)
        k, _, ci, co = kernel.shape
        parts.append(struct.pack("<IIIB", k, ci, co, ACTIVATION_CODES[activation]))
        parts.append(kernel.astype("<f4").tobytes())
        parts.append(bias.astype("<f4").tobytes())
    body = b"".join(parts)
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(body + struct.pack("<Q", fnv1a_64(body)))
    os.replace(tmp, path)
    if metadata is not None:
        side = Path(str(path) + ".json")
        tmp = Path(str(side) + ".tmp")
        with open(tmp, "w") as f:
            json.dump(metadata, f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, side)


def load_bundle(path) -> list:
    """Read an LHDRW001 file back into [(kernel, bias, activation)]."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 20 or blob[:8] != MAGIC:
        raise ValueError(f"{path}: not an LHDRW001 bundle")
    body, tail = blob[:-8], blob[-8:]
    if struct.unpack("<Q", tail)[0] != fnv1a_64(body):
        raise ValueError(f"{path}: checksum mismatch")
    (count,) = struct.unpack_from("<I", body, 8)
    off = 12
    layers = []
    for _ in range(count):
        k, ci, co, act = struct.unpack_from("<IIIB", body, off)
        off += 13
        kernel = np.frombuffer(body, dtype="<f4", count=k * k * ci * co, offset=off).reshape(k, k, ci, co).copy()
        off += k * k * ci * co * 4
        bias = np.frombuffer(body, dtype="<f4", count=co, offset=off).copy()
        off += co * 4
        layers.append((kernel, bias, ACTIVATION_NAMES[act]))
    if off != len(body):
        raise ValueError(f"{path}: trailing bytes")
    return layers
