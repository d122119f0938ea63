"""Minimal dense inference runtime for the tiny fixed-architecture CNNs.

Network tensors are plain float32 numpy arrays in planar (C, H, W) layout,
which keeps the convolution inner loops contiguous; images convert to planes
at the feature-extraction boundary. Convolutions are stride 1 with replicate
padding and accumulate in float32 in (ky, kx, ci) order per output element,
bit-identical to a naive sequential loop over the same operands.

Weight files ("LHDRW001"): 8-byte magic, then little-endian
u32 layer_count; per layer { u32 k, in_ch, out_ch; u8 activation;
f32 kernel[k*k*in*out] in (ky, kx, in, out) order; f32 bias[out] };
trailing u64 FNV-1a hash of all preceding bytes. Activation codes:
0 = none, 1 = relu, 2 = tanh.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import FormatError, ParameterError, WeightIncompatibilityError

MAGIC = b"LHDRW001"
ACTIVATION_CODES = {"none": 0, "relu": 1, "tanh": 2}
ACTIVATION_NAMES = {v: k for k, v in ACTIVATION_CODES.items()}

# Hard ceiling on the combined parameter count of the three default networks.
PARAM_BUDGET = 70_000

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a_64(data: bytes, h: int = _FNV_OFFSET) -> int:
    """64-bit FNV-1a over a byte string."""
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class ConvLayerSpec:
    kernel_size: int
    in_channels: int
    out_channels: int
    activation: str

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ParameterError(f"kernel size must be odd and >= 1, got {self.kernel_size}")
        if self.activation not in ACTIVATION_CODES:
            raise ParameterError(f"unknown activation {self.activation!r}")

    @property
    def param_count(self) -> int:
        k = self.kernel_size
        return k * k * self.in_channels * self.out_channels + self.out_channels

    def header_bytes(self) -> bytes:
        return struct.pack(
            "<IIIB", self.kernel_size, self.in_channels, self.out_channels, ACTIVATION_CODES[self.activation]
        )


@dataclass(frozen=True)
class NetworkSpec:
    """Named sequence of conv+activation layers with chained channel counts."""

    name: str
    layers: tuple[ConvLayerSpec, ...]

    def __post_init__(self):
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.out_channels != cur.in_channels:
                raise ParameterError(
                    f"{self.name}: layer channels do not chain ({prev.out_channels} -> {cur.in_channels})"
                )

    @property
    def in_channels(self) -> int:
        return self.layers[0].in_channels

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    @property
    def param_count(self) -> int:
        return sum(layer.param_count for layer in self.layers)

    @property
    def architecture_hash(self) -> int:
        return fnv1a_64(b"".join(layer.header_bytes() for layer in self.layers))


@dataclass
class LayerWeights:
    kernel: np.ndarray  # (k, k, in, out) float32
    bias: np.ndarray  # (out,) float32
    activation: str

    def __post_init__(self):
        self.kernel = np.ascontiguousarray(self.kernel, dtype=np.float32)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float32)
        if self.kernel.ndim != 4 or self.kernel.shape[0] != self.kernel.shape[1]:
            raise ParameterError(f"kernel must be (k, k, in, out), got {self.kernel.shape}")
        if self.kernel.shape[0] % 2 == 0:
            raise ParameterError("kernel size must be odd")
        if self.bias.shape != (self.kernel.shape[3],):
            raise ParameterError(f"bias shape {self.bias.shape} does not match kernel {self.kernel.shape}")
        if self.activation not in ACTIVATION_CODES:
            raise ParameterError(f"unknown activation {self.activation!r}")

    @property
    def spec(self) -> ConvLayerSpec:
        k, _, ci, co = self.kernel.shape
        return ConvLayerSpec(k, ci, co, self.activation)


@dataclass
class WeightBundle:
    """Flat sequence of layer weights, serializable to the LHDRW001 format."""

    layers: list[LayerWeights]
    format_version: int = 1

    @property
    def param_count(self) -> int:
        return sum(layer.spec.param_count for layer in self.layers)

    @property
    def architecture_hash(self) -> int:
        return fnv1a_64(b"".join(layer.spec.header_bytes() for layer in self.layers))

    def slice(self, start: int, count: int) -> "WeightBundle":
        if start + count > len(self.layers):
            raise ParameterError(f"cannot slice layers [{start}:{start + count}] of {len(self.layers)}")
        return WeightBundle(self.layers[start : start + count], self.format_version)


def _padded_buffer(c: int, h: int, w: int, r: int) -> np.ndarray:
    return np.empty((c, h + 2 * r, w + 2 * r), dtype=np.float32)


def _fill_border(buf: np.ndarray, r: int) -> None:
    """Replicate the interior edge into the r-wide border of a padded buffer."""
    if r == 0:
        return
    h = buf.shape[1] - 2 * r
    w = buf.shape[2] - 2 * r
    buf[:, r : h + r, :r] = buf[:, r : h + r, r : r + 1]
    buf[:, r : h + r, w + r :] = buf[:, r : h + r, w + r - 1 : w + r]
    buf[:, :r, :] = buf[:, r : r + 1, :]
    buf[:, h + r :, :] = buf[:, h + r - 1 : h + r, :]


def _check_tensor(t: np.ndarray) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float32)
    if arr.ndim != 3:
        raise ParameterError(f"expected (C, H, W) tensor, got shape {arr.shape}")
    return arr


def conv2d(t: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-size stride-1 convolution with replicate padding.

    t: (C, H, W); kernel: (k, k, C, Co); bias: (Co,). Returns (Co, H, W).
    """
    arr = _check_tensor(t)
    kernel = np.ascontiguousarray(kernel, dtype=np.float32)
    bias = np.ascontiguousarray(bias, dtype=np.float32)
    if kernel.ndim != 4 or kernel.shape[0] != kernel.shape[1]:
        raise ParameterError(f"kernel must be (k, k, in, out), got {kernel.shape}")
    if kernel.shape[0] % 2 == 0:
        raise ParameterError("kernel size must be odd")
    if kernel.shape[2] != arr.shape[0]:
        raise ParameterError(f"kernel expects {kernel.shape[2]} input channels, tensor has {arr.shape[0]}")
    if bias.shape != (kernel.shape[3],):
        raise ParameterError(f"bias shape {bias.shape} does not match kernel {kernel.shape}")
    c, h, w = arr.shape
    r = kernel.shape[0] // 2
    xp = _padded_buffer(c, h, w, r)
    xp[:, r : h + r, r : w + r] = arr
    _fill_border(xp, r)
    out = np.empty((kernel.shape[3], h, w), dtype=np.float32)
    _kernels.conv2d_planar(xp, kernel, bias, out, False)
    return out


def _apply_activation(view: np.ndarray, activation: str) -> None:
    # relu is fused into the conv store; only tanh runs as a separate pass
    if activation == "tanh":
        np.tanh(view, out=view)


def forward(spec: NetworkSpec, weights: WeightBundle, t: np.ndarray) -> np.ndarray:
    """Run a network: sequential conv + activation layers, deterministic.

    The weight bundle's architecture hash must match the spec's.
    """
    if weights.architecture_hash != spec.architecture_hash:
        raise WeightIncompatibilityError(
            f"weights do not match architecture {spec.name!r} "
            f"(hash {weights.architecture_hash:#018x} != {spec.architecture_hash:#018x})"
        )
    arr = _check_tensor(t)
    if arr.shape[0] != spec.in_channels:
        raise ParameterError(f"{spec.name} expects {spec.in_channels} input channels, got {arr.shape[0]}")
    h, w = arr.shape[1], arr.shape[2]

    # Chain layers through padded buffers: each conv writes into the interior
    # of the next padded buffer, activation runs in place, then the border is
    # refreshed by replication. Saves a full pad copy per layer.
    r0 = spec.layers[0].kernel_size // 2
    buf = _padded_buffer(arr.shape[0], h, w, r0)
    buf[:, r0 : h + r0, r0 : w + r0] = arr
    _fill_border(buf, r0)
    for i, (layer, lw) in enumerate(zip(spec.layers, weights.layers)):
        r_next = spec.layers[i + 1].kernel_size // 2 if i + 1 < len(spec.layers) else 0
        out_buf = _padded_buffer(layer.out_channels, h, w, r_next)
        view = out_buf[:, r_next : h + r_next, r_next : w + r_next]
        _kernels.conv2d_planar(buf, lw.kernel, lw.bias, view, layer.activation == "relu")
        _apply_activation(view, layer.activation)
        _fill_border(out_buf, r_next)
        buf = out_buf
    return buf


def softmax_channels(t: np.ndarray) -> np.ndarray:
    """Per-pixel softmax across the channel axis, stabilized by max subtraction."""
    arr = _check_tensor(t)
    if arr.shape[0] < 2:
        raise ParameterError("softmax needs at least 2 channels")
    shifted = arr - arr.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def avg_downsample(t: np.ndarray, d: int) -> np.ndarray:
    """d x d box average of a (C, H, W) tensor; replicate-pads ragged edges."""
    arr = _check_tensor(t)
    if d < 1:
        raise ParameterError(f"downsample factor must be >= 1, got {d}")
    if d == 1:
        return arr.copy()
    c, h, w = arr.shape
    ph = (-h) % d
    pw = (-w) % d
    if ph or pw:
        arr = np.pad(arr, ((0, 0), (0, ph), (0, pw)), mode="edge")
    out = np.empty((c, arr.shape[1] // d, arr.shape[2] // d), dtype=np.float32)
    _kernels.box_downsample_planar(np.ascontiguousarray(arr), d, out)
    return out


def bilinear_upsample(t: np.ndarray, d: int) -> np.ndarray:
    """Bilinear upsample of a (C, h, w) tensor by an integer factor (half-pixel centers)."""
    arr = _check_tensor(t)
    if d < 1:
        raise ParameterError(f"upsample factor must be >= 1, got {d}")
    if d == 1:
        return arr.copy()
    c, h, w = arr.shape
    out = np.empty((c, h * d, w * d), dtype=np.float32)
    _kernels.upsample_bilinear_planar(np.ascontiguousarray(arr), out)
    return out


def save_weights(bundle: WeightBundle, path) -> None:
    """Serialize a bundle to the LHDRW001 format with a trailing FNV-1a hash."""
    parts = [MAGIC, struct.pack("<I", len(bundle.layers))]
    for layer in bundle.layers:
        parts.append(layer.spec.header_bytes())
        parts.append(layer.kernel.astype("<f4").tobytes())
        parts.append(layer.bias.astype("<f4").tobytes())
    body = b"".join(parts)
    blob = body + struct.pack("<Q", fnv1a_64(body))
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def load_weights(path) -> WeightBundle:
    """Read an LHDRW001 weight file, verifying structure and trailing hash."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 4 + 8:
        raise FormatError(f"{path}: file too short to be a weight bundle")
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:8]!r}")
    body, tail = blob[:-8], blob[-8:]
    (stored_hash,) = struct.unpack("<Q", tail)
    if fnv1a_64(body) != stored_hash:
        raise FormatError(f"{path}: trailing hash mismatch, file corrupted")
    off = len(MAGIC)
    (layer_count,) = struct.unpack_from("<I", body, off)
    off += 4
    layers = []
    for i in range(layer_count):
        if off + 13 > len(body):
            raise FormatError(f"{path}: truncated at layer {i} header")
        k, ci, co, act = struct.unpack_from("<IIIB", body, off)
        off += 13
        if act not in ACTIVATION_NAMES:
            raise FormatError(f"{path}: unknown activation code {act} in layer {i}")
        if k < 1 or k % 2 == 0 or ci < 1 or co < 1:
            raise FormatError(f"{path}: malformed layer {i} header (k={k}, in={ci}, out={co})")
        kn = k * k * ci * co * 4
        bn = co * 4
        if off + kn + bn > len(body):
            raise FormatError(f"{path}: truncated at layer {i} payload")
        kernel = np.frombuffer(body, dtype="<f4", count=k * k * ci * co, offset=off).reshape(k, k, ci, co)
        off += kn
        bias = np.frombuffer(body, dtype="<f4", count=co, offset=off)
        off += bn
        layers.append(LayerWeights(kernel.copy(), bias.copy(), ACTIVATION_NAMES[act]))
    if off != len(body):
        raise FormatError(f"{path}: {len(body) - off} trailing bytes after last layer")
    return WeightBundle(layers)
