"""Numba kernels for the hot paths: convolution, warping, resampling.

Accumulation orders are part of the contract: every kernel here must produce
bit-identical results to the straightforward sequential loop over the same
operands, so tests can pin them against naive oracles. Convolution accumulates
in float32 in (ky, kx, ci) order; warping and upsampling do their small fixed
combinations in float64 and round once, which keeps convex combinations inside
the hull of their taps after the final float32 rounding.
"""

import math

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def conv2d_planar(xp, kernel, bias, out, relu):
    """Same-size stride-1 convolution on replicate-padded planes.

    xp:     (Ci, H + 2r, W + 2r) float32, already replicate-padded
    kernel: (k, k, Ci, Co) float32
    bias:   (Co,) float32
    out:    (Co, H, W) float32, written in place
    relu:   clamp negatives at store time (applied after the final float32
            rounding, so it equals a separate relu pass bit for bit)

    Accumulates in float32 in (ky, kx, ci) order per output element; output
    channels are blocked by 8 (with a specialized 4-wide remainder) for
    vectorization, which does not change any per-element accumulation order.
    """
    ci_n = xp.shape[0]
    kk = kernel.shape[0]
    co_n = kernel.shape[3]
    h = out.shape[1]
    w = out.shape[2]
    acc = np.empty((8, w), dtype=np.float32)
    for o0 in range(0, co_n, 8):
        nb = min(8, co_n - o0)
        for y in range(h):
            for j in range(nb):
                bv = bias[o0 + j]
                for x in range(w):
                    acc[j, x] = bv
            for ky in range(kk):
                for kx in range(kk):
                    for ci in range(ci_n):
                        row = xp[ci, y + ky]
                        if nb == 8:
                            k0 = kernel[ky, kx, ci, o0]
                            k1 = kernel[ky, kx, ci, o0 + 1]
                            k2 = kernel[ky, kx, ci, o0 + 2]
                            k3 = kernel[ky, kx, ci, o0 + 3]
                            k4 = kernel[ky, kx, ci, o0 + 4]
                            k5 = kernel[ky, kx, ci, o0 + 5]
                            k6 = kernel[ky, kx, ci, o0 + 6]
                            k7 = kernel[ky, kx, ci, o0 + 7]
                            for x in range(w):
                                v = row[kx + x]
                                acc[0, x] += v * k0
                                acc[1, x] += v * k1
                                acc[2, x] += v * k2
                                acc[3, x] += v * k3
                                acc[4, x] += v * k4
                                acc[5, x] += v * k5
                                acc[6, x] += v * k6
                                acc[7, x] += v * k7
                        elif nb == 4:
                            k0 = kernel[ky, kx, ci, o0]
                            k1 = kernel[ky, kx, ci, o0 + 1]
                            k2 = kernel[ky, kx, ci, o0 + 2]
                            k3 = kernel[ky, kx, ci, o0 + 3]
                            for x in range(w):
                                v = row[kx + x]
                                acc[0, x] += v * k0
                                acc[1, x] += v * k1
                                acc[2, x] += v * k2
                                acc[3, x] += v * k3
                        elif nb == 2:
                            k0 = kernel[ky, kx, ci, o0]
                            k1 = kernel[ky, kx, ci, o0 + 1]
                            for x in range(w):
                                v = row[kx + x]
                                acc[0, x] += v * k0
                                acc[1, x] += v * k1
                        else:
                            for j in range(nb):
                                kj = kernel[ky, kx, ci, o0 + j]
                                for x in range(w):
                                    acc[j, x] += row[kx + x] * kj
            if relu:
                for j in range(nb):
                    for x in range(w):
                        v = acc[j, x]
                        out[o0 + j, y, x] = v if v > 0.0 else 0.0
            else:
                for j in range(nb):
                    for x in range(w):
                        out[o0 + j, y, x] = acc[j, x]


@numba.njit(cache=True, nogil=True)
def warp_bilinear(img, shift, out, validity):
    """Sample img at (x + dx, y + dy) with bilinear taps and zero padding.

    img:      (H, W, C) float32
    shift:    (H, W, 2) float32, (dx, dy) in pixels
    out:      (H, W, C) float32
    validity: (H, W) float32, in-bounds bilinear weight mass per pixel

    Out-of-bounds taps contribute zero and lose their weight from validity.
    Arithmetic is float64 internally so fully-valid outputs land inside the
    [min, max] of their four taps after rounding to float32.
    """
    h, w, c = img.shape
    for y in range(h):
        for x in range(w):
            sx = x + np.float64(shift[y, x, 0])
            sy = y + np.float64(shift[y, x, 1])
            x0 = int(np.floor(sx))
            y0 = int(np.floor(sy))
            fx = sx - x0
            fy = sy - y0
            w00 = (1.0 - fx) * (1.0 - fy)
            w10 = fx * (1.0 - fy)
            w01 = (1.0 - fx) * fy
            w11 = fx * fy
            x1 = x0 + 1
            y1 = y0 + 1
            if 0 <= x0 and x1 < w and 0 <= y0 and y1 < h:
                # all four taps in bounds
                validity[y, x] = np.float32(1.0)
                for ch in range(c):
                    acc = (
                        w00 * np.float64(img[y0, x0, ch])
                        + w10 * np.float64(img[y0, x1, ch])
                        + w01 * np.float64(img[y1, x0, ch])
                        + w11 * np.float64(img[y1, x1, ch])
                    )
                    out[y, x, ch] = np.float32(acc)
                continue
            in00 = 0 <= x0 < w and 0 <= y0 < h
            in10 = 0 <= x1 < w and 0 <= y0 < h
            in01 = 0 <= x0 < w and 0 <= y1 < h
            in11 = 0 <= x1 < w and 0 <= y1 < h
            mass = 0.0
            if in00:
                mass += w00
            if in10:
                mass += w10
            if in01:
                mass += w01
            if in11:
                mass += w11
            validity[y, x] = np.float32(mass)
            for ch in range(c):
                acc = 0.0
                if in00:
                    acc += w00 * np.float64(img[y0, x0, ch])
                if in10:
                    acc += w10 * np.float64(img[y0, x1, ch])
                if in01:
                    acc += w01 * np.float64(img[y1, x0, ch])
                if in11:
                    acc += w11 * np.float64(img[y1, x1, ch])
                out[y, x, ch] = np.float32(acc)


@numba.njit(cache=True, nogil=True)
def upsample_bilinear_planar(src, out):
    """Bilinear upsample (C, h, w) -> (C, H, W) with half-pixel centers.

    Source coordinates are clamped to the edge, so constant planes are exact
    fixed points and values never leave [min, max] of the source.
    """
    c, sh, sw = src.shape
    oh = out.shape[1]
    ow = out.shape[2]
    sy_scale = sh / oh
    sx_scale = sw / ow
    for y in range(oh):
        sy = (y + 0.5) * sy_scale - 0.5
        if sy < 0.0:
            sy = 0.0
        if sy > sh - 1.0:
            sy = sh - 1.0
        y0 = int(np.floor(sy))
        if y0 > sh - 2:
            y0 = sh - 2 if sh > 1 else 0
        y1 = y0 + 1 if sh > 1 else y0
        fy = sy - y0
        for x in range(ow):
            sx = (x + 0.5) * sx_scale - 0.5
            if sx < 0.0:
                sx = 0.0
            if sx > sw - 1.0:
                sx = sw - 1.0
            x0 = int(np.floor(sx))
            if x0 > sw - 2:
                x0 = sw - 2 if sw > 1 else 0
            x1 = x0 + 1 if sw > 1 else x0
            fx = sx - x0
            for ch in range(c):
                top = (1.0 - fx) * np.float64(src[ch, y0, x0]) + fx * np.float64(src[ch, y0, x1])
                bot = (1.0 - fx) * np.float64(src[ch, y1, x0]) + fx * np.float64(src[ch, y1, x1])
                out[ch, y, x] = np.float32((1.0 - fy) * top + fy * bot)


@numba.njit(cache=True, nogil=True)
def box_downsample_planar(src, d, out):
    """d x d box average of (C, H, W) planes into (C, H//d, W//d).

    H and W must already be multiples of d; accumulation is float64 per
    output element, rounded once.
    """
    c_n = src.shape[0]
    oh = out.shape[1]
    ow = out.shape[2]
    inv = 1.0 / (d * d)
    for c in range(c_n):
        for y in range(oh):
            for x in range(ow):
                acc = 0.0
                for dy in range(d):
                    for dx in range(d):
                        acc += np.float64(src[c, y * d + dy, x * d + dx])
                out[c, y, x] = np.float32(acc * inv)


@numba.njit(cache=True, nogil=True)
def fuse_convex(base, alt, w_a, out):
    """out = base + w_a * (alt - base), float64 inside, channel-last images."""
    h, w, c = base.shape
    for y in range(h):
        for x in range(w):
            wa = np.float64(w_a[y, x])
            for ch in range(c):
                b = np.float64(base[y, x, ch])
                a = np.float64(alt[y, x, ch])
                out[y, x, ch] = np.float32(b + wa * (a - b))


@numba.njit(cache=True, nogil=True)
def align_feature_planes(tm, norm_eps, w_r, w_g, w_b, slab, base, lum):
    """Standardize a tone-mapped (H, W, 3) raster into feature planes.

    Writes the standardized channels into slab[base:base+3] and the gradient
    magnitude of their luma into slab[base+3]; ``lum`` is a (H, W) scratch
    buffer. Matches the composition of (x - mean) / (std + eps) over all
    values, Rec.709 luma, and replicate-padded central differences.
    """
    h = tm.shape[0]
    w = tm.shape[1]
    s = 0.0
    s2 = 0.0
    for y in range(h):
        for x in range(w):
            for c in range(3):
                v = np.float64(tm[y, x, c])
                s += v
                s2 += v * v
    n = h * w * 3
    mean = s / n
    var = s2 / n - mean * mean
    if var < 0.0:
        var = 0.0
    inv_std = 1.0 / (math.sqrt(var) + norm_eps)
    for y in range(h):
        for x in range(w):
            r = np.float32((np.float64(tm[y, x, 0]) - mean) * inv_std)
            g = np.float32((np.float64(tm[y, x, 1]) - mean) * inv_std)
            b = np.float32((np.float64(tm[y, x, 2]) - mean) * inv_std)
            slab[base, y, x] = r
            slab[base + 1, y, x] = g
            slab[base + 2, y, x] = b
            lum[y, x] = np.float32(w_r * np.float64(r) + w_g * np.float64(g) + w_b * np.float64(b))
    for y in range(h):
        yl = y - 1 if y > 0 else 0
        yr = y + 1 if y < h - 1 else h - 1
        for x in range(w):
            xl = x - 1 if x > 0 else 0
            xr = x + 1 if x < w - 1 else w - 1
            gx = (np.float64(lum[y, xr]) - np.float64(lum[y, xl])) * 0.5
            gy = (np.float64(lum[yr, x]) - np.float64(lum[yl, x])) * 0.5
            slab[base + 3, y, x] = np.float32(math.sqrt(gx * gx + gy * gy))


@numba.njit(cache=True, nogil=True)
def plane_split(img, slab, base):
    """Copy channel-last (H, W, 3) image channels into slab[base:base+3]."""
    h = img.shape[0]
    w = img.shape[1]
    for y in range(h):
        for x in range(w):
            slab[base, y, x] = img[y, x, 0]
            slab[base + 1, y, x] = img[y, x, 1]
            slab[base + 2, y, x] = img[y, x, 2]


@numba.njit(cache=True, nogil=True)
def mean_std(arr):
    """Single-pass float64 mean and population standard deviation."""
    flat = arr.ravel()
    n = flat.shape[0]
    s = 0.0
    s2 = 0.0
    for i in range(n):
        v = np.float64(flat[i])
        s += v
        s2 += v * v
    mean = s / n
    var = s2 / n - mean * mean
    if var < 0.0:
        var = 0.0
    return mean, np.sqrt(var)


@numba.njit(cache=True, nogil=True)
def motion_blur_line(img, taps_x, taps_y, out):
    """Average bilinear samples of img along precomputed line-tap offsets.

    img: (H, W, C) float32; taps_*: (T,) float64 offsets; out: (H, W, C).
    Coordinates are clamped to the image (replicate), so constants are
    preserved exactly and the kernel mass is always 1.
    """
    h, w, c = img.shape
    t_n = taps_x.shape[0]
    inv = 1.0 / t_n
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                acc = 0.0
                for t in range(t_n):
                    sx = x + taps_x[t]
                    sy = y + taps_y[t]
                    if sx < 0.0:
                        sx = 0.0
                    elif sx > w - 1.0:
                        sx = w - 1.0
                    if sy < 0.0:
                        sy = 0.0
                    elif sy > h - 1.0:
                        sy = h - 1.0
                    x0 = int(np.floor(sx))
                    y0 = int(np.floor(sy))
                    if x0 > w - 2:
                        x0 = w - 2 if w > 1 else 0
                    if y0 > h - 2:
                        y0 = h - 2 if h > 1 else 0
                    x1 = x0 + 1 if w > 1 else x0
                    y1 = y0 + 1 if h > 1 else y0
                    fx = sx - x0
                    fy = sy - y0
                    top = (1.0 - fx) * np.float64(img[y0, x0, ch]) + fx * np.float64(img[y0, x1, ch])
                    bot = (1.0 - fx) * np.float64(img[y1, x0, ch]) + fx * np.float64(img[y1, x1, ch])
                    acc += (1.0 - fy) * top + fy * bot
                out[y, x, ch] = np.float32(acc * inv)
