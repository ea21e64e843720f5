"""File formats, synthetic blur pairs, and patch augmentation.

Images are binary PGM (P5) or PPM (P6) with maxval 255, mapped to [0, 1]
floats; 8-bit quantization is accepted at this scale.  Tensors and
checkpoints use the little-endian MPTT container.  Every randomized
operation draws from an explicit Rng, so pipelines rerun bit-identically.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np
from scipy import ndimage

from .frequency import gaussian_reblur
from .rng import Rng

__all__ = [
    "load_image",
    "save_image",
    "save_tensor",
    "load_tensor",
    "save_store",
    "load_store",
    "synth_pair",
    "mask_region_blur",
    "bilinear_resize",
    "augment_crop",
    "list_pairs",
    "write_dataset",
    "SCENES",
]

SCENES = ("cells", "stripes", "checker")

_MAGIC = b"MPTT"
_VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class FormatError(ValueError):
    """Malformed image or tensor file."""


# -- PGM / PPM -------------------------------------------------------------------


def _read_token(f) -> bytes:
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise FormatError("truncated header")
        if ch.isspace():
            if tok:
                return tok
            continue
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        tok += ch


def load_image(path) -> np.ndarray:
    """Read a P5/P6 file into an (H, W, 1) or (H, W, 3) float32 array in [0, 1]."""
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic == b"P5":
            channels = 1
        elif magic == b"P6":
            channels = 3
        else:
            raise FormatError(f"{path}: not a binary PGM/PPM file")
        try:
            w = int(_read_token(f))
            h = int(_read_token(f))
            maxval = int(_read_token(f))
        except ValueError as e:
            raise FormatError(f"{path}: bad header field") from e
        if w <= 0 or h <= 0:
            raise FormatError(f"{path}: non-positive dimensions {w}x{h}")
        if maxval != 255:
            raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
        n = w * h * channels
        payload = f.read(n)
        if len(payload) != n:
            raise FormatError(f"{path}: expected {n} pixel bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, channels)
    return arr.astype(np.float32) / 255.0


def save_image(path, img: np.ndarray) -> None:
    """Write an (H, W, 1|3) array, clamped to [0, 1] and quantized to 8 bits."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, 1|3) image, got shape {img.shape}")
    h, w, c = img.shape
    q = np.clip(img, 0.0, 1.0)
    q = np.rint(q * 255.0).astype(np.uint8)
    magic = b"P5" if c == 1 else b"P6"
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(q.tobytes())


# -- MPTT container ----------------------------------------------------------------


def _write_arr(f, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    code = _DTYPE_CODES.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise ValueError(f"unsupported dtype {arr.dtype}")
    f.write(struct.pack("<BB", code, arr.ndim))
    for extent in arr.shape:
        f.write(struct.pack("<Q", extent))
    f.write(arr.astype(_DTYPES[code], copy=False).tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def _read_arr(f) -> np.ndarray:
    code, ndim = struct.unpack("<BB", _read_exact(f, 2, "dtype/ndim"))
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    shape = tuple(
        struct.unpack("<Q", _read_exact(f, 8, "shape"))[0] for _ in range(ndim)
    )
    n = int(np.prod(shape)) if shape else 1
    dt = _DTYPES[code]
    payload = _read_exact(f, n * dt.itemsize, "payload")
    return np.frombuffer(payload, dtype=dt).reshape(shape).copy()


def _open_container(f, kind_expected: int):
    if _read_exact(f, 4, "magic") != _MAGIC:
        raise FormatError("bad magic; not an MPTT file")
    (version,) = struct.unpack("<H", _read_exact(f, 2, "version"))
    if version != _VERSION:
        raise FormatError(f"unsupported MPTT version {version}")
    (kind,) = struct.unpack("<B", _read_exact(f, 1, "kind"))
    if kind != kind_expected:
        raise FormatError(f"MPTT kind {kind}, expected {kind_expected}")


def save_tensor(path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC + struct.pack("<HB", _VERSION, 0))
        _write_arr(f, arr)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        _open_container(f, 0)
        arr = _read_arr(f)
        if f.read(1):
            raise FormatError("trailing bytes after payload")
    return arr


def save_store(path, entries: dict[str, np.ndarray], meta: dict[str, str]) -> None:
    """Multi-entry container: utf-8 metadata strings, then named arrays in order."""
    with open(path, "wb") as f:
        f.write(_MAGIC + struct.pack("<HB", _VERSION, 1))
        f.write(struct.pack("<I", len(meta)))
        for k, v in meta.items():
            kb, vb = k.encode(), str(v).encode()
            f.write(struct.pack("<H", len(kb)) + kb)
            f.write(struct.pack("<I", len(vb)) + vb)
        f.write(struct.pack("<I", len(entries)))
        for name, arr in entries.items():
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)) + nb)
            _write_arr(f, arr)


def load_store(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    entries: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    with open(path, "rb") as f:
        _open_container(f, 1)
        (n_meta,) = struct.unpack("<I", _read_exact(f, 4, "meta count"))
        for _ in range(n_meta):
            (klen,) = struct.unpack("<H", _read_exact(f, 2, "meta key length"))
            k = _read_exact(f, klen, "meta key").decode()
            (vlen,) = struct.unpack("<I", _read_exact(f, 4, "meta value length"))
            meta[k] = _read_exact(f, vlen, "meta value").decode()
        (n_entries,) = struct.unpack("<I", _read_exact(f, 4, "entry count"))
        for _ in range(n_entries):
            (nlen,) = struct.unpack("<H", _read_exact(f, 2, "entry name length"))
            name = _read_exact(f, nlen, "entry name").decode()
            if name in entries:
                raise FormatError(f"duplicate entry name {name!r}")
            entries[name] = _read_arr(f)
        if f.read(1):
            raise FormatError("trailing bytes after last entry")
    return entries, meta


# -- synthetic scenes ----------------------------------------------------------------


def _scene_cells(rng: Rng, size: int) -> np.ndarray:
    img = np.full((size, size, 3), 0.08, dtype=np.float64)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    n_cells = 6 + rng.randint(7)
    for _ in range(n_cells):
        cy, cx = rng.uniform() * size, rng.uniform() * size
        ry = size * rng.uniform_in(1 / 16, 1 / 7)
        rx = size * rng.uniform_in(1 / 16, 1 / 7)
        theta = rng.uniform() * np.pi
        color = np.array([rng.uniform_in(0.35, 1.0) for _ in range(3)])
        ct, st = np.cos(theta), np.sin(theta)
        u = (xx - cx) * ct + (yy - cy) * st
        v = -(xx - cx) * st + (yy - cy) * ct
        # soft rim over ~1.5 px so cells are not pure step edges
        r = np.sqrt((u / rx) ** 2 + (v / ry) ** 2)
        soft = np.clip((1.0 - r) * min(rx, ry) / 1.5 + 0.5, 0.0, 1.0)
        img = np.maximum(img, soft[:, :, None] * color[None, None, :])
    return np.clip(img, 0.0, 1.0)


def _scene_stripes(rng: Rng, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = rng.uniform() * np.pi
    period = rng.uniform_in(4.0, 16.0)
    carrier = (xx * np.cos(theta) + yy * np.sin(theta)) * (2.0 * np.pi / period)
    img = np.empty((size, size, 3), dtype=np.float64)
    for ch in range(3):
        phase = rng.uniform() * 2.0 * np.pi
        img[:, :, ch] = 0.5 + 0.45 * np.sin(carrier + phase)
    return np.clip(img, 0.0, 1.0)


def _scene_checker(rng: Rng, size: int) -> np.ndarray:
    cell = rng.choice((4, 8, 16))
    oy, ox = rng.randint(cell), rng.randint(cell)
    yy, xx = np.mgrid[0:size, 0:size]
    parity = (((yy + oy) // cell) + ((xx + ox) // cell)) % 2
    c0 = np.array([rng.uniform_in(0.0, 0.45) for _ in range(3)])
    c1 = np.array([rng.uniform_in(0.55, 1.0) for _ in range(3)])
    return np.where(parity[:, :, None] == 0, c0[None, None, :], c1[None, None, :])


_SCENE_FNS = {"cells": _scene_cells, "stripes": _scene_stripes, "checker": _scene_checker}


def synth_pair(rng: Rng, size: int, scene: str = "cells") -> tuple[np.ndarray, np.ndarray]:
    """Procedural sharp image plus its Gaussian-blurred counterpart, both
    float32 (size, size, 3) in [0, 1]."""
    if size < 16:
        raise ValueError("size must be >= 16")
    if scene not in _SCENE_FNS:
        raise ValueError(f"scene must be one of {SCENES}, got {scene!r}")
    sharp = _SCENE_FNS[scene](rng, size).astype(np.float32)
    blurred, _ = gaussian_reblur(sharp, rng)
    return sharp, np.clip(blurred, 0.0, 1.0).astype(np.float32)


def mask_region_blur(img: np.ndarray, mask: np.ndarray, rng: Rng, feather: int = 0) -> np.ndarray:
    """Blur only the masked region: out = m*blur(img) + (1-m)*img, where the
    binary mask is box-feathered over `feather` pixels."""
    img = np.asarray(img)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim == 3:
        mask = mask[:, :, 0]
    if mask.shape != img.shape[:2]:
        raise ValueError(f"mask {mask.shape} does not match image {img.shape[:2]}")
    if mask.min() < 0.0 or mask.max() > 1.0:
        raise ValueError("mask values must lie in [0, 1]")
    blurred, _ = gaussian_reblur(img, rng)
    m = mask
    if feather > 0:
        m = ndimage.uniform_filter(mask, size=2 * feather + 1, mode="nearest")
    m = m[:, :, None]
    return (m * blurred + (1.0 - m) * img).astype(img.dtype)


# -- augmentation -------------------------------------------------------------------


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centered bilinear resampling of an (H, W, C) array."""
    h, w = img.shape[:2]
    if (out_h, out_w) == (h, w):
        return img.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    a = img[np.ix_(y0, x0)]
    b = img[np.ix_(y0, x1)]
    c = img[np.ix_(y1, x0)]
    d = img[np.ix_(y1, x1)]
    top = a * (1.0 - fx) + b * fx
    bot = c * (1.0 - fx) + d * fx
    return (top * (1.0 - fy) + bot * fy).astype(img.dtype)


def augment_crop(
    pair: tuple[np.ndarray, np.ndarray], rng: Rng, patch: int
) -> tuple[np.ndarray, np.ndarray]:
    """Identical random scale (uniform in [0.75, 1.25], bilinear), horizontal
    and vertical flips (p=1/2 each), and crop applied to both members."""
    sharp, blur = pair
    if sharp.shape != blur.shape:
        raise ValueError("pair members must share a shape")
    h, w = sharp.shape[:2]
    if patch > round(min(h, w) * 0.75):
        raise ValueError(
            f"patch {patch} can exceed the scaled extent of a {h}x{w} image"
        )
    scale = rng.uniform_in(0.75, 1.25)
    nh, nw = round(h * scale), round(w * scale)
    sharp = bilinear_resize(sharp, nh, nw)
    blur = bilinear_resize(blur, nh, nw)
    if rng.coin():
        sharp, blur = sharp[:, ::-1], blur[:, ::-1]
    if rng.coin():
        sharp, blur = sharp[::-1, :], blur[::-1, :]
    oy = rng.randint(nh - patch + 1)
    ox = rng.randint(nw - patch + 1)
    sl = (slice(oy, oy + patch), slice(ox, ox + patch))
    return np.ascontiguousarray(sharp[sl]), np.ascontiguousarray(blur[sl])


# -- dataset directories -------------------------------------------------------------


def list_pairs(root) -> tuple[list[tuple[str, str, str | None]], list[str]]:
    """Pair <root>/sharp and <root>/blur by filename; returns (pairs, warnings)."""
    sharp_dir = os.path.join(root, "sharp")
    blur_dir = os.path.join(root, "blur")
    mask_dir = os.path.join(root, "mask")
    if not os.path.isdir(sharp_dir) or not os.path.isdir(blur_dir):
        raise FileNotFoundError(f"{root} must contain sharp/ and blur/ directories")
    sharp_names = sorted(os.listdir(sharp_dir))
    blur_names = set(os.listdir(blur_dir))
    warnings = []
    pairs = []
    for name in sharp_names:
        if name not in blur_names:
            warnings.append(f"skipping {name}: no blurred counterpart")
            continue
        mask_path = None
        if os.path.isdir(mask_dir):
            cand = os.path.join(mask_dir, os.path.splitext(name)[0] + ".pgm")
            if os.path.exists(cand):
                mask_path = cand
        pairs.append((os.path.join(sharp_dir, name), os.path.join(blur_dir, name), mask_path))
    for name in sorted(blur_names.difference(sharp_names)):
        warnings.append(f"skipping {name}: no sharp counterpart")
    return pairs, warnings


def write_dataset(root, rng: Rng, count: int, size: int, scene: str, with_mask: bool = False) -> int:
    """Generate `count` synthetic pairs under the standard directory layout."""
    os.makedirs(os.path.join(root, "sharp"), exist_ok=True)
    os.makedirs(os.path.join(root, "blur"), exist_ok=True)
    if with_mask:
        os.makedirs(os.path.join(root, "mask"), exist_ok=True)
    for i in range(count):
        sample_rng = rng.split(i)
        sharp, blur = synth_pair(sample_rng, size, scene)
        if with_mask:
            # focal-plane composite: only the masked region is defocused
            mask = (_scene_cells(sample_rng, size)[:, :, 0] > 0.2).astype(np.float64)
            blur = mask_region_blur(sharp, mask, sample_rng, feather=2).astype(np.float32)
            save_image(os.path.join(root, "mask", f"{i:04d}.pgm"), mask[:, :, None])
        name = f"{i:04d}.ppm"
        save_image(os.path.join(root, "sharp", name), sharp)
        save_image(os.path.join(root, "blur", name), blur)
    return count
