"""Window partitioning, cyclic shifts, cross-scale correspondence, and the
query/key projection plumbing used by the windowed attention branch.

Maps are NHWC; per-map signatures (H, W, C) are lifted to a singleton batch
internally.  Non-divisible extents are zero-padded bottom/right and cropped
back after merging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "ScaleSpec",
    "WindowGrid",
    "window_partition",
    "window_merge",
    "cyclic_shift",
    "downsample_cswa",
    "npconv",
    "cross_scale_index",
    "DOWNSAMPLE_MODES",
]

_ALLOWED_RATIOS = (1, 2, 4, 8)

DOWNSAMPLE_MODES = ("baseline", "v_ds1", "v_ds2", "v_ds3", "v_ds4", "v_ds5")


@dataclass(frozen=True)
class ScaleSpec:
    """Key/value map scale s = 1/ratio relative to the query map."""

    ratio: int

    def __post_init__(self):
        if self.ratio not in _ALLOWED_RATIOS:
            raise ValueError(f"scale ratio must be one of {_ALLOWED_RATIOS}, got {self.ratio}")

    @property
    def s(self) -> float:
        return 1.0 / self.ratio

    @classmethod
    def from_value(cls, v) -> "ScaleSpec":
        if isinstance(v, ScaleSpec):
            return v
        if isinstance(v, str):
            v = v.strip()
            if "/" in v:
                num, den = v.split("/")
                return cls(round(float(den) / float(num)))
            v = float(v)
        if isinstance(v, (int, np.integer)) and v >= 1:
            # integers read as ratios so presets can say 8 for s=1/8
            return cls(int(v))
        ratio = 1.0 / float(v)
        r = round(ratio)
        if abs(ratio - r) > 1e-9:
            raise ValueError(f"scale {v!r} is not of the form 1/r")
        return cls(r)


@dataclass(frozen=True)
class WindowGrid:
    """Bookkeeping for one partition: window width, counts, pad applied."""

    m: int
    rows: int
    cols: int
    source_shape: tuple[int, int]
    pad: tuple[int, int]

    @property
    def count(self) -> int:
        return self.rows * self.cols


def _lift(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return T.reshape(x, (1,) + x.shape), True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected (H, W, C) or (N, H, W, C), got shape {x.shape}")


def window_partition(x: Tensor, m: int) -> tuple[Tensor, WindowGrid]:
    """Split an NHWC map into (N, rows*cols, m*m, C) raster-ordered windows."""
    if m < 1:
        raise ValueError("window width must be >= 1")
    x, lifted = _lift(x)
    n, h, w, c = x.shape
    pad_b = (-h) % m
    pad_r = (-w) % m
    if pad_b or pad_r:
        x = T.pad2d(x, pad_b, pad_r)
    rows, cols = (h + pad_b) // m, (w + pad_r) // m
    t = T.reshape(x, (n, rows, m, cols, m, c))
    t = T.transpose(t, (0, 1, 3, 2, 4, 5))
    wins = T.reshape(t, (n, rows * cols, m * m, c))
    if lifted:
        wins = T.reshape(wins, wins.shape[1:])
    grid = WindowGrid(m, rows, cols, (h, w), (pad_b, pad_r))
    return wins, grid


def window_merge(windows: Tensor, grid: WindowGrid) -> Tensor:
    """Inverse of window_partition, including the pad crop."""
    windows, lifted = (
        (T.reshape(windows, (1,) + windows.shape), True)
        if windows.ndim == 3
        else (windows, False)
    )
    n, count, msq, c = windows.shape
    if count != grid.count or msq != grid.m * grid.m:
        raise ValueError(
            f"windows {windows.shape} inconsistent with grid "
            f"{grid.rows}x{grid.cols}, M={grid.m}"
        )
    m = grid.m
    t = T.reshape(windows, (n, grid.rows, grid.cols, m, m, c))
    t = T.transpose(t, (0, 1, 3, 2, 4, 5))
    x = T.reshape(t, (n, grid.rows * m, grid.cols * m, c))
    h, w = grid.source_shape
    x = T.crop2d(x, h, w)
    return T.reshape(x, x.shape[1:]) if lifted else x


def cyclic_shift(x: Tensor, offset: int, inverse: bool = False) -> Tensor:
    """Toroidal roll of both spatial axes by -offset (+offset when inverse)."""
    if offset == 0:
        return x
    sh = offset if inverse else -offset
    x, lifted = _lift(x)
    out = T.roll2d(x, sh, sh)
    return T.reshape(out, out.shape[1:]) if lifted else out


def downsample_cswa(
    x: Tensor,
    spec: ScaleSpec,
    w_lin: Tensor,
    b_lin: Tensor,
    mode: str = "baseline",
) -> Tensor:
    """Shrink the key/value map by spec.ratio per axis.

    baseline: strided average pooling, then a linear projection with a
    shortcut across it, y = p + linear(p).  The v_ds* switches select the
    ablation variants (v_ds1 drops the shortcut).  s=1 bypasses entirely.
    """
    if spec.ratio == 1:
        return x
    if mode not in DOWNSAMPLE_MODES:
        raise ValueError(f"unknown downsample mode {mode!r}")
    x, lifted = _lift(x)
    r = spec.ratio
    if x.shape[1] % r or x.shape[2] % r:
        raise ValueError(
            f"map {x.shape[1]}x{x.shape[2]} not divisible by scale ratio {r}"
        )
    if mode == "v_ds4":
        p = T.avg_pool2d(x, r, r)
        y = T.add(T.avg_pool2d(T.linear(x, w_lin, b_lin), r, r), p)
    else:
        p = T.avg_pool2d(x, r, r)
        if mode == "baseline":
            y = T.add(p, T.linear(p, w_lin, b_lin))
        elif mode == "v_ds1":
            y = T.linear(p, w_lin, b_lin)
        elif mode == "v_ds2":
            y = p
        elif mode == "v_ds3":
            y = T.add(p, T.gelu(T.linear(p, w_lin, b_lin)))
        else:  # v_ds5
            y = T.add(p, T.linear(T.gelu(p), w_lin, b_lin))
    return T.reshape(y, y.shape[1:]) if lifted else y


def npconv(x: Tensor, w_dw: Tensor) -> Tensor:
    """Neighborhood-padding projection: bias-free depthwise 3x3, zero border.

    Applied to the full map before partitioning, each window effectively
    sees a one-pixel halo of true neighbor pixels instead of padding.
    """
    x, lifted = _lift(x)
    c = x.shape[-1]
    if w_dw.shape != (3, 3, 1, c):
        raise ValueError(f"depthwise weight must be (3, 3, 1, {c}), got {w_dw.shape}")
    out = T.conv2d(x, w_dw, None, stride=1, padding=1, groups=c)
    return T.reshape(out, out.shape[1:]) if lifted else out


def cross_scale_index(grid_q: WindowGrid, grid_k: WindowGrid, spec: ScaleSpec) -> np.ndarray:
    """Flat q-window -> k-window lookup; window (r, c) maps to (r//ratio, c//ratio)."""
    r = spec.ratio
    if grid_q.m != grid_k.m:
        raise ValueError("query and key grids must share the window width")
    if grid_k.rows * r != grid_q.rows or grid_k.cols * r != grid_q.cols:
        raise ValueError(
            f"key grid {grid_k.rows}x{grid_k.cols} incompatible with query grid "
            f"{grid_q.rows}x{grid_q.cols} at ratio {r}"
        )
    qr = np.arange(grid_q.rows) // r
    qc = np.arange(grid_q.cols) // r
    return (qr[:, None] * grid_k.cols + qc[None, :]).reshape(-1).astype(np.int64)
