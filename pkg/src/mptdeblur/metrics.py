"""Restoration quality metrics and the attention-distance analyzer.

attention_distance is a non-parametric proxy for how far apart mutually
similar regions sit in an image: patches attend to each other in proportion
to the correlation of their intensities, and the attended distances are
averaged and normalized by the image diagonal.  Repetitive textures (e.g.
microscopy fields of similar cells) score high; images whose similar content
is local score low.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .tensor import Tensor

__all__ = [
    "psnr",
    "ssim",
    "attention_distance",
    "AttnDistReport",
    "attention_distance_report",
    "write_csv",
    "CSV_HEADER",
]

CSV_HEADER = ("image", "psnr", "ssim", "nad")

_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def psnr(a, b, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE), capped at 100 dB for identical inputs."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return 100.0
    return min(10.0 * np.log10(peak * peak / mse), 100.0)


def _ssim_filter(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    y = ndimage.correlate1d(x, g, axis=0, mode="nearest")
    return ndimage.correlate1d(y, g, axis=1, mode="nearest")


def ssim(a, b) -> float:
    """Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01,
    K2=0.03, dynamic range 1.0, averaged over valid positions and channels."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    h, w = a.shape[:2]
    if min(h, w) < _SSIM_WIN:
        raise ValueError(f"image {h}x{w} smaller than the {_SSIM_WIN}-pixel window")
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    r = (_SSIM_WIN - 1) // 2
    xs = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (xs / _SSIM_SIGMA) ** 2)
    g /= g.sum()
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2
    vals = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        ux = _ssim_filter(x, g)
        uy = _ssim_filter(y, g)
        vx = _ssim_filter(x * x, g) - ux * ux
        vy = _ssim_filter(y * y, g) - uy * uy
        vxy = _ssim_filter(x * y, g) - ux * uy
        s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / (
            (ux * ux + uy * uy + c1) * (vx + vy + c2)
        )
        vals.append(float(s[r : h - r, r : w - r].mean()))
    return float(np.mean(vals))


def attention_distance(img, p: int) -> float:
    """Mean attended distance over a p x p patch grid, in [0, 1].

    Patch pairs are scored by normalized cross-correlation of their
    mean-centered intensities, turned into attention weights with a softmax
    over the other patches, and used to average center-to-center distances
    normalized by the image diagonal.  Zero-variance patches are excluded;
    degenerate grids (p = 1, constant images) return 0.
    """
    if p < 1:
        raise ValueError("patch grid must be >= 1")
    arr = _as_array(img).astype(np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    h, w = arr.shape
    hc, wc = (h // p) * p, (w // p) * p
    if hc < p or wc < p:
        raise ValueError(f"image {h}x{w} too small for a {p}x{p} grid")
    arr = arr[:hc, :wc]
    ph, pw = hc // p, wc // p
    patches = arr.reshape(p, ph, p, pw).transpose(0, 2, 1, 3).reshape(p * p, ph * pw)
    centered = patches - patches.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered**2).sum(axis=1))
    valid = norms > 1e-12
    if p == 1 or valid.sum() < 2:
        return 0.0
    v = centered[valid] / norms[valid][:, None]
    sim = v @ v.T  # NCC in [-1, 1]

    ii, jj = np.divmod(np.arange(p * p)[valid], p)
    cy = (ii + 0.5) * ph
    cx = (jj + 0.5) * pw
    dist = np.sqrt((cy[:, None] - cy[None, :]) ** 2 + (cx[:, None] - cx[None, :]) ** 2)
    diag = np.sqrt(hc * hc + wc * wc)

    n = sim.shape[0]
    off = ~np.eye(n, dtype=bool)
    total = 0.0
    for i in range(n):
        logits = sim[i][off[i]]
        e = np.exp(logits - logits.max())
        a = e / e.sum()
        total += float((a * dist[i][off[i]]).sum() / diag)
    return total / n


@dataclass
class AttnDistReport:
    per_image: list[float]
    mean: float
    patch_grid: int
    dataset_label: str


def attention_distance_report(images, p: int, label: str = "") -> AttnDistReport:
    vals = [attention_distance(img, p) for img in images]
    mean = float(np.mean(vals)) if vals else 0.0
    return AttnDistReport(per_image=vals, mean=mean, patch_grid=p, dataset_label=label)


def write_csv(path, rows: list[dict]) -> None:
    """Emit the image,psnr,ssim,nad schema; absent fields stay blank."""
    with open(path, "w") as f:
        f.write(",".join(CSV_HEADER) + "\n")
        for row in rows:
            cells = []
            for key in CSV_HEADER:
                v = row.get(key, "")
                cells.append(f"{v:.6f}" if isinstance(v, float) else str(v))
            f.write(",".join(cells) + "\n")
