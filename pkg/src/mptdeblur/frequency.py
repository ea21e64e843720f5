"""Single-level orthonormal Haar split and the frequency-contrastive losses.

The contrastive ratio pulls the restored image toward the sharp target
(positive term) and away from the blurry input (negative term), measured on
wavelet bands; an extra relative term built from a re-blurred copy of the
input transfers the pressure to unpaired data.  All L1 distances are mean
absolute differences, so the loss weight is resolution-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import tensor as T
from .rng import Rng
from .tensor import Tensor

__all__ = [
    "FrequencyBands",
    "haar_dwt",
    "haar_idwt",
    "f_high",
    "f_low",
    "ContrastiveBatch",
    "LossTerms",
    "cr_basic",
    "cr_extended",
    "efcr_total",
    "efcr_ex_labeled",
    "efcr_ex_unlabeled",
    "gaussian_kernel1d",
    "gaussian_sigma",
    "gaussian_reblur",
    "EPS_DIV",
]

EPS_DIV = 1e-8


@dataclass
class FrequencyBands:
    """One-level Haar bands, each at half resolution; pad records the
    bottom/right zero-padding applied to odd inputs."""

    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor
    pad: tuple[int, int] = (0, 0)


def haar_dwt(x: Tensor) -> FrequencyBands:
    """Orthonormal Haar analysis: per 2x2 block [a b; c d],
    LL=(a+b+c+d)/2, HL=(-a+b-c+d)/2, LH=(-a-b+c+d)/2, HH=(a-b-c+d)/2."""
    lifted = x.ndim == 3
    if lifted:
        x = T.reshape(x, (1,) + x.shape)
    n, h, w, c = x.shape
    pad = (h % 2, w % 2)
    if pad != (0, 0):
        x = T.pad2d(x, pad[0], pad[1])
    ch = T.pixel_shuffle_down(x, 2)  # channel blocks: a=(0,0), b=(0,1), c=(1,0), d=(1,1)
    a = ch[:, :, :, 0 * c : 1 * c]
    b = ch[:, :, :, 1 * c : 2 * c]
    cc = ch[:, :, :, 2 * c : 3 * c]
    d = ch[:, :, :, 3 * c : 4 * c]
    half = 0.5
    ll = T.mul(T.add(T.add(a, b), T.add(cc, d)), half)
    hl = T.mul(T.add(T.sub(b, a), T.sub(d, cc)), half)
    lh = T.mul(T.add(T.sub(cc, a), T.sub(d, b)), half)
    hh = T.mul(T.add(T.sub(a, b), T.sub(d, cc)), half)
    if lifted:
        ll, hl, lh, hh = (T.reshape(t, t.shape[1:]) for t in (ll, hl, lh, hh))
    return FrequencyBands(ll=ll, lh=lh, hl=hl, hh=hh, pad=pad)


def haar_idwt(bands: FrequencyBands) -> Tensor:
    """Exact inverse of haar_dwt, cropping any recorded pad."""
    ll, lh, hl, hh = bands.ll, bands.lh, bands.hl, bands.hh
    for t in (lh, hl, hh):
        if t.shape != ll.shape:
            raise ValueError("band shapes differ")
    lifted = ll.ndim == 3
    if lifted:
        ll, lh, hl, hh = (T.reshape(t, (1,) + t.shape) for t in (ll, lh, hl, hh))
    half = 0.5
    a = T.mul(T.sub(T.sub(ll, hl), T.sub(lh, hh)), half)
    b = T.mul(T.sub(T.add(ll, hl), T.add(lh, hh)), half)
    cc = T.mul(T.add(T.sub(ll, hl), T.sub(lh, hh)), half)
    d = T.mul(T.add(T.add(ll, hl), T.add(lh, hh)), half)
    x = T.pixel_shuffle_up(T.concat([a, b, cc, d], axis=-1), 2)
    if bands.pad != (0, 0):
        nh = x.shape[1] - bands.pad[0]
        nw = x.shape[2] - bands.pad[1]
        x = T.crop2d(x, nh, nw)
    return T.reshape(x, x.shape[1:]) if lifted else x


def f_high(x: Tensor) -> Tensor:
    """Channel-concatenated detail bands (LH, HL, HH), extent 3C."""
    b = haar_dwt(x)
    return T.concat([b.lh, b.hl, b.hh], axis=-1)


def f_low(x: Tensor) -> Tensor:
    return haar_dwt(x).ll


# -- loss terms ----------------------------------------------------------------


@dataclass
class ContrastiveBatch:
    """Per-sample tensors feeding the contrastive terms.

    The main dataset supplies (i_gt, i_in, i_out) and the reblur pair
    (b_in, b_out); primed fields carry the extra-dataset counterparts when
    knowledge transfer is active.  b_in must be gaussian_reblur(i_in).
    """

    i_gt: Tensor | None = None
    i_in: Tensor | None = None
    i_out: Tensor | None = None
    b_in: Tensor | None = None
    b_out: Tensor | None = None
    i_gt_p: Tensor | None = None
    i_in_p: Tensor | None = None
    i_out_p: Tensor | None = None
    b_in_p: Tensor | None = None
    b_out_p: Tensor | None = None
    kernel_size_used: int = 0


@dataclass
class LossTerms:
    l1: Tensor
    l_pos: float
    l_neg: float
    l_ext: float
    l_cr: Tensor | float
    total: Tensor
    beta: float
    n: int


def cr_basic(batch: ContrastiveBatch) -> tuple[Tensor, Tensor]:
    """Positive pull toward the target on both band groups, negative push
    away from the blurry input on the detail bands."""
    l_pos = T.add(
        T.l1_distance(f_high(batch.i_out), f_high(batch.i_gt)),
        T.l1_distance(f_low(batch.i_out), f_low(batch.i_gt)),
    )
    l_neg = T.l1_distance(f_high(batch.i_out), f_high(batch.i_in))
    return l_pos, l_neg


def cr_extended(batch: ContrastiveBatch) -> Tensor:
    """Relative detail distance of the reblurred pair, normalized by how far
    the reblur moved the input's detail bands."""
    num = T.l1_distance(f_high(batch.b_out), f_high(batch.b_in))
    den = T.add(T.l1_distance(f_high(batch.i_in), f_high(batch.b_in)), EPS_DIV)
    return T.div(num, den)


def efcr_ex_labeled(batch: ContrastiveBatch) -> tuple[Tensor, Tensor, Tensor]:
    """Contrastive triple on a labeled extra dataset: detail bands only."""
    for name in ("i_gt_p", "i_in_p", "i_out_p", "b_in_p", "b_out_p"):
        if getattr(batch, name) is None:
            raise ValueError(f"labeled extra mode requires {name}")
    l_pos = T.l1_distance(f_high(batch.i_out_p), f_high(batch.i_gt_p))
    l_neg = T.l1_distance(f_high(batch.i_out_p), f_high(batch.i_in_p))
    num = T.l1_distance(f_high(batch.b_out_p), f_high(batch.b_in_p))
    den = T.add(T.l1_distance(f_high(batch.i_in_p), f_high(batch.b_in_p)), EPS_DIV)
    return l_pos, l_neg, T.div(num, den)


def efcr_ex_unlabeled(batch: ContrastiveBatch) -> tuple[Tensor, Tensor, Tensor]:
    """Main-dataset positive/negative terms with the relative term drawn
    from an unlabeled extra dataset (no ground truth needed there)."""
    for name in ("i_gt", "i_in", "i_out", "i_in_p", "b_in_p", "b_out_p"):
        if getattr(batch, name) is None:
            raise ValueError(f"unlabeled extra mode requires {name}")
    l_pos, l_neg = cr_basic(batch)
    num = T.l1_distance(f_high(batch.b_out_p), f_high(batch.b_in_p))
    den = T.add(T.l1_distance(f_high(batch.i_in_p), f_high(batch.b_in_p)), EPS_DIV)
    return l_pos, l_neg, T.div(num, den)


def efcr_total(
    l1: Tensor, triples: list[tuple[Tensor, Tensor, Tensor]], beta: float
) -> LossTerms:
    """total = l1 + beta * mean_i( pos_i / (neg_i + ext_i + eps) )."""
    if not triples:
        raise ValueError("need at least one contrastive sample")
    n = len(triples)
    acc = None
    for pos, neg, ext in triples:
        ratio = T.div(pos, T.add(T.add(neg, ext), EPS_DIV))
        acc = ratio if acc is None else T.add(acc, ratio)
    l_cr = T.mul(acc, 1.0 / n)
    total = T.add(l1, T.mul(l_cr, beta))
    return LossTerms(
        l1=l1,
        l_pos=float(np.mean([p.item() for p, _, _ in triples])),
        l_neg=float(np.mean([g.item() for _, g, _ in triples])),
        l_ext=float(np.mean([e.item() for _, _, e in triples])),
        l_cr=l_cr,
        total=total,
        beta=beta,
        n=n,
    )


# -- reblur --------------------------------------------------------------------


def gaussian_sigma(k: int) -> float:
    """Kernel-size-to-sigma convention: 0.3*((k-1)/2 - 1) + 0.8."""
    return 0.3 * ((k - 1) / 2.0 - 1.0) + 0.8


def gaussian_kernel1d(k: int) -> np.ndarray:
    if k not in (3, 5, 7):
        raise ValueError(f"kernel size must be 3, 5 or 7, got {k}")
    sigma = gaussian_sigma(k)
    r = (k - 1) // 2
    xs = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (xs / sigma) ** 2)
    return g / g.sum()


def gaussian_reblur(x, rng: Rng) -> tuple[np.ndarray, int]:
    """Blur with a Gaussian whose size is drawn from {3, 5, 7}.

    Separable convolution over the spatial axes with reflect borders (edge
    pixel not repeated), identical per channel.  Accepts (H, W, C) or
    (N, H, W, C) arrays or Tensors; returns an ndarray of the same shape.
    """
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    k = rng.choice((3, 5, 7))
    g = gaussian_kernel1d(k).astype(arr.dtype)
    ax = 0 if arr.ndim == 3 else 1
    out = ndimage.convolve1d(arr, g, axis=ax, mode="mirror")
    out = ndimage.convolve1d(out, g, axis=ax + 1, mode="mirror")
    return out, k
