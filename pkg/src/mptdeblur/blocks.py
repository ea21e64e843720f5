"""The three sub-block ingredients and their composition.

A sub-block runs two parallel branches on one normalized input map, then
fuses them:

  * windowed attention across scales: queries from the local map, keys and
    values from a downscaled copy, so an M x M query window reads an
    (M/s) x (M/s) source region at the matmul cost of a plain M x M window;
  * transposed channel attention: d x d attention per head over channel
    vectors, spatial extent acting as the feature axis;
  * a gated feed-forward fusion of the two branch outputs.

Each branch adds its own input back after its output projection; the fusion
adds the windowed branch output (its first argument).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .windows import (
    ScaleSpec,
    cross_scale_index,
    cyclic_shift,
    downsample_cswa,
    npconv,
    window_merge,
    window_partition,
)

__all__ = [
    "RelPosBias",
    "CswaParams",
    "IscaParams",
    "FefnParams",
    "SubBlockParams",
    "rel_pos_index",
    "rel_pos_bias",
    "cswa_forward",
    "isca_forward",
    "fefn_forward",
    "sub_block_forward",
    "fefn_hidden_dim",
    "FEFN_MODES",
]

FEFN_MODES = ("gated", "cat_gelu", "add_gelu", "reversed")

_NORM_EPS = 1e-6  # added to the spatial L2 norm before dividing
_LN_EPS = 1e-5


@dataclass
class RelPosBias:
    """Learnable per-head bias over relative window offsets.

    table holds one value per (dy, dx) bin and head; index maps every
    (query pixel, key pixel) pair inside an M x M window to its bin.
    """

    table: Tensor  # ((2M-1)^2, h)
    index: np.ndarray  # (M^2, M^2) int64

    @property
    def m(self) -> int:
        return int(np.sqrt(self.index.shape[0]))


def rel_pos_index(m: int) -> np.ndarray:
    """Precompute the (M^2, M^2) relative-offset bin lookup for width m."""
    ys, xs = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    coords = np.stack([ys.reshape(-1), xs.reshape(-1)], axis=0)  # (2, M^2)
    rel = coords[:, :, None] - coords[:, None, :] + (m - 1)  # in [0, 2M-2]
    return (rel[0] * (2 * m - 1) + rel[1]).astype(np.int64)


def rel_pos_bias(bias: RelPosBias, m: int, h: int) -> Tensor:
    """Gather the table into an (h, M^2, M^2) additive logit bias."""
    if bias.table.shape != ((2 * m - 1) ** 2, h):
        raise ValueError(
            f"bias table {bias.table.shape} does not match M={m}, heads={h}"
        )
    gathered = T.gather(bias.table, bias.index, axis=0)  # (M^2, M^2, h)
    return T.transpose(gathered, (2, 0, 1))


@dataclass
class CswaParams:
    # per-projection neighborhood conv (depthwise 3x3) and channel mix (1x1)
    w_q_dw: Tensor
    w_q_pw: Tensor
    w_k_dw: Tensor
    w_k_pw: Tensor
    w_v_dw: Tensor
    w_v_pw: Tensor
    w_ds: Tensor | None  # downsample projection; None when s == 1
    b_ds: Tensor | None
    w_out: Tensor
    b_out: Tensor
    bias: RelPosBias


@dataclass
class IscaParams:
    w_q_pw: Tensor
    w_q_dw: Tensor
    w_k_pw: Tensor
    w_k_dw: Tensor
    w_v_pw: Tensor
    w_v_dw: Tensor
    tau: Tensor  # (h, 1, 1) per-head temperature
    w_out: Tensor
    b_out: Tensor


@dataclass
class FefnParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w_p: Tensor
    b_p: Tensor


@dataclass
class SubBlockParams:
    ln1_g: Tensor
    ln1_b: Tensor
    ln2_g: Tensor | None
    ln2_b: Tensor | None
    cswa: CswaParams
    isca: IscaParams | None
    fefn: FefnParams
    heads: int
    spec: ScaleSpec
    shifted: bool
    m: int


def _split_heads(wins: Tensor, h: int) -> Tensor:
    """(B, n, M^2, C) -> (B, n, h, M^2, d)."""
    b, n, msq, c = wins.shape
    t = T.reshape(wins, (b, n, msq, h, c // h))
    return T.transpose(t, (0, 1, 3, 2, 4))


def _merge_heads(wins: Tensor) -> Tensor:
    b, n, h, msq, d = wins.shape
    t = T.transpose(wins, (0, 1, 3, 2, 4))
    return T.reshape(t, (b, n, msq, h * d))


def cswa_forward(
    x: Tensor, p: SubBlockParams, downsample_mode: str = "baseline"
) -> Tensor:
    """Windowed attention with cross-scale keys/values; returns x1 = attn + x."""
    x4 = T.reshape(x, (1,) + x.shape) if x.ndim == 3 else x
    c = x4.shape[-1]
    h, m, spec = p.heads, p.m, p.spec
    d = c // h

    y = T.layer_norm(x4, p.ln1_g, p.ln1_b, eps=_LN_EPS)
    q_map = T.linear(npconv(y, p.cswa.w_q_dw), p.cswa.w_q_pw)
    if spec.ratio == 1:
        kv_src = y
    else:
        kv_src = downsample_cswa(y, spec, p.cswa.w_ds, p.cswa.b_ds, downsample_mode)
    k_map = T.linear(npconv(kv_src, p.cswa.w_k_dw), p.cswa.w_k_pw)
    v_map = T.linear(npconv(kv_src, p.cswa.w_v_dw), p.cswa.w_v_pw)

    if p.shifted:
        off = m // 2
        q_map = cyclic_shift(q_map, off)
        k_map = cyclic_shift(k_map, off)
        v_map = cyclic_shift(v_map, off)

    q_wins, grid_q = window_partition(q_map, m)
    k_wins, grid_k = window_partition(k_map, m)
    v_wins, _ = window_partition(v_map, m)
    idx = cross_scale_index(grid_q, grid_k, spec)

    q = _split_heads(q_wins, h)
    k = _split_heads(T.gather(k_wins, idx, axis=1), h)
    v = _split_heads(T.gather(v_wins, idx, axis=1), h)

    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 2, 4, 3))), 1.0 / np.sqrt(d))
    scores = T.add(scores, rel_pos_bias(p.cswa.bias, m, h))
    attn = T.softmax(scores, axis=-1)
    out = _merge_heads(T.matmul(attn, v))

    merged = window_merge(out, grid_q)
    if p.shifted:
        merged = cyclic_shift(merged, m // 2, inverse=True)
    x1 = T.add(T.linear(merged, p.cswa.w_out, p.cswa.b_out), x4)
    return T.reshape(x1, x1.shape[1:]) if x.ndim == 3 else x1


def _channel_tokens(map4: Tensor, h: int) -> Tensor:
    """(B, H, W, C) -> (B, h, d, HW) channel-major token layout."""
    b, hh, ww, c = map4.shape
    t = T.reshape(map4, (b, hh * ww, h, c // h))
    return T.transpose(t, (0, 2, 3, 1))


def _l2_normalize_rows(t: Tensor) -> Tensor:
    # the tiny constant under the sqrt keeps the gradient finite on
    # exactly-zero rows (flat image regions reach here as zeros)
    sq = T.reduce_sum(T.mul(t, t), axis=-1, keepdims=True)
    norm = T.sqrt(T.add(sq, 1e-24))
    return T.div(t, T.add(norm, _NORM_EPS))


def isca_forward(x: Tensor, p: SubBlockParams) -> Tensor:
    """Transposed channel attention; returns x2 = attn + x."""
    x4 = T.reshape(x, (1,) + x.shape) if x.ndim == 3 else x
    b, hh, ww, c = x4.shape
    h = p.heads
    if c % h:
        raise ValueError(f"{c} channels not divisible by {h} heads")
    ip = p.isca

    y = T.layer_norm(x4, p.ln2_g, p.ln2_b, eps=_LN_EPS)
    q = T.conv2d(T.linear(y, ip.w_q_pw), ip.w_q_dw, None, padding=1, groups=c)
    k = T.conv2d(T.linear(y, ip.w_k_pw), ip.w_k_dw, None, padding=1, groups=c)
    v = T.conv2d(T.linear(y, ip.w_v_pw), ip.w_v_dw, None, padding=1, groups=c)

    qc = _l2_normalize_rows(_channel_tokens(q, h))
    kc = _l2_normalize_rows(_channel_tokens(k, h))
    vc = _channel_tokens(v, h)

    logits = T.mul(T.matmul(qc, T.transpose(kc, (0, 1, 3, 2))), ip.tau)
    attn = T.softmax(logits, axis=-1)  # (B, h, d, d)
    out = T.matmul(attn, vc)  # (B, h, d, HW)

    out = T.transpose(out, (0, 3, 1, 2))  # (B, HW, h, d)
    out = T.reshape(out, (b, hh, ww, c))
    x2 = T.add(T.linear(out, ip.w_out, ip.b_out), x4)
    return T.reshape(x2, x2.shape[1:]) if x.ndim == 3 else x2


def fefn_forward(x1: Tensor, x2: Tensor, p: SubBlockParams, mode: str = "gated") -> Tensor:
    """Fuse the branch outputs; default is gelu(x2') gating x1', plus x1."""
    if x1.shape != x2.shape:
        raise ValueError(f"branch shapes differ: {x1.shape} vs {x2.shape}")
    if mode not in FEFN_MODES:
        raise ValueError(f"unknown fefn mode {mode!r}")
    fp = p.fefn
    x1p = T.linear(x1, fp.w1, fp.b1)
    x2p = T.linear(x2, fp.w2, fp.b2)
    if mode == "gated":
        inner = T.mul(T.gelu(x2p), x1p)
    elif mode == "cat_gelu":
        inner = T.gelu(T.concat([x1p, x2p], axis=-1))
    elif mode == "add_gelu":
        inner = T.gelu(T.add(x1p, x2p))
    else:  # reversed
        inner = T.mul(T.gelu(x1p), x2p)
    return T.add(T.linear(inner, fp.w_p, fp.b_p), x1)


def sub_block_forward(
    x: Tensor,
    p: SubBlockParams,
    fefn_mode: str = "gated",
    downsample_mode: str = "baseline",
) -> Tensor:
    """x1 and x2 from the two branches on the same input, fused by the FFN."""
    x1 = cswa_forward(x, p, downsample_mode)
    x2 = isca_forward(x, p) if p.isca is not None else x1
    return fefn_forward(x1, x2, p, fefn_mode)


def fefn_hidden_dim(c: int, h: int, alpha: float = 2.6) -> int:
    """round(alpha * c), then up to the next multiple of the head count."""
    e = int(round(alpha * c))
    return ((e + h - 1) // h) * h
