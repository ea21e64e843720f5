"""U-shaped seven-block assembly: three encoder stages, a bottleneck, three
decoder stages, pixel-(un)shuffle transitions, and encoder-decoder shortcuts
by element-wise addition.

Stage i runs at resolution H/2^(i-1) with C*2^(i-1) channels.  One layout
generator is the single source of truth for parameter names and shapes, so
initialization, counting, checkpoint order, and the FLOP report can never
drift apart.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .blocks import (
    CswaParams,
    FefnParams,
    IscaParams,
    RelPosBias,
    SubBlockParams,
    fefn_hidden_dim,
    rel_pos_index,
    sub_block_forward,
)
from .rng import Rng
from .tensor import Tensor
from .windows import DOWNSAMPLE_MODES, ScaleSpec

__all__ = [
    "MptConfig",
    "ParameterStore",
    "param_layout",
    "build_model",
    "param_count",
    "mpt_forward",
    "flops_report",
    "flops_estimate",
    "cswa_attention_macs",
    "pad_divisor",
    "FLOP_CONVENTION",
]

_ATTENTION_MODES = ("cswa", "wa")
_CHANNEL_MODES = ("isca", "none")
_FEFN_ALIASES = {"fefn": "gated", "gated": "gated", "cat_gelu": "cat_gelu",
                 "add_gelu": "add_gelu", "reversed": "reversed"}

FLOP_CONVENTION = (
    "multiply-accumulate counts over convolutions and linear projections, "
    "1 MAC reported as 1 FLOP (the convention of the reference counters; "
    "multiply every figure by 2 for the multiply-plus-add MACx2 convention); "
    "attention matmul MACs are reported separately and excluded from the "
    "headline total"
)

# block name, stage index (1-based), True when the block sits on the decoder side
_BLOCK_PLAN = (
    ("enc1", 1, False),
    ("enc2", 2, False),
    ("enc3", 3, False),
    ("bot", 4, False),
    ("dec3", 3, True),
    ("dec2", 2, True),
    ("dec1", 1, True),
)


@dataclass(frozen=True)
class MptConfig:
    in_channels: int = 3
    base_dim: int = 40
    heads: tuple[int, ...] = (1, 2, 4, 8)
    sub_blocks: tuple[int, ...] = (6, 6, 6, 6)
    # per-stage key/value scale ratios (1/s), one entry per sub-block
    scales: tuple[tuple[int, ...], ...] = (
        (8, 8, 4, 4, 1, 1),
        (4, 4, 2, 2, 1, 1),
        (2, 2, 2, 2, 1, 1),
        (2, 2, 2, 2, 1, 1),
    )
    m: int = 8
    alpha: float = 2.6
    global_residual: bool = True
    attention: str = "cswa"
    channel: str = "isca"
    fefn: str = "gated"
    downsample: str = "baseline"

    @property
    def stage_dims(self) -> tuple[int, ...]:
        return tuple(self.base_dim * (1 << i) for i in range(4))

    def validate(self) -> "MptConfig":
        if self.base_dim <= 0 or self.in_channels <= 0:
            raise ValueError("degenerate config: dims must be positive")
        if len(self.heads) != 4 or len(self.sub_blocks) != 4 or len(self.scales) != 4:
            raise ValueError("heads, sub_blocks and scales must list 4 stages")
        if self.m < 1:
            raise ValueError("window width must be >= 1")
        if self.attention not in _ATTENTION_MODES:
            raise ValueError(f"attention must be one of {_ATTENTION_MODES}")
        if self.channel not in _CHANNEL_MODES:
            raise ValueError(f"channel must be one of {_CHANNEL_MODES}")
        if self.fefn not in _FEFN_ALIASES:
            raise ValueError(f"fefn must be one of {sorted(_FEFN_ALIASES)}")
        if self.downsample not in DOWNSAMPLE_MODES:
            raise ValueError(f"downsample must be one of {DOWNSAMPLE_MODES}")
        for i, (c, h, n, sc) in enumerate(
            zip(self.stage_dims, self.heads, self.sub_blocks, self.scales)
        ):
            if c % h:
                raise ValueError(f"stage {i + 1}: dim {c} not divisible by {h} heads")
            if n % 2:
                raise ValueError(f"stage {i + 1}: sub-block count {n} must be even")
            if len(sc) != n:
                raise ValueError(f"stage {i + 1}: {len(sc)} scales for {n} sub-blocks")
            ratios = [ScaleSpec.from_value(v).ratio for v in sc]
            if any(a < b for a, b in zip(ratios, ratios[1:])):
                raise ValueError(
                    f"stage {i + 1}: scales must be coarse-to-fine (s non-decreasing)"
                )
        for i in range(3):
            if self.stage_dims[i + 1] % 4:
                raise ValueError("stage dims 2..4 must divide by 4 for pixel shuffles")
        return self

    @property
    def fefn_mode(self) -> str:
        return _FEFN_ALIASES[self.fefn]

    def stage_scales(self, stage: int) -> tuple[ScaleSpec, ...]:
        """Effective scale specs for a 1-based stage; plain window attention
        forces every ratio to 1."""
        raw = self.scales[stage - 1]
        if self.attention == "wa":
            return tuple(ScaleSpec(1) for _ in raw)
        return tuple(ScaleSpec.from_value(v) for v in raw)

    def to_dict(self) -> dict[str, str]:
        scales = ";".join(
            ",".join(str(ScaleSpec.from_value(v).ratio) for v in sc)
            for sc in self.scales
        )
        return {
            "model.in_channels": str(self.in_channels),
            "model.base_dim": str(self.base_dim),
            "model.heads": ",".join(map(str, self.heads)),
            "model.sub_blocks": ",".join(map(str, self.sub_blocks)),
            "model.scale_ratios": scales,
            "model.m": str(self.m),
            "model.alpha": repr(self.alpha),
            "model.global_residual": str(int(self.global_residual)),
            "model.attention": self.attention,
            "model.channel": self.channel,
            "model.fefn": self.fefn,
            "model.downsample": self.downsample,
        }

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "MptConfig":
        def get(key, default):
            return d.get(key, default)

        scales = tuple(
            tuple(int(v) for v in group.split(",") if v)
            for group in get("model.scale_ratios", "8,8,4,4,1,1;4,4,2,2,1,1;2,2,2,2,1,1;2,2,2,2,1,1").split(";")
        )
        return cls(
            in_channels=int(get("model.in_channels", 3)),
            base_dim=int(get("model.base_dim", 40)),
            heads=tuple(int(v) for v in get("model.heads", "1,2,4,8").split(",")),
            sub_blocks=tuple(int(v) for v in get("model.sub_blocks", "6,6,6,6").split(",")),
            scales=scales,
            m=int(get("model.m", 8)),
            alpha=float(get("model.alpha", 2.6)),
            global_residual=bool(int(get("model.global_residual", 1))),
            attention=get("model.attention", "cswa"),
            channel=get("model.channel", "isca"),
            fefn=get("model.fefn", "gated"),
            downsample=get("model.downsample", "baseline"),
        ).validate()

    def hash(self) -> str:
        text = "\n".join(f"{k}={v}" for k, v in sorted(self.to_dict().items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def pad_divisor(cfg: MptConfig) -> int:
    """Spatial divisor so every stage map tiles by M after downscaling.

    Stage i at H/2^(i-1) needs its map divisible by m * max_ratio_i; ratios
    and stage strides are powers of two, so the max over stages is the lcm.
    """
    d = 8  # three pixel-unshuffle halvings
    for stage in range(1, 5):
        ratios = [s.ratio for s in cfg.stage_scales(stage)]
        d = max(d, (1 << (stage - 1)) * cfg.m * max(ratios))
    return d


# -- layout -----------------------------------------------------------------------


def _sub_block_layout(prefix: str, c: int, h: int, m: int, spec: ScaleSpec, cfg: MptConfig):
    e = fefn_hidden_dim(c, h, cfg.alpha)
    yield (f"{prefix}.ln1.g", (c,), "one")
    yield (f"{prefix}.ln1.b", (c,), "zero")
    for proj in ("q", "k", "v"):
        yield (f"{prefix}.cswa.{proj}_dw", (3, 3, 1, c), "tn")
        yield (f"{prefix}.cswa.{proj}_pw", (c, c), "tn")
    if spec.ratio > 1:
        yield (f"{prefix}.cswa.ds.w", (c, c), "tn")
        yield (f"{prefix}.cswa.ds.b", (c,), "zero")
    yield (f"{prefix}.cswa.out.w", (c, c), "tn")
    yield (f"{prefix}.cswa.out.b", (c,), "zero")
    yield (f"{prefix}.cswa.bias", ((2 * m - 1) ** 2, h), "zero")
    if cfg.channel == "isca":
        yield (f"{prefix}.ln2.g", (c,), "one")
        yield (f"{prefix}.ln2.b", (c,), "zero")
        for proj in ("q", "k", "v"):
            yield (f"{prefix}.isca.{proj}_pw", (c, c), "tn")
            yield (f"{prefix}.isca.{proj}_dw", (3, 3, 1, c), "tn")
        yield (f"{prefix}.isca.tau", (h, 1, 1), "one")
        yield (f"{prefix}.isca.out.w", (c, c), "tn")
        yield (f"{prefix}.isca.out.b", (c,), "zero")
    yield (f"{prefix}.fefn.w1", (c, e), "tn")
    yield (f"{prefix}.fefn.b1", (e,), "zero")
    yield (f"{prefix}.fefn.w2", (c, e), "tn")
    yield (f"{prefix}.fefn.b2", (e,), "zero")
    e_p = 2 * e if cfg.fefn_mode == "cat_gelu" else e
    yield (f"{prefix}.fefn.w_p", (e_p, c), "tn")
    yield (f"{prefix}.fefn.b_p", (c,), "zero")


def param_layout(cfg: MptConfig):
    """Yield (name, shape, init_kind) in network order."""
    cfg.validate()
    dims = cfg.stage_dims
    yield ("conv_in.w", (3, 3, cfg.in_channels, dims[0]), "tn")
    for name, stage, _ in _BLOCK_PLAN:
        c, h = dims[stage - 1], cfg.heads[stage - 1]
        for k, spec in enumerate(cfg.stage_scales(stage)):
            yield from _sub_block_layout(f"{name}.s{k}", c, h, cfg.m, spec, cfg)
        if name in ("enc1", "enc2", "enc3"):
            i = stage - 1
            yield (f"down{stage}.w", (3, 3, dims[i], dims[i + 1] // 4), "tn")
        if name == "bot" or name in ("dec3", "dec2"):
            i = stage - 1  # upsample feeding the next (finer) decoder stage
            yield (f"up{stage - 1}.w", (3, 3, dims[i], 4 * dims[i - 1]), "tn")
    yield ("conv_out.w", (3, 3, dims[0], cfg.in_channels), "tn")


@dataclass
class ParameterStore:
    """Ordered name -> Tensor map plus the metadata a checkpoint carries."""

    params: dict[str, Tensor]
    cfg: MptConfig
    seed: int
    step: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def get(self, name: str):
        return self.params.get(name)

    def items(self):
        return self.params.items()

    @property
    def size(self) -> int:
        return sum(p.size for p in self.params.values())

    def config_hash(self) -> str:
        return self.cfg.hash()


def build_model(cfg: MptConfig, seed: int) -> ParameterStore:
    """Allocate and deterministically initialize every parameter tensor."""
    rng = Rng(seed).split(0x6D7074)  # model-init stream, decoupled from data
    params: dict[str, Tensor] = {}
    for name, shape, kind in param_layout(cfg):
        if name in params:
            raise RuntimeError(f"duplicate parameter name {name}")
        n = int(np.prod(shape))
        if kind == "tn":
            data = rng.bulk_trunc_normal(n, std=0.02).reshape(shape)
        elif kind == "one":
            data = np.ones(shape, dtype=np.float64)
        else:
            data = np.zeros(shape, dtype=np.float64)
        params[name] = Tensor(data.astype(np.float32), requires_grad=True)
    return ParameterStore(params=params, cfg=cfg, seed=seed)


def param_count(cfg: MptConfig) -> int:
    total = 0
    for _, shape, _ in param_layout(cfg):
        total += int(np.prod(shape))
    if total <= 0:
        raise ValueError("degenerate config: no parameters")
    return total


# -- forward ------------------------------------------------------------------------


def _block_params(store: ParameterStore, prefix: str, stage: int) -> list[SubBlockParams]:
    cfg = store.cfg
    key = (prefix, stage)
    if key in store._cache:
        return store._cache[key]
    c, h = cfg.stage_dims[stage - 1], cfg.heads[stage - 1]
    idx = rel_pos_index(cfg.m)
    out = []
    for k, spec in enumerate(cfg.stage_scales(stage)):
        p = f"{prefix}.s{k}"
        cswa = CswaParams(
            w_q_dw=store[f"{p}.cswa.q_dw"],
            w_q_pw=store[f"{p}.cswa.q_pw"],
            w_k_dw=store[f"{p}.cswa.k_dw"],
            w_k_pw=store[f"{p}.cswa.k_pw"],
            w_v_dw=store[f"{p}.cswa.v_dw"],
            w_v_pw=store[f"{p}.cswa.v_pw"],
            w_ds=store.get(f"{p}.cswa.ds.w"),
            b_ds=store.get(f"{p}.cswa.ds.b"),
            w_out=store[f"{p}.cswa.out.w"],
            b_out=store[f"{p}.cswa.out.b"],
            bias=RelPosBias(table=store[f"{p}.cswa.bias"], index=idx),
        )
        isca = None
        if cfg.channel == "isca":
            isca = IscaParams(
                w_q_pw=store[f"{p}.isca.q_pw"],
                w_q_dw=store[f"{p}.isca.q_dw"],
                w_k_pw=store[f"{p}.isca.k_pw"],
                w_k_dw=store[f"{p}.isca.k_dw"],
                w_v_pw=store[f"{p}.isca.v_pw"],
                w_v_dw=store[f"{p}.isca.v_dw"],
                tau=store[f"{p}.isca.tau"],
                w_out=store[f"{p}.isca.out.w"],
                b_out=store[f"{p}.isca.out.b"],
            )
        fefn = FefnParams(
            w1=store[f"{p}.fefn.w1"],
            b1=store[f"{p}.fefn.b1"],
            w2=store[f"{p}.fefn.w2"],
            b2=store[f"{p}.fefn.b2"],
            w_p=store[f"{p}.fefn.w_p"],
            b_p=store[f"{p}.fefn.b_p"],
        )
        out.append(
            SubBlockParams(
                ln1_g=store[f"{p}.ln1.g"],
                ln1_b=store[f"{p}.ln1.b"],
                ln2_g=store.get(f"{p}.ln2.g"),
                ln2_b=store.get(f"{p}.ln2.b"),
                cswa=cswa,
                isca=isca,
                fefn=fefn,
                heads=h,
                spec=spec,
                shifted=(k % 2 == 1),
                m=cfg.m,
            )
        )
    store._cache[key] = out
    return out


def _run_block(x: Tensor, store: ParameterStore, prefix: str, stage: int) -> Tensor:
    cfg = store.cfg
    for p in _block_params(store, prefix, stage):
        x = sub_block_forward(x, p, cfg.fefn_mode, cfg.downsample)
    return x.assert_finite(f"{prefix} output")


def mpt_forward(store: ParameterStore, image: Tensor) -> Tensor:
    """Full restoration pass; output matches the input size exactly."""
    cfg = store.cfg
    x = T.reshape(image, (1,) + image.shape) if image.ndim == 3 else image
    x.assert_finite("input image")
    n, h, w, cin = x.shape
    if cin != cfg.in_channels:
        raise ValueError(f"expected {cfg.in_channels} channels, got {cin}")
    d = pad_divisor(cfg)
    xp = T.pad2d(x, (-h) % d, (-w) % d)

    f = T.conv2d(xp, store["conv_in.w"], None, padding=1)
    skips = {}
    for stage, name in ((1, "enc1"), (2, "enc2"), (3, "enc3")):
        f = _run_block(f, store, name, stage)
        skips[stage] = f
        f = T.pixel_shuffle_down(T.conv2d(f, store[f"down{stage}.w"], None, padding=1), 2)
    f = _run_block(f, store, "bot", 4)
    for stage, name in ((3, "dec3"), (2, "dec2"), (1, "dec1")):
        f = T.pixel_shuffle_up(T.conv2d(f, store[f"up{stage}.w"], None, padding=1), 2)
        f = T.add(f, skips[stage])
        f = _run_block(f, store, name, stage)
    out = T.conv2d(f, store["conv_out.w"], None, padding=1)
    if cfg.global_residual:
        out = T.add(out, xp)
    out = T.crop2d(out, h, w)
    out.assert_finite("network output")
    return T.reshape(out, out.shape[1:]) if image.ndim == 3 else out


# -- accounting ---------------------------------------------------------------------


def cswa_attention_macs(h_map: int, w_map: int, c: int, heads: int, m: int, spec: ScaleSpec) -> int:
    """MACs of the two window-attention matmuls; the scale never enters
    because every query window scores against exactly one M x M key window."""
    n_win = (h_map // m) * (w_map // m)
    d = c // heads
    return 2 * heads * n_win * (m**2) * (m**2) * d


def flops_report(cfg: MptConfig, h: int, w: int) -> dict:
    """Per-component MAC counts for one forward pass at h x w."""
    cfg.validate()
    d = pad_divisor(cfg)
    hp, wp = h + (-h) % d, w + (-w) % d
    dims = cfg.stage_dims
    r: dict[str, float] = {
        "conv_in": 9 * cfg.in_channels * dims[0] * hp * wp,
        "conv_out": 9 * dims[0] * cfg.in_channels * hp * wp,
        "transitions": 0,
        "cswa_proj": 0,
        "cswa_attention": 0,
        "cswa_out": 0,
        "isca_proj": 0,
        "isca_attention": 0,
        "isca_out": 0,
        "fefn": 0,
    }
    for _, stage, _ in _BLOCK_PLAN:
        c, heads = dims[stage - 1], cfg.heads[stage - 1]
        hs, ws = hp >> (stage - 1), wp >> (stage - 1)
        area = hs * ws
        e = fefn_hidden_dim(c, heads, cfg.alpha)
        e_p = 2 * e if cfg.fefn_mode == "cat_gelu" else e
        for spec in cfg.stage_scales(stage):
            a_s = area // (spec.ratio**2)
            proj = (9 * c + c * c) * area  # q path on the local map
            proj += 2 * (9 * c + c * c) * a_s  # k and v on the downscaled map
            if spec.ratio > 1:
                # downsample projection; v_ds2 has none, v_ds4 projects pre-pool
                if cfg.downsample == "v_ds4":
                    proj += c * c * area
                elif cfg.downsample != "v_ds2":
                    proj += c * c * a_s
            r["cswa_proj"] += proj
            r["cswa_attention"] += cswa_attention_macs(hs, ws, c, heads, cfg.m, spec)
            r["cswa_out"] += c * c * area
            if cfg.channel == "isca":
                r["isca_proj"] += 3 * (c * c + 9 * c) * area
                r["isca_attention"] += 2 * c * (c // heads) * area
                r["isca_out"] += c * c * area
            r["fefn"] += (2 * c * e + e_p * c) * area
    for i in range(3):
        hi, wi = hp >> i, wp >> i
        r["transitions"] += 9 * dims[i] * (dims[i + 1] // 4) * hi * wi
        r["transitions"] += 9 * dims[i + 1] * 4 * dims[i] * (hi // 2) * (wi // 2)
    attn = r["cswa_attention"] + r["isca_attention"]
    r["total"] = sum(
        v for k, v in r.items() if k not in ("cswa_attention", "isca_attention")
    )
    r["total_with_attention"] = r["total"] + attn
    r["convention"] = FLOP_CONVENTION
    return r


def flops_estimate(cfg: MptConfig, h: int, w: int) -> float:
    """Headline MAC count (see FLOP_CONVENTION) for one forward pass."""
    return float(flops_report(cfg, h, w)["total"])


# -- checkpoints ---------------------------------------------------------------------


def checkpoint_entries(store: ParameterStore) -> dict[str, np.ndarray]:
    return {f"param.{k}": p.data for k, p in store.items()}


def restore_from_entries(cfg: MptConfig, entries: dict[str, np.ndarray], seed: int, step: int) -> ParameterStore:
    params: dict[str, Tensor] = {}
    for name, shape, _ in param_layout(cfg):
        key = f"param.{name}"
        if key not in entries:
            raise ValueError(f"checkpoint is missing parameter {name}")
        arr = entries[key]
        if tuple(arr.shape) != tuple(shape):
            raise ValueError(
                f"checkpoint parameter {name} has shape {arr.shape}, expected {shape}"
            )
        params[name] = Tensor(arr.astype(np.float32, copy=True), requires_grad=True)
    return ParameterStore(params=params, cfg=cfg, seed=seed, step=step)
