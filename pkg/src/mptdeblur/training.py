"""Training loop: L1 restoration objective with optional frequency-contrastive
regularization, AdamW, cosine learning rate, and deterministic logging.

A run is a pure function of (config, seed, dataset bytes): batch sampling,
augmentation, and reblur kernels all come from one sequential stream, so
rerunning a config reproduces the loss log bit-exactly.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import list_pairs, load_image, augment_crop, save_store
from .frequency import (
    ContrastiveBatch,
    LossTerms,
    cr_basic,
    cr_extended,
    efcr_ex_labeled,
    efcr_ex_unlabeled,
    efcr_total,
    gaussian_reblur,
)
from .metrics import psnr
from .network import (
    MptConfig,
    ParameterStore,
    build_model,
    checkpoint_entries,
    mpt_forward,
    restore_from_entries,
)
from .optim import AdamW, cosine_lr
from .rng import Rng
from .tensor import Tape, Tensor

__all__ = [
    "TrainConfig",
    "TrainResult",
    "train",
    "evaluate_pairs",
    "split_train_val",
    "save_checkpoint",
    "load_checkpoint",
    "EFCR_MODES",
]

EFCR_MODES = ("off", "basic", "ex-labeled", "ex-unlabeled")


@dataclass
class TrainConfig:
    model: MptConfig = field(default_factory=MptConfig)
    seed: int = 0
    iters: int = 2000
    batch: int = 2
    patch: int = 32
    lr_max: float = 1e-4
    lr_min: float = 1e-6
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    beta: float = 1e-5  # contrastive weight
    efcr: str = "off"
    efcr_stop_grad: bool = False
    val_frac: float = 0.1
    data_root: str = ""
    extra_root: str = ""
    out_ckpt: str = "model.mptt"
    ckpt_every: int = 0
    log_every: int = 1

    def validate(self) -> "TrainConfig":
        self.model.validate()
        if self.efcr not in EFCR_MODES:
            raise ValueError(f"efcr mode must be one of {EFCR_MODES}")
        if self.iters < 1 or self.batch < 1 or self.patch < 1:
            raise ValueError("iters, batch and patch must be positive")
        if not 0.0 < self.val_frac < 1.0:
            raise ValueError("val_frac must lie in (0, 1)")
        if self.efcr in ("ex-labeled", "ex-unlabeled") and not self.extra_root:
            raise ValueError(f"efcr={self.efcr} requires an extra dataset root")
        return self

    def to_dict(self) -> dict[str, str]:
        d = self.model.to_dict()
        d.update(
            {
                "train.seed": str(self.seed),
                "train.iters": str(self.iters),
                "train.batch": str(self.batch),
                "train.patch": str(self.patch),
                "train.lr_max": repr(self.lr_max),
                "train.lr_min": repr(self.lr_min),
                "train.weight_decay": repr(self.weight_decay),
                "train.beta1": repr(self.beta1),
                "train.beta2": repr(self.beta2),
                "train.beta": repr(self.beta),
                "train.efcr": self.efcr,
                "train.efcr_stop_grad": str(int(self.efcr_stop_grad)),
                "train.val_frac": repr(self.val_frac),
                "train.data_root": self.data_root,
                "train.extra_root": self.extra_root,
                "train.out_ckpt": self.out_ckpt,
                "train.ckpt_every": str(self.ckpt_every),
                "train.log_every": str(self.log_every),
            }
        )
        return d

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "TrainConfig":
        def get(key, default):
            return d.get(key, default)

        return cls(
            model=MptConfig.from_dict(d),
            seed=int(get("train.seed", 0)),
            iters=int(get("train.iters", 2000)),
            batch=int(get("train.batch", 2)),
            patch=int(get("train.patch", 32)),
            lr_max=float(get("train.lr_max", 1e-4)),
            lr_min=float(get("train.lr_min", 1e-6)),
            weight_decay=float(get("train.weight_decay", 1e-4)),
            beta1=float(get("train.beta1", 0.9)),
            beta2=float(get("train.beta2", 0.999)),
            beta=float(get("train.beta", 1e-5)),
            efcr=get("train.efcr", "off"),
            efcr_stop_grad=bool(int(get("train.efcr_stop_grad", 0))),
            val_frac=float(get("train.val_frac", 0.1)),
            data_root=get("train.data_root", ""),
            extra_root=get("train.extra_root", ""),
            out_ckpt=get("train.out_ckpt", "model.mptt"),
            ckpt_every=int(get("train.ckpt_every", 0)),
            log_every=int(get("train.log_every", 1)),
        ).validate()


@dataclass
class TrainResult:
    log: list[str]
    val_psnr: float
    baseline_psnr: float
    ckpt_path: str
    store: ParameterStore


def split_train_val(names: list[str], seed: int, val_frac: float) -> tuple[list[int], list[int]]:
    """Deterministic per-name split; stable under dataset reordering."""
    train_idx, val_idx = [], []
    for i, name in enumerate(sorted(names)):
        digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
        u = int.from_bytes(digest[:8], "little") / 2.0**64
        (val_idx if u < val_frac else train_idx).append(i)
    if not val_idx:
        val_idx.append(train_idx.pop())
    if not train_idx:
        train_idx.append(val_idx.pop())
    return train_idx, val_idx


def _load_dataset(root) -> tuple[list[str], list[np.ndarray], list[np.ndarray], list[str]]:
    pairs, warnings = list_pairs(root)
    if not pairs:
        raise FileNotFoundError(f"no usable pairs under {root}")
    names, sharps, blurs = [], [], []
    for sharp_path, blur_path, _ in pairs:
        names.append(os.path.basename(sharp_path))
        sharps.append(load_image(sharp_path))
        blurs.append(load_image(blur_path))
    return names, sharps, blurs, warnings


def _load_blur_only(root) -> list[np.ndarray]:
    blur_dir = os.path.join(root, "blur")
    if not os.path.isdir(blur_dir):
        raise FileNotFoundError(f"{root} must contain a blur/ directory")
    names = sorted(os.listdir(blur_dir))
    if not names:
        raise FileNotFoundError(f"no images under {blur_dir}")
    return [load_image(os.path.join(blur_dir, n)) for n in names]


def save_checkpoint(path, store: ParameterStore, opt: AdamW | None, cfg: TrainConfig, step: int, extra_meta: dict | None = None) -> None:
    entries = checkpoint_entries(store)
    if opt is not None:
        entries.update(opt.state_entries())
    meta = {
        "format": "mpt-checkpoint",
        "config": "\n".join(f"{k}={v}" for k, v in sorted(cfg.to_dict().items())),
        "config_hash": store.cfg.hash(),
        "seed": str(store.seed),
        "step": str(step),
    }
    if extra_meta:
        meta.update({k: str(v) for k, v in extra_meta.items()})
    save_store(path, entries, meta)


def load_checkpoint(path) -> tuple[ParameterStore, TrainConfig, dict[str, np.ndarray], dict[str, str]]:
    from .config import parse_config_text
    from .data import load_store

    entries, meta = load_store(path)
    if meta.get("format") != "mpt-checkpoint":
        raise ValueError(f"{path} is not a checkpoint (format={meta.get('format')!r})")
    cfg = TrainConfig.from_dict(parse_config_text(meta["config"]))
    if cfg.model.hash() != meta.get("config_hash"):
        raise ValueError("checkpoint config hash mismatch")
    store = restore_from_entries(
        cfg.model, entries, seed=int(meta.get("seed", 0)), step=int(meta.get("step", 0))
    )
    return store, cfg, entries, meta


def _forward_batch(store: ParameterStore, arr: np.ndarray) -> Tensor:
    return mpt_forward(store, Tensor(arr))


def _sample_patches(
    rng: Rng,
    sharps: list[np.ndarray],
    blurs: list[np.ndarray],
    idx_pool: list[int],
    batch: int,
    patch: int,
) -> tuple[np.ndarray, np.ndarray]:
    gt, inp = [], []
    for _ in range(batch):
        i = idx_pool[rng.randint(len(idx_pool))]
        s, b = augment_crop((sharps[i], blurs[i]), rng, patch)
        gt.append(s)
        inp.append(b)
    return np.stack(gt), np.stack(inp)


def _reblur_batch(rng: Rng, arr: np.ndarray) -> np.ndarray:
    out = np.empty_like(arr)
    for i in range(arr.shape[0]):
        out[i], _ = gaussian_reblur(arr[i], rng)
    return out


def train(cfg: TrainConfig, log_fn=None) -> TrainResult:
    """Run the configured training; returns the log and final metrics."""
    cfg.validate()
    lines: list[str] = []

    def log(msg: str) -> None:
        lines.append(msg)
        if log_fn is not None:
            log_fn(msg)

    names, sharps, blurs, warnings = _load_dataset(cfg.data_root)
    for w in warnings:
        log(f"warning: {w}")
    train_idx, val_idx = split_train_val(names, cfg.seed, cfg.val_frac)
    log(f"dataset: {len(train_idx)} train / {len(val_idx)} val pairs")

    # beta 0 scales the contrastive term away entirely, so the reblur forward
    # passes are skipped and the run matches efcr=off bit for bit
    mode = cfg.efcr if cfg.beta != 0.0 else "off"

    extra_pairs = None
    extra_blurs = None
    if mode == "ex-labeled":
        _, ex_sharps, ex_blurs, ex_warn = _load_dataset(cfg.extra_root)
        for w in ex_warn:
            log(f"warning (extra): {w}")
        extra_pairs = (ex_sharps, ex_blurs)
    elif mode == "ex-unlabeled":
        extra_blurs = _load_blur_only(cfg.extra_root)

    store = build_model(cfg.model, cfg.seed)
    opt = AdamW(
        store.params,
        lr=cfg.lr_max,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        weight_decay=cfg.weight_decay,
    )
    data_rng = Rng(cfg.seed).split(0xDA7A)

    for step in range(cfg.iters):
        lr = cosine_lr(step, cfg.iters, cfg.lr_max, cfg.lr_min)
        gt_np, in_np = _sample_patches(data_rng, sharps, blurs, train_idx, cfg.batch, cfg.patch)

        reblur_np = None
        if mode == "basic":
            reblur_np = _reblur_batch(data_rng, in_np)
        ex_gt_np = ex_in_np = ex_reblur_np = None
        if mode == "ex-labeled":
            ex_gt_np, ex_in_np = _sample_patches(
                data_rng, extra_pairs[0], extra_pairs[1],
                list(range(len(extra_pairs[0]))), cfg.batch, cfg.patch,
            )
            ex_reblur_np = _reblur_batch(data_rng, ex_in_np)
        elif mode == "ex-unlabeled":
            picks = [extra_blurs[data_rng.randint(len(extra_blurs))] for _ in range(cfg.batch)]
            ex_in_np = np.stack(
                [augment_crop((img, img), data_rng, cfg.patch)[0] for img in picks]
            )
            ex_reblur_np = _reblur_batch(data_rng, ex_in_np)

        with Tape() as tape:
            i_gt = Tensor(gt_np)
            i_in = Tensor(in_np)
            i_out = _forward_batch(store, in_np)
            l1 = T.l1_distance(i_out, i_gt)

            triples = []
            if mode == "basic":
                b_in = Tensor(reblur_np)
                if cfg.efcr_stop_grad:
                    with T.no_grad():
                        b_out = _forward_batch(store, reblur_np)
                else:
                    b_out = _forward_batch(store, reblur_np)
                for i in range(cfg.batch):
                    cb = ContrastiveBatch(
                        i_gt=i_gt[i], i_in=i_in[i], i_out=i_out[i],
                        b_in=b_in[i], b_out=b_out[i],
                    )
                    pos, neg = cr_basic(cb)
                    triples.append((pos, neg, cr_extended(cb)))
            elif mode == "ex-labeled":
                ex_out = _forward_batch(store, ex_in_np)
                if cfg.efcr_stop_grad:
                    with T.no_grad():
                        ex_b_out = _forward_batch(store, ex_reblur_np)
                else:
                    ex_b_out = _forward_batch(store, ex_reblur_np)
                ex_gt, ex_in, ex_b_in = Tensor(ex_gt_np), Tensor(ex_in_np), Tensor(ex_reblur_np)
                for i in range(cfg.batch):
                    cb = ContrastiveBatch(
                        i_gt_p=ex_gt[i], i_in_p=ex_in[i], i_out_p=ex_out[i],
                        b_in_p=ex_b_in[i], b_out_p=ex_b_out[i],
                    )
                    triples.append(efcr_ex_labeled(cb))
            elif mode == "ex-unlabeled":
                if cfg.efcr_stop_grad:
                    with T.no_grad():
                        ex_b_out = _forward_batch(store, ex_reblur_np)
                else:
                    ex_b_out = _forward_batch(store, ex_reblur_np)
                ex_in, ex_b_in = Tensor(ex_in_np), Tensor(ex_reblur_np)
                for i in range(cfg.batch):
                    cb = ContrastiveBatch(
                        i_gt=i_gt[i], i_in=i_in[i], i_out=i_out[i],
                        i_in_p=ex_in[i], b_in_p=ex_b_in[i], b_out_p=ex_b_out[i],
                    )
                    triples.append(efcr_ex_unlabeled(cb))

            if triples:
                terms = efcr_total(l1, triples, cfg.beta)
            else:
                terms = LossTerms(
                    l1=l1, l_pos=0.0, l_neg=0.0, l_ext=0.0,
                    l_cr=0.0, total=l1, beta=cfg.beta, n=cfg.batch,
                )

        loss = terms.total
        try:
            loss.assert_finite("training loss")
        except FloatingPointError:
            dump = cfg.out_ckpt + ".dump"
            save_checkpoint(dump, store, opt, cfg, step, {"aborted": "non-finite loss"})
            raise RuntimeError(
                f"non-finite loss at step {step}; state dumped to {dump}"
            )
        opt.zero_grads()
        tape.backward(loss)
        opt.step(lr)
        store.step = step + 1

        if cfg.log_every and step % cfg.log_every == 0:
            lcr_val = terms.l_cr.item() if isinstance(terms.l_cr, Tensor) else terms.l_cr
            log(
                f"step={step} lr={lr:.9e} l1={l1.item():.9e} "
                f"lcr={lcr_val:.9e} total={loss.item():.9e}"
            )
        if cfg.ckpt_every and (step + 1) % cfg.ckpt_every == 0 and step + 1 < cfg.iters:
            save_checkpoint(cfg.out_ckpt, store, opt, cfg, step + 1)

    val_psnr, baseline_psnr = _validate(store, sharps, blurs, val_idx)
    log(f"final val_psnr={val_psnr:.6f} baseline_psnr={baseline_psnr:.6f}")
    save_checkpoint(
        cfg.out_ckpt, store, opt, cfg, cfg.iters,
        {"val_psnr": f"{val_psnr:.6f}", "baseline_psnr": f"{baseline_psnr:.6f}"},
    )
    return TrainResult(
        log=lines,
        val_psnr=val_psnr,
        baseline_psnr=baseline_psnr,
        ckpt_path=cfg.out_ckpt,
        store=store,
    )


def _validate(store, sharps, blurs, val_idx) -> tuple[float, float]:
    model_scores, base_scores = [], []
    for i in val_idx:
        out = mpt_forward(store, Tensor(blurs[i])).data
        model_scores.append(psnr(np.clip(out, 0.0, 1.0), sharps[i]))
        base_scores.append(psnr(blurs[i], sharps[i]))
    return float(np.mean(model_scores)), float(np.mean(base_scores))


def evaluate_pairs(store: ParameterStore, root) -> tuple[list[dict], list[str]]:
    """Run the model over every pair under root; returns csv-ready rows."""
    from .metrics import ssim

    pairs, warnings = list_pairs(root)
    rows = []
    for sharp_path, blur_path, _ in pairs:
        sharp = load_image(sharp_path)
        blur = load_image(blur_path)
        out = np.clip(mpt_forward(store, Tensor(blur)).data, 0.0, 1.0)
        rows.append(
            {
                "image": os.path.basename(sharp_path),
                "psnr": psnr(out, sharp),
                "ssim": ssim(out, sharp),
            }
        )
    return rows, warnings
