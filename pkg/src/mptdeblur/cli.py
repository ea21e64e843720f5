"""Command-line surface: synth | train | deblur | eval | attn-dist | selftest.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Every subcommand
prints its resolved configuration before acting, so a run can be reproduced
from its own output.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import PRESETS, load_config_file, render_config, resolve_config
from .data import list_pairs, load_image, save_image, write_dataset
from .metrics import attention_distance_report, write_csv
from .network import flops_report, mpt_forward, param_count
from .rng import Rng
from .selfcheck import SELFTEST_PRECISIONS, run_selftest
from .tensor import Tensor
from .training import evaluate_pairs, load_checkpoint, train

__all__ = ["main"]

_SCENES = ("cells", "stripes", "checker")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    p = _Parser(prog="mptdeblur", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def shared(sp):
        sp.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        sp.add_argument("--preset", choices=PRESETS, default="desk")
        sp.add_argument("--config", default=None, help="flat key=value config file")

    sp = sub.add_parser("synth", help="write a synthetic sharp/blur pair dataset")
    shared(sp)
    sp.add_argument("--out", required=True, help="dataset root to create")
    sp.add_argument("--count", type=int, default=8)
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("--scene", choices=_SCENES, default="cells")
    sp.add_argument("--mask", action="store_true",
                    help="blur only a masked region and save the masks")

    sp = sub.add_parser("train", help="train a model on a paired dataset")
    shared(sp)
    sp.add_argument("--data", required=True, help="dataset root (sharp/ and blur/)")
    sp.add_argument("--extra-data", default=None, help="extra dataset for ex-* modes")
    sp.add_argument("--efcr", choices=("off", "basic", "ex-labeled", "ex-unlabeled"),
                    default=None)
    sp.add_argument("--iters", type=int, default=None)
    sp.add_argument("--batch", type=int, default=None)
    sp.add_argument("--patch", type=int, default=None)
    sp.add_argument("--out-ckpt", default=None)

    sp = sub.add_parser("deblur", help="restore one image with a trained checkpoint")
    shared(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("eval", help="PSNR/SSIM over a paired dataset")
    shared(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--csv", default=None)

    sp = sub.add_parser("attn-dist", help="normalized attention distance over images")
    shared(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--grid", type=int, default=16)
    sp.add_argument("--csv", default=None)

    sp = sub.add_parser("selftest", help="run the verification battery")
    shared(sp)
    sp.add_argument("--precision", choices=SELFTEST_PRECISIONS, default="f32")
    return p


def _echo(section: str, kv: dict) -> None:
    print(f"# resolved {section} configuration")
    print(render_config({str(k): str(v) for k, v in kv.items()}))


def _resolve_train(args) -> "TrainConfig":
    file_overrides = load_config_file(args.config) if args.config else None
    cli = {}
    if args.seed is not None:
        cli["train.seed"] = str(args.seed)
    if args.efcr is not None:
        cli["train.efcr"] = args.efcr
    if args.iters is not None:
        cli["train.iters"] = str(args.iters)
    if args.batch is not None:
        cli["train.batch"] = str(args.batch)
    if args.patch is not None:
        cli["train.patch"] = str(args.patch)
    if args.out_ckpt is not None:
        cli["train.out_ckpt"] = args.out_ckpt
    cli["train.data_root"] = args.data
    if args.extra_data is not None:
        cli["train.extra_root"] = args.extra_data
    return resolve_config(args.preset, file_overrides, cli)


def _cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else 0
    _echo("synth", {"seed": seed, "out": args.out, "count": args.count,
                    "size": args.size, "scene": args.scene, "mask": int(args.mask)})
    n = write_dataset(args.out, Rng(seed), args.count, args.size, args.scene,
                      with_mask=args.mask)
    print(f"wrote {n} pairs under {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _resolve_train(args)
    _echo("train", cfg.to_dict())
    n = param_count(cfg.model)
    macs = flops_report(cfg.model, cfg.patch, cfg.patch)["total"]
    print(f"model: {n} parameters, {macs / 1e9:.3f} GMACs per {cfg.patch}x{cfg.patch} pass")
    result = train(cfg, log_fn=print)
    print(f"checkpoint written to {result.ckpt_path}")
    return 0


def _cmd_deblur(args) -> int:
    store, _cfg, _, meta = load_checkpoint(args.ckpt)
    _echo("deblur", {"ckpt": args.ckpt, "in": args.input, "out": args.out,
                     "config_hash": meta.get("config_hash", "")})
    img = load_image(args.input)
    out = np.clip(mpt_forward(store, Tensor(img)).data, 0.0, 1.0)
    save_image(args.out, out)
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    store, _cfg, _, meta = load_checkpoint(args.ckpt)
    _echo("eval", {"ckpt": args.ckpt, "data": args.data,
                   "csv": args.csv or "", "config_hash": meta.get("config_hash", "")})
    rows, warnings = evaluate_pairs(store, args.data)
    for w in warnings:
        print(f"warning: {w}")
    if not rows:
        raise FileNotFoundError(f"no usable pairs under {args.data}")
    for r in rows:
        print(f"{r['image']}: psnr={r['psnr']:.4f} ssim={r['ssim']:.6f}")
    mean_psnr = float(np.mean([r["psnr"] for r in rows]))
    mean_ssim = float(np.mean([r["ssim"] for r in rows]))
    print(f"mean: psnr={mean_psnr:.4f} ssim={mean_ssim:.6f} over {len(rows)} pairs")
    if args.csv:
        write_csv(args.csv, rows)
        print(f"wrote {args.csv}")
    return 0


def _attn_dist_images(root) -> list[tuple[str, np.ndarray]]:
    blur_dir = os.path.join(root, "blur")
    scan = blur_dir if os.path.isdir(blur_dir) else root
    names = sorted(
        n for n in os.listdir(scan) if n.lower().endswith((".ppm", ".pgm"))
    )
    if not names:
        raise FileNotFoundError(f"no .ppm/.pgm images under {scan}")
    return [(n, load_image(os.path.join(scan, n))) for n in names]


def _cmd_attn_dist(args) -> int:
    if args.grid < 1:
        raise ValueError("--grid must be >= 1")
    _echo("attn-dist", {"data": args.data, "grid": args.grid, "csv": args.csv or ""})
    named = _attn_dist_images(args.data)
    report = attention_distance_report(
        [img for _, img in named], p=args.grid, label=str(args.data)
    )
    rows = []
    for (name, _), value in zip(named, report.per_image):
        print(f"{name}: nad={value:.6f}")
        rows.append({"image": name, "nad": value})
    print(f"mean nad={report.mean:.6f} over {len(named)} images (grid {args.grid})")
    if args.csv:
        write_csv(args.csv, rows)
        print(f"wrote {args.csv}")
    return 0


def _cmd_selftest(args) -> int:
    _echo("selftest", {"precision": args.precision})
    failures = run_selftest(args.precision, log_fn=print)
    if failures:
        print(f"{failures} check(s) failed")
        return 2
    print("all checks passed")
    return 0


_DISPATCH = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "deblur": _cmd_deblur,
    "eval": _cmd_eval,
    "attn-dist": _cmd_attn_dist,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
