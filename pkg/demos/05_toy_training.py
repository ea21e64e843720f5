"""Short end-to-end training run on synthetic pairs, then restore a held-out image.

A few hundred steps on a shoebox model is enough to see the network beat the
blurry input by a couple of dB. Expect a few minutes of wall time.
"""

import os
import tempfile
from dataclasses import replace

import numpy as np

from mptdeblur import (Rng, list_pairs, load_checkpoint, load_image,
                       mpt_forward, no_grad, preset_config, psnr, train, write_dataset)
from mptdeblur import tensor as T

root = tempfile.mkdtemp()
write_dataset(os.path.join(root, "data"), Rng(0), count=16, size=64, scene="cells")

cfg = replace(
    preset_config("desk"),
    iters=300,
    batch=2,
    patch=32,
    data_root=os.path.join(root, "data"),
    out_ckpt=os.path.join(root, "model.mptt"),
    log_every=50,
)
print("model:", cfg.model)

result = train(cfg)
print("baseline (blurry) psnr: %.2f dB" % result.baseline_psnr)
print("val psnr after %d iters: %.2f dB" % (cfg.iters, result.val_psnr))

# load the checkpoint back and run full-size inference on one pair
store, saved_cfg, opt_state, meta = load_checkpoint(cfg.out_ckpt)
print("checkpoint step:", store.step, " params:", store.size)

pairs, _ = list_pairs(cfg.data_root)
sharp = load_image(pairs[0][0])
blur = load_image(pairs[0][1])
with no_grad():
    out = mpt_forward(store, T.tensor(blur))  # 3d in, 3d out
restored = np.clip(out.data, 0.0, 1.0)
print("single image: input %.2f dB -> restored %.2f dB"
      % (psnr(sharp, blur), psnr(sharp, restored)))
