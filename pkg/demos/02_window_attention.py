"""Window partition/merge, cyclic shifts, and the cross-scale key/value gather."""

import numpy as np

from mptdeblur import MptConfig, ScaleSpec, build_model
from mptdeblur import tensor as T
from mptdeblur.network import _block_params, cswa_attention_macs
from mptdeblur.windows import cross_scale_index, cyclic_shift, window_merge, window_partition

rng = np.random.default_rng(7)
m = 4

# partition pads up to a multiple of m, merge crops back
x = T.tensor(rng.standard_normal((1, 10, 13, 6)))
wins, grid = window_partition(x, m)
print("input", x.shape, "-> windows", wins.shape,
      " grid", grid.rows, "x", grid.cols, " pad", grid.pad)
back = window_merge(wins, grid)
print("merge roundtrip exact:", np.array_equal(back.data, x.data))

# shifted windows: roll by m//2, attend, roll back
sh = cyclic_shift(x, -(m // 2))
un = cyclic_shift(sh, m // 2)
print("shift inverse exact:", np.array_equal(un.data, x.data))

# cross-scale gather: queries at full resolution, keys/values at 1/r.
# each query window grabs the coarse window covering its area, so several
# query windows share one k/v window.
for r in (1, 2, 4):
    spec = ScaleSpec(r)
    xq = T.tensor(rng.standard_normal((1, 16, 16, 6)))
    xk = T.tensor(rng.standard_normal((1, 16 // r, 16 // r, 6)))
    _, gq = window_partition(xq, m)
    _, gk = window_partition(xk, m)
    idx = cross_scale_index(gq, gk, spec)
    print(f"ratio {r}: {gq.count} query windows -> {gk.count} k/v windows,"
          f" gather index {idx.tolist()}")

# attention cost is invariant to the ratio: window count drops as r^2 but
# every query still sees m*m keys
for r in (1, 2, 4):
    macs = cswa_attention_macs(32, 32, 16, 2, m, ScaleSpec(r))
    print(f"attention MACs at ratio {r}: {macs}")

# one full sub-block from a built model, run standalone
cfg = MptConfig(base_dim=8, heads=(1, 2, 4, 8), sub_blocks=(2, 2, 2, 2),
                scales=((2, 1), (2, 1), (1, 1), (1, 1)), m=4)
store = build_model(cfg, seed=3)
blk = _block_params(store, "enc1", 1)[0]
print("enc1 sub-block 0: heads =", blk.heads, " ratio =", blk.spec.ratio, " shifted =", blk.shifted)

from mptdeblur import sub_block_forward

feat = rng.standard_normal((1, 16, 16, 8)).astype(np.float32) * 0.5
y = sub_block_forward(T.tensor(feat), blk)
print("sub-block output", y.shape, " finite:", np.all(np.isfinite(y.data)))
