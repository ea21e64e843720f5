"""Haar band split, perfect reconstruction, and how the contrastive ratio moves."""

import numpy as np

from mptdeblur import efcr_total, f_high, f_low, haar_dwt, haar_idwt
from mptdeblur import tensor as T
from mptdeblur.frequency import ContrastiveBatch, cr_basic

rng = np.random.default_rng(1)

img = T.tensor(rng.random((1, 32, 32, 3)))
bands = haar_dwt(img)
print("ll/lh/hl/hh:", bands.ll.shape, bands.lh.shape, bands.hl.shape, bands.hh.shape)

rec = haar_idwt(bands)
print("reconstruction max err:", np.max(np.abs(rec.data - img.data)))

# Parseval-style check: the split is orthogonal up to scaling
e_img = np.sum(img.data**2)
e_bands = sum(np.sum(getattr(bands, k).data**2) for k in ("ll", "lh", "hl", "hh"))
print("energy in image vs bands:", e_img, e_bands)

# odd sizes pad on the right/bottom and remember it
odd = T.tensor(rng.random((1, 9, 11, 3)))
rec_odd = haar_idwt(haar_dwt(odd))
print("odd-size roundtrip max err:", np.max(np.abs(rec_odd.data - odd.data)))

# f_high keeps the three detail bands, f_low the approximation
print("f_high:", f_high(img).shape, " f_low:", f_low(img).shape)

# contrastive pull: as the restoration approaches the sharp target, the
# positive distance shrinks while the distance to the blurry anchor grows,
# so the ratio (and the loss) drops. at mix 1.0 the output IS the anchor
# and the denominator collapses to the epsilon guard; start just off it.
sharp = T.tensor(rng.random((2, 32, 32, 3)))
blur = T.tensor(np.clip(sharp.data + 0.15 * rng.standard_normal(sharp.shape), 0, 1))
for mix in (0.9, 0.5, 0.1, 0.0):
    out = T.tensor(mix * blur.data + (1 - mix) * sharp.data)
    pos, neg = cr_basic(ContrastiveBatch(i_gt=sharp, i_in=blur, i_out=out))
    l1 = T.l1_distance(out, sharp)
    terms = efcr_total(l1, [(pos, neg, T.tensor(0.0))], beta=0.05)
    print(f"blur fraction {mix:.1f}: pos={float(pos.data):.5f}"
          f" neg={float(neg.data):.5f} total={float(terms.total.data):.5f}")
