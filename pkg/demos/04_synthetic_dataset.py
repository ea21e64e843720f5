"""Generate a small defocus dataset and poke at the image containers."""

import os
import tempfile

import numpy as np

from mptdeblur import Rng, gaussian_reblur, list_pairs, load_image, psnr, save_image, ssim, synth_pair

rng = Rng(42)

# one pair: procedural sharp scene plus spatially varying defocus
sharp, blur = synth_pair(rng, size=96)
print("sharp", sharp.shape, sharp.dtype, " range", sharp.min(), "-", sharp.max())
print("pair psnr %.2f dB  ssim %.4f" % (psnr(sharp, blur), ssim(sharp, blur)))

# same seed, same bytes
s2, b2 = synth_pair(Rng(42), size=96)
print("deterministic:", np.array_equal(sharp, s2) and np.array_equal(blur, b2))

# scenes differ in texture statistics
for scene in ("cells", "stripes", "checker"):
    s, b = synth_pair(Rng(7), size=96, scene=scene)
    print(f"{scene:8s} sharp std {s.std():.4f}  blur psnr {psnr(s, b):.2f} dB")

root = tempfile.mkdtemp()
from mptdeblur import write_dataset

n = write_dataset(root, Rng(0), count=4, size=64, scene="cells")
print("wrote", n, "pairs;", sorted(os.listdir(root)))

pairs, warnings = list_pairs(root)
print(len(pairs), "pairs listed,", len(warnings), "warnings")
sharp_path, blur_path, _mask = pairs[0]

img = load_image(blur_path)
print("loaded", img.shape, img.dtype)
tmp = os.path.join(root, "copy.ppm")
save_image(tmp, img)
print("ppm roundtrip exact:", np.array_equal(load_image(tmp), img))

# reblur is the degradation used on the network output during training;
# the kernel index comes back so the same blur hits input and output
re, k = gaussian_reblur(img, Rng(5))
print("reblur kernel index", k, " psnr vs original %.2f dB" % psnr(img, re))
