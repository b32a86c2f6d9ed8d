"""
Backward warping and the fetch-stream merge
===========================================

Each output pixel pulls a colour from a source image at an offset given by a
displacement field. Offsets come out of a tanh head, so they are scaled by a
margin M that caps how far a pixel may fetch.
"""

import sys
from pathlib import Path

import numpy as np
import torch

from talkingface import facegeom as fg
from talkingface import synthetic as syn
from talkingface.data import write_png
from talkingface.warpkit import bilinear_warp, merge_final, merge_warped, scale_field

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/02")
out.mkdir(parents=True, exist_ok=True)

ident = syn.Identity.random(np.random.default_rng(1))
face, _ = syn.render_face(ident, syn.Pose(mouth=0.4), 64)
img = torch.from_numpy(fg.image_to_float(face).transpose(2, 0, 1)[None].copy())

# %% a constant field of +5 px in x samples five pixels to the right: the face moves left
shift = torch.zeros(1, 2, 64, 64)
shift[:, 0] = 5.0
left = bilinear_warp(img, shift)

# %% a swirl around the centre; raw values live in [-1, 1], scaled by M
yy, xx = torch.meshgrid(torch.linspace(-1, 1, 64), torch.linspace(-1, 1, 64), indexing="ij")
raw = torch.stack([-yy, xx])[None] * torch.exp(-3 * (xx ** 2 + yy ** 2)) * 0.9
for m in (0, 5, 10):
    swirl = bilinear_warp(img, scale_field(raw, m))
    write_png(out / f"swirl_M{m:02d}.png", fg.image_to_uint8(swirl[0].permute(1, 2, 0).numpy()))
print("max displacement at M=10: %.2f px" % scale_field(raw, 10).abs().max())

# %% merging two sources with per-pixel selection masks that sum to one
bank = torch.stack([img[0], left[0]])[None]
masks = torch.zeros(1, 2, 1, 64, 64)
masks[:, 0, :, :, :32] = 1
masks[:, 1, :, :, 32:] = 1
merged = merge_warped(bank, masks, torch.zeros(1, 2, 2, 64, 64))
blend = merge_final(-torch.ones_like(img), merged, torch.full((1, 1, 64, 64), 0.75))
row = [fg.image_to_uint8(t[0].permute(1, 2, 0).numpy()) for t in (img, left, merged, blend)]
write_png(out / "merge.png", np.concatenate(row, axis=1))
print("wrote", out)
