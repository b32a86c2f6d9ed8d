"""
Building a source bank from a talking clip
==========================================

A synthetic subject talks for a few seconds. We crop every frame around the
nose tip, rank the frames by how far the lips are apart and keep five of them
spread evenly over that ranking. Then we encode one target expression as the
network sees it: bank images plus sparse landmark-difference fields.
"""

import sys
from pathlib import Path

import numpy as np

from talkingface import facegeom as fg
from talkingface import synthetic as syn
from talkingface.data import write_png

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/01")
out.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(0)

# %% a raw clip, larger than the crop we want
ident = syn.Identity.random(rng)
frames, landmarks, poses = syn.talking_clip(ident, 30, 96, rng)
print("clip:", len(frames), "frames of", frames[0].shape)

# %% crop with one shared window side so the face keeps its scale across frames
sides = [fg.crop_transform(p, "nose-tip", 64)[1][2] for p in landmarks]
side = float(np.median(sides))
cropped = [fg.crop_center(f, p, "nose-tip", 64, side=side) for f, p in zip(frames, landmarks)]
crops, crop_lms = zip(*cropped)

# %% mouth openness is the distance between the middle outer-lip landmarks
openness = np.array([fg.mouth_openness(p) for p in crop_lms])
print("openness range: %.2f .. %.2f px" % (openness.min(), openness.max()))

chosen = fg.select_bank_indices(crop_lms, 5)
bank = fg.select_bank(crops, crop_lms, 5)
print("bank frames:", chosen, "openness:", np.round(bank.openness, 2))
write_png(out / "bank.png", np.concatenate([fg.image_to_uint8(im) for im in bank.images], axis=1))

# %% the network input for one target landmark set
target = crop_lms[5]  # not one of the bank frames
fields = fg.bank_difference_fields(bank, target)
x = fg.assemble_input(bank, fields)
print("input tensor:", x.shape, "(3N image channels + 2N field channels)")
print("non-zero field pixels per source:", [int(np.any(f != 0, axis=-1).sum()) for f in fields])

# %% landmark-proximity weights used by the reconstruction loss
k = fg.heatmap_weights(target, 64, 64)
print("heatmap weights: min %.2f, max %.2f" % (k.min(), k.max()))
write_png(out / "heatmap.png", np.repeat((k[..., None] * 255).astype(np.uint8), 3, axis=-1))
print("wrote", out)
