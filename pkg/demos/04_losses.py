"""
The training objective
======================

Every generator term evaluated on one untrained forward pass, then combined
with the default weights. The reconstruction terms dominate at the start.
"""

import numpy as np
import torch

from talkingface.data import overfit_fixture
from talkingface.losses import LossWeights, StubExtractor, generator_terms, hinge_d_loss, total_generator_loss
from talkingface.netarch import build_models

sample = overfit_fixture()
batch = sample.sample(np.random.default_rng(0), 1)
gen, disc = build_models(5, "desk", seed=0)
out = gen(batch.inputs)
terms = generator_terms(out, batch.targets, batch.heatmaps, StubExtractor(), disc)
w = LossWeights()
for k, v in terms.items():
    print(f"  {k:<11} {float(v.detach()):12.4f}")
print("weighted total: %.2f" % float(total_generator_loss(terms, w)))

# %% the discriminator side uses a hinge on patch scores
real, fake = disc(batch.targets), disc(out["output"].detach())
print("hinge D loss on an untrained pair: %.4f" % hinge_d_loss(real, fake).item())

# %% with every term equal to one the weights add up to a fixed constant
ones = {k: 1.0 for k in ("sparsity_v", "tv_v", "tv_ww", "tv_wm", "rec", "perceptual", "adv_g")}
print("all-ones total:", float(total_generator_loss(ones, w)))

try:
    total_generator_loss({"sparsity_wm": torch.tensor(1.0)})
except KeyError as exc:
    print("rejected:", exc)
