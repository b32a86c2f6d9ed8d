"""
Generator and discriminator
===========================

One shared encoder-decoder feeds four single-convolution heads: an
appearance image, per-source selection masks, per-source displacement fields
and a merge mask. The discriminator scores overlapping patches.
"""

import torch

from talkingface.netarch import PROFILES, build_models, count_parameters

for name in PROFILES:
    gen, disc = build_models(5, name, seed=0)
    print(f"{name:>5}: generator {count_parameters(gen):,} params, discriminator {count_parameters(disc):,}")

gen, disc = build_models(5, "desk", seed=0)
gen.eval()
x = torch.randn(1, 25, 64, 64)
with torch.no_grad():
    out = gen(x)
for k, v in out.items():
    print(f"  {k:<11} {tuple(v.shape)}  range [{v.min():.3f}, {v.max():.3f}]")
print("masks sum to one:", torch.allclose(out["masks"].sum(1), torch.ones(1, 1, 64, 64), atol=1e-5))

# %% fully convolutional: any size divisible by 4 (16 for the discriminator)
for size in (32, 96, 128):
    with torch.no_grad():
        y = gen(torch.randn(1, 25, size, size))["output"]
    print(f"  {size}px in -> {tuple(y.shape[-2:])} out, patch scores {tuple(disc(y).shape[-2:])}")

# %% single-stream modes bypass the merge
with torch.no_grad():
    a, w = gen(x, mode="A"), gen(x, mode="W")
print("A output == appearance:", torch.equal(a["output"], out["appearance"]))
print("W output == warped:", torch.equal(w["output"], out["warped"]))
