"""
Adversarial training on one sample
==================================

Five discriminator updates, then one generator update. With a single fixed
sample the reconstruction loss must fall quickly; this is the cheapest sanity
check that the whole objective is wired correctly. Pass a number of generator
steps as the first argument (default 60).
"""

import sys
import time

import torch

from talkingface.data import overfit_fixture
from talkingface.losses import weighted_l1
from talkingface.trainer import TrainConfig, Trainer

g_steps = int(sys.argv[1]) if len(sys.argv) > 1 else 60
torch.set_num_threads(1)
sample = overfit_fixture()
tr = Trainer(TrainConfig(batch=1, clips_per_batch=1, steps=g_steps, seed=0), sample)


def rec_o():
    batch = sample.sample(None, 1)
    tr.gen.eval()
    with torch.no_grad():
        out = tr.gen(batch.inputs)
    return weighted_l1(out["output"], batch.targets, batch.heatmaps).item()


start = rec_o()
t0 = time.perf_counter()
while tr.g_updates < g_steps:
    rec = tr.step()
    if rec["kind"] == "G" and tr.g_updates % 10 == 0:
        print(f"G {tr.g_updates:4d}  rec_o {rec['rec_o']:9.1f}  adv {rec['adv_g']:+.3f}  "
              f"last D loss {tr.history[-2]['d_loss']:.3f}")
print(f"rec_o {start:.1f} -> {rec_o():.1f} in {time.perf_counter() - t0:.0f} s")
print("schedule:", "".join(r["kind"] for r in tr.history[:12]), "...")
