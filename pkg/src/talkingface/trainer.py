"""Adversarial training loop with a 5:1 discriminator/generator schedule."""

from __future__ import annotations

import base64
import csv
import dataclasses
import logging
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .losses import (GENERATOR_TERMS, LossWeights, StubExtractor, generator_terms, hinge_d_loss,
                     total_generator_loss)
from .netarch import Discriminator, Generator, get_profile
from .synth import ablation_variant

log = logging.getLogger(__name__)

LOG_COLUMNS = ["step", "kind", "d_loss", *GENERATOR_TERMS, "total"]


class FakeHistoryBuffer:
    """Pool of past generated images mixed into discriminator batches.

    On each query every slot of the fake minibatch is, with probability 0.5,
    swapped for a uniformly drawn stored image; then all fresh fakes are
    inserted, evicting a uniformly random slot once the pool is full.
    """

    def __init__(self, capacity: int = 50, seed: int = 0):
        if capacity < 1:
            raise ValueError("buffer capacity must be positive")
        self.capacity = capacity
        self.items: list[torch.Tensor] = []
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self.items)

    def insert(self, image: torch.Tensor) -> None:
        image = image.detach().clone()
        if len(self.items) < self.capacity:
            self.items.append(image)
        else:
            self.items[int(self.rng.integers(self.capacity))] = image

    def sample(self) -> torch.Tensor:
        if not self.items:
            raise IndexError("sampling from an empty history buffer")
        return self.items[int(self.rng.integers(len(self.items)))]

    def query(self, fakes: torch.Tensor) -> torch.Tensor:
        fakes = fakes.detach()
        out = fakes.clone()
        if self.items:
            for i in range(out.shape[0]):
                if self.rng.random() < 0.5:
                    out[i] = self.sample()
        for img in fakes:
            self.insert(img)
        return out


@dataclass
class TrainConfig:
    lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    d_steps_per_g: int = 5
    batch: int = 16
    clips_per_batch: int = 4
    seed: int = 0
    steps: int = 100  # generator updates
    profile: str = "desk"
    n_sources: int = 5
    variant: str = "AW"
    margin: float = 40.0
    buffer_capacity: int = 50
    checkpoint_every: int = 0  # generator updates between checkpoints; 0 = only at the end
    lambda_S: float = 1.0
    lambda_TV: float = 1e-5
    lambda_rec: float = 250.0
    lambda_p: float = 1.0
    lambda_adv: float = 1.0
    gamma: float = 0.95
    floor: float = 0.3
    # synthetic corpus, used when no data directory is given
    demo_subjects: int = 4
    demo_clips: int = 4
    demo_frames: int = 12

    def __post_init__(self):
        for name in ("lr", "batch", "clips_per_batch", "d_steps_per_g", "n_sources", "buffer_capacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"config value {name} must be positive")
        if not 0 <= self.adam_beta1 < 1 or not 0 <= self.adam_beta2 < 1:
            raise ValueError("Adam betas must lie in [0, 1)")
        get_profile(self.profile)
        ablation_variant(self.variant, self.n_sources)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_S, self.lambda_TV, self.lambda_rec, self.lambda_p, self.lambda_adv,
                           gamma=self.gamma, floor=self.floor, margin=self.margin, n_sources=self.n_sources)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise KeyError(f"unknown config key {key!r}")
            ftype = known[key].type
            kind = {"int": int, "float": float, "str": str}.get(ftype if isinstance(ftype, str) else ftype.__name__)
            try:
                kwargs[key] = kind(raw) if kind is not int else int(str(raw), 10)
            except ValueError:
                raise ValueError(f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}") from None
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """Read ``key = value`` lines; ``#`` starts a comment."""
        values = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        return cls.from_dict(values)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _set_rng_state(rng: np.random.Generator, state: dict) -> None:
    rng.bit_generator.state = state


class Trainer:
    """Owns the generator, discriminator, their optimizers and all RNG state.

    ``step()`` advances one optimizer update following the schedule: updates
    ``1..d`` of every ``d + 1`` train the discriminator, the last one the
    generator.
    """

    def __init__(self, config: TrainConfig, corpus, extractor=None, log_path=None):
        self.config = config
        self.corpus = corpus
        self.n_sources, self.mode = ablation_variant(config.variant, config.n_sources)
        self.weights = config.loss_weights
        torch.manual_seed(config.seed)
        self.gen = Generator(self.n_sources, config.profile)
        self.disc = Discriminator(config.profile)
        betas = (config.adam_beta1, config.adam_beta2)
        self.opt_g = torch.optim.Adam(self.gen.parameters(), lr=config.lr, betas=betas)
        self.opt_d = torch.optim.Adam(self.disc.parameters(), lr=config.lr, betas=betas)
        self.buffer = FakeHistoryBuffer(config.buffer_capacity, seed=config.seed + 1)
        self.data_rng = np.random.default_rng(config.seed)
        self.extractor = extractor if extractor is not None else StubExtractor()
        self.iteration = 0
        self.history: list[dict] = []
        self.log_path = Path(log_path) if log_path else None

    # -- schedule ---------------------------------------------------------
    def next_kind(self) -> str:
        d = self.config.d_steps_per_g
        return "D" if self.iteration % (d + 1) < d else "G"

    @property
    def g_updates(self) -> int:
        return self.iteration // (self.config.d_steps_per_g + 1)

    def next_batch(self):
        c = self.config
        return self.corpus.sample(self.data_rng, c.batch, c.clips_per_batch, self.n_sources, c.gamma, c.floor)

    def d_step(self, batch=None) -> float:
        batch = batch if batch is not None else self.next_batch()
        self.gen.eval()
        with torch.no_grad():
            fakes = self.gen(batch.inputs, self.config.margin, self.mode)["output"]
        fakes = self.buffer.query(fakes)
        self.disc.train()
        self.opt_d.zero_grad(set_to_none=True)
        loss = hinge_d_loss(self.disc(batch.targets), self.disc(fakes))
        loss.backward()
        self.opt_d.step()
        return float(loss.detach())

    def g_step(self, batch=None) -> dict:
        batch = batch if batch is not None else self.next_batch()
        self.gen.train()
        self.disc.eval()
        self.opt_g.zero_grad(set_to_none=True)
        out = self.gen(batch.inputs, self.config.margin, self.mode)
        terms = generator_terms(out, batch.targets, batch.heatmaps, self.extractor, self.disc, self.mode)
        for name, value in terms.items():
            if not torch.isfinite(value).all():
                raise FloatingPointError(f"non-finite generator loss term {name!r}: {float(value.detach())}")
        total = total_generator_loss(terms, self.weights)
        if not torch.isfinite(total):
            raise FloatingPointError(f"non-finite total generator loss: {float(total.detach())}")
        total.backward()
        self.opt_g.step()
        # the adversarial term back-propagates into D; those grads must never be applied
        self.disc.zero_grad(set_to_none=True)
        record = {k: float(v.detach()) for k, v in terms.items()}
        record["total"] = float(total.detach())
        return record

    def step(self) -> dict:
        kind = self.next_kind()
        if kind == "D":
            record = {"d_loss": self.d_step()}
        else:
            record = self.g_step()
        self.iteration += 1
        record = {"step": self.iteration, "kind": kind, **record}
        self.history.append(record)
        if self.log_path is not None:
            self._append_log(record)
        return record

    def train(self, g_steps: int | None = None, checkpoint_dir=None, progress_every: int = 0) -> list:
        """Run until ``g_steps`` generator updates have been made in total."""
        g_steps = self.config.steps if g_steps is None else g_steps
        every = self.config.checkpoint_every
        records = []
        while self.g_updates < g_steps:
            rec = self.step()
            records.append(rec)
            if rec["kind"] == "G":
                if progress_every and self.g_updates % progress_every == 0:
                    log.info("G step %d: total %.4g rec_o %.4g", self.g_updates, rec["total"], rec["rec_o"])
                if checkpoint_dir and every and self.g_updates % every == 0:
                    self.save(Path(checkpoint_dir) / f"ckpt_{self.g_updates:06d}.ckpt")
        if checkpoint_dir:
            self.save(Path(checkpoint_dir) / "last.ckpt")
        return records

    def _append_log(self, record: dict) -> None:
        new = not self.log_path.exists()
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS, restval="")
            if new:
                w.writeheader()
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in record.items()})

    # -- persistence --------------------------------------------------------
    def state_tensors(self) -> dict:
        tensors = {}
        for prefix, module in (("generator", self.gen), ("discriminator", self.disc)):
            for k, v in module.state_dict().items():
                tensors[f"{prefix}/{k}"] = v
        for prefix, opt in (("opt_g", self.opt_g), ("opt_d", self.opt_d)):
            for pid, st in opt.state_dict()["state"].items():
                for k, v in st.items():
                    tensors[f"{prefix}/{pid}/{k}"] = v.to(torch.float32) if k == "step" else v
        for i, img in enumerate(self.buffer.items):
            tensors[f"buffer/{i:04d}"] = img
        return tensors

    def save(self, path) -> None:
        meta = {
            "profile": self.gen.profile.to_dict(),
            "n_sources": self.n_sources,
            "mode": self.mode,
            "variant": self.config.variant,
            "config": self.config.to_dict(),
            "iteration": self.iteration,
            "buffer_size": len(self.buffer),
            "rng": {
                "torch": base64.b64encode(torch.get_rng_state().numpy().tobytes()).decode("ascii"),
                "data": _rng_state(self.data_rng),
                "buffer": _rng_state(self.buffer.rng),
            },
        }
        ckpt.save_checkpoint(path, self.state_tensors(), meta)

    def load(self, path) -> None:
        tensors, manifest = ckpt.load_checkpoint(path)
        if manifest["profile"]["name"] != self.gen.profile.name or manifest["n_sources"] != self.n_sources:
            raise ckpt.CheckpointError(
                f"checkpoint is profile {manifest['profile']['name']!r} with N={manifest['n_sources']}, "
                f"trainer is {self.gen.profile.name!r} with N={self.n_sources}")
        ckpt.load_module_state(self.gen, ckpt.split_prefix(tensors, "generator"), "generator")
        ckpt.load_module_state(self.disc, ckpt.split_prefix(tensors, "discriminator"), "discriminator")
        for prefix, opt in (("opt_g", self.opt_g), ("opt_d", self.opt_d)):
            sd = opt.state_dict()
            flat = ckpt.split_prefix(tensors, prefix)
            state = {}
            for key, v in flat.items():
                pid, name = key.split("/", 1)
                state.setdefault(int(pid), {})[name] = v.clone()
            sd["state"] = state
            opt.load_state_dict(sd)
        self.buffer.items = [tensors[f"buffer/{i:04d}"].clone() for i in range(manifest["buffer_size"])]
        rng = manifest["rng"]
        torch.set_rng_state(torch.from_numpy(np.frombuffer(base64.b64decode(rng["torch"]), dtype=np.uint8).copy()))
        _set_rng_state(self.data_rng, rng["data"])
        _set_rng_state(self.buffer.rng, rng["buffer"])
        self.iteration = int(manifest["iteration"])


def load_generator(path) -> tuple[Generator, dict]:
    """Rebuild a generator from a checkpoint, returning it with the manifest."""
    tensors, manifest = ckpt.load_checkpoint(path)
    profile = manifest["profile"]
    gen = Generator(manifest["n_sources"], get_profile(profile["name"]))
    ckpt.load_module_state(gen, ckpt.split_prefix(tensors, "generator"), "generator")
    gen.eval()
    return gen, manifest

