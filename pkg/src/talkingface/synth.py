"""Frame-by-frame synthesis from a target landmark sequence, plus ablation variants."""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch

from . import facegeom as fg

VARIANTS = ("1B", "3B", "5B", "A", "W", "AW")


class Variant(NamedTuple):
    n_sources: int
    mode: str  # "AW" full model, "A" appearance stream only, "W" fetch stream only


def ablation_variant(variant: str, n_sources: int = 5) -> Variant:
    """Bank size and stream mode for an ablation variant.

    ``1B``/``3B``/``5B`` keep the first 1, 3 or 5 bank images (most closed
    mouths first) with both streams; ``A`` and ``W`` keep the full bank but
    output only one stream; ``AW`` is the full model.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}; choose from {', '.join(VARIANTS)}")
    if variant.endswith("B"):
        k = int(variant[:-1])
        if k > n_sources:
            raise ValueError(f"variant {variant} needs a bank of at least {k} images, have {n_sources}")
        return Variant(k, "AW")
    return Variant(n_sources, variant)


def _numpy(t: torch.Tensor) -> np.ndarray:
    """Drop the batch axis and move channels last."""
    t = t.detach().cpu()[0]
    if t.dim() == 3:
        return t.permute(1, 2, 0).numpy()
    return t.permute(0, 2, 3, 1).numpy()  # (N, C, H, W) -> (N, H, W, C)


def synthesize_frame(bank: fg.SourceBank, target_landmarks, gen, margin: float = 40.0, mode: str = "AW",
                     merge_override: float | None = None) -> dict:
    """One deterministic forward pass for one target landmark set.

    Returns ``output`` plus the diagnostics ``appearance``, ``warped``,
    ``merge_mask``, ``masks``, ``raw_fields`` and ``fields`` as channel-last
    numpy arrays (bank-shaped ones carry a leading ``N`` axis).
    """
    if bank.size != gen.n_sources:
        raise ValueError(f"bank has {bank.size} images but the generator expects {gen.n_sources}")
    target_landmarks = fg.as_landmarks(target_landmarks)
    x = torch.from_numpy(fg.encode_target(bank, target_landmarks).transpose(2, 0, 1)[None].copy())
    was_training = gen.training
    gen.eval()
    try:
        with torch.no_grad():
            out = gen(x, margin, mode, merge_override)
    finally:
        gen.train(was_training)
    return {k: _numpy(v) for k, v in out.items()}


def synthesize_sequence(bank: fg.SourceBank, landmark_sequence, gen, margin: float = 40.0,
                        mode: str = "AW") -> list:
    """Independent per-frame synthesis in sequence order; no temporal smoothing."""
    seq = list(landmark_sequence)
    if not seq:
        raise ValueError("landmark sequence is empty")
    return [synthesize_frame(bank, t, gen, margin, mode) for t in seq]


class Pipeline:
    """A generator bound to an ablation variant and a warp margin."""

    def __init__(self, gen, variant: str = "AW", margin: float = 40.0):
        spec = ablation_variant(variant, max(gen.n_sources, 5))
        n = spec.n_sources if variant.endswith("B") else gen.n_sources
        if n != gen.n_sources:
            raise ValueError(f"variant {variant} uses {n} bank images but the generator "
                             f"was built for {gen.n_sources}")
        self.variant = Variant(n, spec.mode)
        self.gen = gen
        self.margin = margin

    def prepare(self, bank: fg.SourceBank) -> fg.SourceBank:
        return bank.truncate(self.variant.n_sources) if bank.size > self.variant.n_sources else bank

    def frame(self, bank, target_landmarks) -> dict:
        return synthesize_frame(self.prepare(bank), target_landmarks, self.gen, self.margin, self.variant.mode)

    def sequence(self, bank, landmark_sequence) -> list:
        return synthesize_sequence(self.prepare(bank), landmark_sequence, self.gen, self.margin, self.variant.mode)


def _gray(m: np.ndarray) -> np.ndarray:
    return np.repeat(np.clip(np.rint(m[..., :1] * 255), 0, 255).astype(np.uint8), 3, axis=-1)


def write_frames(out_dir, results: list, diagnostics: bool = True) -> list:
    """Write ``frame_00000.png, ...`` plus optional side-car images under ``diagnostics/``."""
    from .data import write_png

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, res in enumerate(results):
        p = out / f"frame_{i:05d}.png"
        write_png(p, fg.image_to_uint8(res["output"]))
        paths.append(p)
        if diagnostics:
            diag = out / "diagnostics"
            diag.mkdir(exist_ok=True)
            write_png(diag / f"frame_{i:05d}_appearance.png", fg.image_to_uint8(res["appearance"]))
            write_png(diag / f"frame_{i:05d}_warped.png", fg.image_to_uint8(res["warped"]))
            write_png(diag / f"frame_{i:05d}_merge.png", _gray(res["merge_mask"]))
            write_png(diag / f"frame_{i:05d}_masks.png", np.concatenate([_gray(m) for m in res["masks"]], axis=1))
    return paths
