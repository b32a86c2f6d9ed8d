"""Objective terms for the generator and the hinge discriminator.

Pixel-level terms are sums over pixels and channels, averaged over the batch.
Patch scores and perceptual features are averaged.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class LossWeights:
    lambda_S: float = 1.0
    lambda_TV: float = 1e-5
    lambda_rec: float = 250.0
    lambda_p: float = 1.0
    lambda_adv: float = 1.0
    tv_wm_scale: float = 0.1
    gamma: float = 0.95
    floor: float = 0.3
    margin: float = 40.0
    n_sources: int = 5

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be non-negative, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)


GENERATOR_TERMS = ("sparsity_v", "tv_v", "tv_ww", "tv_wm", "rec_w", "rec_o", "perceptual", "adv_g")


def _per_sample_sum(x: torch.Tensor) -> torch.Tensor:
    return x.reshape(x.shape[0], -1).sum(dim=1).mean()


def sparsity_loss(merge_mask: torch.Tensor) -> torch.Tensor:
    """L1 norm of the merge mask."""
    return _per_sample_sum(merge_mask.abs())


def tv_loss(maps: torch.Tensor) -> torch.Tensor:
    """Squared forward differences along rows and columns, summed.

    Accepts ``(B, C, H, W)`` or bank-shaped ``(B, N, C, H, W)`` maps.
    """
    if maps.dim() == 5:
        maps = maps.flatten(1, 2)
    h, w = maps.shape[-2:]
    if h < 2 or w < 2:
        raise ValueError(f"total variation needs at least 2x2 maps, got {h}x{w}")
    dh = maps[..., :, 1:] - maps[..., :, :-1]
    dv = maps[..., 1:, :] - maps[..., :-1, :]
    return _per_sample_sum(dh.pow(2)) + _per_sample_sum(dv.pow(2))


def weighted_l1(pred: torch.Tensor, target: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """``sum_c || K * (pred_c - target_c) ||_1``; ``weights`` broadcasts over channels."""
    if pred.shape != target.shape:
        raise ValueError(f"prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    if weights.dim() == 2:
        weights = weights[None, None]
    elif weights.dim() == 3:
        weights = weights.unsqueeze(1)
    return _per_sample_sum(weights * (pred - target).abs())


def perceptual_loss(pred: torch.Tensor, target: torch.Tensor, extractor) -> torch.Tensor:
    """Squared feature distance summed over the extractor's layers (each layer mean-normalized)."""
    with torch.no_grad():
        target_feats = [f.detach() for f in extractor(target)]
    pred_feats = extractor(pred)
    loss = pred.new_zeros(())
    for fp, ft in zip(pred_feats, target_feats):
        loss = loss + F.mse_loss(fp, ft, reduction="mean")
    return loss


def hinge_d_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    return F.relu(1.0 - real_scores).mean() + F.relu(1.0 + fake_scores).mean()


def hinge_g_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    return -fake_scores.mean()


def total_generator_loss(terms: dict, weights: LossWeights = LossWeights()) -> torch.Tensor:
    """Weighted sum of the generator terms.

    ``terms`` may give the reconstruction loss either as ``rec`` or as the
    ``rec_w`` / ``rec_o`` pair. Unknown keys are rejected so no stray term
    (for instance a sparsity penalty on the selection masks) can be wired in.
    """
    allowed = set(GENERATOR_TERMS) | {"rec"}
    unknown = set(terms) - allowed
    if unknown:
        raise KeyError(f"unknown generator loss terms: {sorted(unknown)}")
    zero = 0.0
    get = lambda k: terms.get(k, zero)  # noqa: E731
    rec = terms["rec"] if "rec" in terms else get("rec_w") + get("rec_o")
    return (
        weights.lambda_S * get("sparsity_v")
        + weights.lambda_TV * (get("tv_v") + get("tv_ww") + weights.tv_wm_scale * get("tv_wm"))
        + weights.lambda_rec * rec
        + weights.lambda_p * get("perceptual")
        + weights.lambda_adv * get("adv_g")
    )


def generator_terms(out: dict, target: torch.Tensor, heatmap: torch.Tensor, extractor=None,
                    disc: nn.Module | None = None, mode: str = "AW") -> dict:
    """All generator terms for one forward pass of :class:`~talkingface.netarch.Generator`.

    Terms belonging to a bypassed stream are zero: ``"A"`` drops the fetch
    stream terms, ``"W"`` drops the merge-mask terms.
    """
    zero = target.new_zeros(())
    use_fetch = mode in ("AW", "W")
    use_merge = mode == "AW"
    terms = {
        "sparsity_v": sparsity_loss(out["merge_mask"]) if use_merge else zero,
        "tv_v": tv_loss(out["merge_mask"]) if use_merge else zero,
        "tv_ww": tv_loss(out["raw_fields"]) if use_fetch else zero,
        "tv_wm": tv_loss(out["masks"]) if use_fetch else zero,
        "rec_w": weighted_l1(out["warped"], target, heatmap) if use_fetch else zero,
        "rec_o": weighted_l1(out["output"], target, heatmap),
        "perceptual": perceptual_loss(out["output"], target, extractor) if extractor is not None else zero,
        "adv_g": hinge_g_loss(disc(out["output"])) if disc is not None else zero,
    }
    return terms


class StubExtractor(nn.Module):
    """Frozen random 4-stage strided conv stack, a stand-in for a pretrained VGG."""

    def __init__(self, channels=(8, 16, 32, 64), seed: int = 1234, in_channels: int = 3):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        stages = []
        cin = in_channels
        for cout in channels:
            conv = nn.Conv2d(cin, cout, 3, 2, 1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * (2.0 / (cin * 9)) ** 0.5)
                conv.bias.zero_()
            stages.append(nn.Sequential(conv, nn.ReLU()))
            cin = cout
        self.stages = nn.ModuleList(stages)
        self.requires_grad_(False)
        self.eval()

    @property
    def ident(self) -> str:
        return "stub"

    def forward(self, x):
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats

    def embed(self, x) -> torch.Tensor:
        """Global-average-pooled, concatenated features ``(B, sum(channels))`` for FID."""
        return torch.cat([f.mean(dim=(2, 3)) for f in self(x)], dim=1)


class VGG16Extractor(nn.Module):
    """relu1_2 / relu2_2 / relu3_3 / relu4_3 features of a VGG16.

    ``weights`` is either a torchvision weights enum or a path to a saved
    ``vgg16().features`` state dict. Inputs are images in ``[-1, 1]``.
    """

    CUTS = (4, 9, 16, 23)

    def __init__(self, weights=None):
        super().__init__()
        from torchvision.models import vgg16

        if isinstance(weights, (str, bytes)) or hasattr(weights, "__fspath__"):
            features = vgg16().features
            features.load_state_dict(torch.load(weights, map_location="cpu"))
        else:
            features = vgg16(weights=weights).features
        self.slices = nn.ModuleList()
        prev = 0
        for cut in self.CUTS:
            self.slices.append(features[prev:cut])
            prev = cut
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))
        self.requires_grad_(False)
        self.eval()

    @property
    def ident(self) -> str:
        return "vgg16"

    def forward(self, x):
        x = ((x + 1) / 2 - self.mean) / self.std
        feats = []
        for s in self.slices:
            x = s(x)
            feats.append(x)
        return feats

    def embed(self, x) -> torch.Tensor:
        return torch.cat([f.mean(dim=(2, 3)) for f in self(x)], dim=1)
