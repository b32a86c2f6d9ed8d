"""Generator (shared encoder-decoder plus four single-conv heads) and patch discriminator."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
from torch.nn.utils.parametrizations import spectral_norm

from .warpkit import DEFAULT_MARGIN, merge_final, merge_warped, scale_field

STREAM_MODES = ("AW", "A", "W")


@dataclass(frozen=True)
class ArchProfile:
    name: str
    gen_width: int  # channels after the first conv; I_f has this many channels
    disc_width: int
    n_res: int = 6
    image_size: int = 224

    def to_dict(self) -> dict:
        return asdict(self)


PROFILES = {
    "full": ArchProfile("full", gen_width=64, disc_width=64, n_res=6, image_size=224),
    "desk": ArchProfile("desk", gen_width=16, disc_width=16, n_res=6, image_size=64),
}


def get_profile(profile) -> ArchProfile:
    if isinstance(profile, ArchProfile):
        return profile
    try:
        return PROFILES[profile]
    except KeyError:
        raise ValueError(f"unknown architecture profile {profile!r}; choose from {sorted(PROFILES)}") from None


def gaussian_conv(cin, cout, k, stride=1, padding=0, std=0.02):
    conv = nn.Conv2d(cin, cout, k, stride, padding)
    nn.init.normal_(conv.weight, 0.0, std)
    nn.init.zeros_(conv.bias)
    return conv


def sn_conv(cin, cout, k, stride=1, padding=0):
    # wrap after init so the power-iteration vectors match the initial weight
    return spectral_norm(gaussian_conv(cin, cout, k, stride, padding))


class ConvBlock(nn.Sequential):
    def __init__(self, cin, cout, k, stride=1, padding=0, upsample=False):
        layers = [nn.Upsample(scale_factor=2, mode="nearest")] if upsample else []
        layers += [sn_conv(cin, cout, k, stride, padding), nn.InstanceNorm2d(cout, affine=True), nn.ReLU(inplace=True)]
        super().__init__(*layers)


class ResidualBlock(nn.Module):
    def __init__(self, dim):
        super().__init__()
        self.body = nn.Sequential(
            sn_conv(dim, dim, 3, 1, 1), nn.InstanceNorm2d(dim, affine=True), nn.ReLU(inplace=True),
            sn_conv(dim, dim, 3, 1, 1), nn.InstanceNorm2d(dim, affine=True),
        )

    def forward(self, x):
        return x + self.body(x)


class MasterNet(nn.Module):
    """Shared encoder-decoder: input ``(B, 5N, H, W)`` -> features ``(B, width, H, W)``."""

    def __init__(self, in_channels: int, width: int = 64, n_res: int = 6):
        super().__init__()
        layers = [
            ConvBlock(in_channels, width, 7, 1, 3),
            ConvBlock(width, 2 * width, 4, 2, 1),
            ConvBlock(2 * width, 4 * width, 4, 2, 1),
        ]
        layers += [ResidualBlock(4 * width) for _ in range(n_res)]
        layers += [
            ConvBlock(4 * width, 2 * width, 3, 1, 1, upsample=True),
            ConvBlock(2 * width, width, 3, 1, 1, upsample=True),
        ]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % 4 or w % 4:
            raise ValueError(f"input spatial size {h}x{w} must be divisible by 4")
        return self.net(x)


def masks_from_logits(logits: torch.Tensor) -> torch.Tensor:
    """``(B, N, H, W)`` logits -> ``(B, N, 1, H, W)`` selection masks (softmax over the bank)."""
    return torch.softmax(logits, dim=1).unsqueeze(2)


def fields_from_logits(logits: torch.Tensor) -> torch.Tensor:
    """``(B, 2N, H, W)`` -> raw fields ``(B, N, 2, H, W)`` in ``(-1, 1)``; channels pair up per source."""
    b, c, h, w = logits.shape
    return torch.tanh(logits).reshape(b, c // 2, 2, h, w)


class Generator(nn.Module):
    """Two-stream generator for a bank of ``n_sources`` images.

    The bank images are read back from the first ``3N`` input channels, so the
    forward pass needs only the assembled input tensor.
    """

    def __init__(self, n_sources: int = 5, profile="full"):
        super().__init__()
        self.profile = get_profile(profile)
        self.n_sources = n_sources
        width = self.profile.gen_width
        self.master = MasterNet(5 * n_sources, width, self.profile.n_res)
        self.head_appearance = sn_conv(width, 3, 7, 1, 3)
        self.head_masks = sn_conv(width, n_sources, 7, 1, 3)
        self.head_fields = sn_conv(width, 2 * n_sources, 7, 1, 3)
        self.head_merge = sn_conv(width, 1, 7, 1, 3)

    def heads(self, feats: torch.Tensor) -> dict:
        return {
            "appearance": torch.tanh(self.head_appearance(feats)),
            "masks": masks_from_logits(self.head_masks(feats)),
            "raw_fields": fields_from_logits(self.head_fields(feats)),
            "merge_mask": torch.sigmoid(self.head_merge(feats)),
        }

    def forward(self, x: torch.Tensor, margin: float = DEFAULT_MARGIN, mode: str = "AW",
                merge_override: float | None = None) -> dict:
        """Run both streams and blend them.

        Returns a dict with ``output`` and the diagnostics ``appearance``,
        ``warped``, ``merge_mask``, ``masks``, ``raw_fields`` and ``fields``
        (pixel displacements). ``mode`` selects the full model (``"AW"``) or a
        single stream; ``merge_override`` pins V to a constant.
        """
        if mode not in STREAM_MODES:
            raise ValueError(f"unknown stream mode {mode!r}")
        n = self.n_sources
        if x.shape[1] != 5 * n:
            raise ValueError(f"generator expects {5 * n} input channels, got {x.shape[1]}")
        b, _, h, w = x.shape
        out = self.heads(self.master(x))
        if merge_override is not None:
            out["merge_mask"] = torch.full_like(out["merge_mask"], float(merge_override))
        images = x[:, : 3 * n].reshape(b, n, 3, h, w)
        out["fields"] = scale_field(out["raw_fields"], margin)
        out["warped"] = merge_warped(images, out["masks"], out["raw_fields"], margin)
        if mode == "A":
            out["output"] = out["appearance"]
        elif mode == "W":
            out["output"] = out["warped"]
        else:
            out["output"] = merge_final(out["appearance"], out["warped"], out["merge_mask"])
        return out


class Discriminator(nn.Module):
    """PatchGAN critic: four stride-2 convs then a 3x3 scoring conv, ``(B, 1, H/16, W/16)``."""

    def __init__(self, profile="full", in_channels: int = 3, slope: float = 0.01):
        super().__init__()
        self.profile = get_profile(profile)
        width = self.profile.disc_width
        layers = []
        cin = in_channels
        for i in range(4):
            cout = width * 2 ** i
            layers += [sn_conv(cin, cout, 4, 2, 1), nn.LeakyReLU(slope, inplace=True)]
            cin = cout
        self.features = nn.Sequential(*layers)
        self.score = gaussian_conv(cin, 1, 3, 1, 1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        h, w = image.shape[-2:]
        if h % 16 or w % 16:
            raise ValueError(f"discriminator input {h}x{w} must be divisible by 16")
        return self.score(self.features(image))


def build_models(n_sources: int = 5, profile="desk", seed: int | None = None):
    if seed is not None:
        torch.manual_seed(seed)
    return Generator(n_sources, profile), Discriminator(profile)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def to_batch(array, dtype=torch.float32) -> torch.Tensor:
    """``(H, W, C)`` or ``(B, H, W, C)`` numpy array -> channel-first tensor."""
    t = torch.as_tensor(array, dtype=dtype)
    if t.dim() == 3:
        t = t.unsqueeze(0)
    return t.permute(0, 3, 1, 2).contiguous()


def from_batch(t: torch.Tensor):
    """Inverse of :func:`to_batch` for a single item or a batch."""
    arr = t.detach().cpu().permute(0, 2, 3, 1).numpy()
    return arr

