"""Differentiable backward warping and the mask-weighted merges of the two streams.

All tensors are batched and channel-first: images ``(B, C, H, W)``,
displacements ``(B, 2, H, W)`` in pixels with channel 0 the x (column)
offset and channel 1 the y (row) offset. Bank-shaped inputs carry an extra
source axis: ``(B, N, C, H, W)``.
"""

from __future__ import annotations

import torch

DEFAULT_MARGIN = 40.0

_MASK_SUM_TOL = 1e-4


def scale_field(raw: torch.Tensor, margin: float = DEFAULT_MARGIN) -> torch.Tensor:
    """Map raw fields in ``[-1, 1]`` to pixel displacements in ``[-margin, margin]``."""
    if torch.any(raw.detach().abs() > 1.0):
        raise ValueError("raw warp field must lie in [-1, 1]")
    return raw * margin


def bilinear_warp(image: torch.Tensor, disp: torch.Tensor) -> torch.Tensor:
    """Sample ``image`` at ``p + disp(p)`` for every output pixel ``p``.

    Sample coordinates are clamped to the image border. Differentiable with
    respect to both ``image`` and ``disp``.
    """
    if image.dim() != 4 or disp.dim() != 4 or disp.shape[1] != 2:
        raise ValueError(f"expected image (B,C,H,W) and disp (B,2,H,W), got {tuple(image.shape)}, {tuple(disp.shape)}")
    b, c, h, w = image.shape
    if disp.shape[0] != b or disp.shape[2:] != (h, w):
        raise ValueError("image and displacement shapes disagree")

    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=disp.dtype, device=disp.device),
        torch.arange(w, dtype=disp.dtype, device=disp.device),
        indexing="ij",
    )
    x = (xs + disp[:, 0]).clamp(0, w - 1)
    y = (ys + disp[:, 1]).clamp(0, h - 1)

    x0f = x.detach().floor()
    y0f = y.detach().floor()
    wx = (x - x0f).unsqueeze(1)
    wy = (y - y0f).unsqueeze(1)
    x0 = x0f.long()
    y0 = y0f.long()
    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)

    flat = image.reshape(b, c, h * w)

    def tap(yi, xi):
        idx = (yi * w + xi).reshape(b, 1, h * w).expand(b, c, h * w)
        return flat.gather(2, idx).reshape(b, c, h, w)

    top = tap(y0, x0) * (1 - wx) + tap(y0, x1) * wx
    bottom = tap(y1, x0) * (1 - wx) + tap(y1, x1) * wx
    return top * (1 - wy) + bottom * wy


def warp_bank(images: torch.Tensor, raw_fields: torch.Tensor, margin: float = DEFAULT_MARGIN) -> torch.Tensor:
    """Warp every bank image by its own field; returns ``(B, N, C, H, W)`` candidates."""
    b, n, c, h, w = images.shape
    if raw_fields.shape != (b, n, 2, h, w):
        raise ValueError(f"fields {tuple(raw_fields.shape)} do not match bank {(b, n, 2, h, w)}")
    disp = scale_field(raw_fields, margin)
    warped = bilinear_warp(images.reshape(b * n, c, h, w), disp.reshape(b * n, 2, h, w))
    return warped.reshape(b, n, c, h, w)


def merge_warped(images: torch.Tensor, masks: torch.Tensor, raw_fields: torch.Tensor,
                 margin: float = DEFAULT_MARGIN) -> torch.Tensor:
    """Fetch-stream output: ``sum_i m_i * warp(x_i, w_i)``.

    ``images`` is ``(B, N, 3, H, W)``, ``masks`` ``(B, N, 1, H, W)`` summing to
    one over ``N`` and ``raw_fields`` ``(B, N, 2, H, W)`` in ``[-1, 1]``.
    """
    b, n, _, h, w = images.shape
    if masks.shape != (b, n, 1, h, w):
        raise ValueError(f"masks {tuple(masks.shape)} do not match bank {(b, n, 1, h, w)}")
    if torch.any((masks.detach().sum(dim=1) - 1).abs() > _MASK_SUM_TOL):
        raise ValueError("selection masks must sum to one across the bank")
    return (masks * warp_bank(images, raw_fields, margin)).sum(dim=1)


def merge_final(appearance: torch.Tensor, warped: torch.Tensor, merge_mask: torch.Tensor) -> torch.Tensor:
    """Blend the streams: ``(1 - V) * I_a + V * I_w``."""
    if appearance.shape != warped.shape:
        raise ValueError("appearance and warped images differ in shape")
    if merge_mask.shape[1] != 1 or merge_mask.shape[2:] != appearance.shape[2:]:
        raise ValueError(f"merge mask shape {tuple(merge_mask.shape)} incompatible with {tuple(appearance.shape)}")
    vd = merge_mask.detach()
    if torch.any(vd < 0) or torch.any(vd > 1):
        raise ValueError("merge mask must lie in [0, 1]")
    return (1 - merge_mask) * appearance + merge_mask * warped
