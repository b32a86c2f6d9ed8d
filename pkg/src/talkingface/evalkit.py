"""Evaluation metrics: mean absolute pixel error and Fréchet feature distance."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import torch


def l1_metric(pred_set, gt_set) -> float:
    """Mean absolute difference over all pixels, channels and images, in 8-bit units.

    Both sets hold images in the ``[0, 255]`` convention (any numeric dtype).
    """
    pred = [np.asarray(p, dtype=np.float64) for p in pred_set]
    gt = [np.asarray(g, dtype=np.float64) for g in gt_set]
    if len(pred) != len(gt):
        raise ValueError(f"set size mismatch: {len(pred)} predictions vs {len(gt)} ground-truth images")
    if not pred:
        raise ValueError("cannot evaluate empty image sets")
    total, count = 0.0, 0
    for p, g in zip(pred, gt):
        if p.shape != g.shape:
            raise ValueError(f"image shape mismatch: {p.shape} vs {g.shape}")
        total += np.abs(p - g).sum()
        count += p.size
    return float(total / count)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def frechet_distance(mu1, sigma1, mu2, sigma2) -> float:
    """``||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))`` for Gaussian fits.

    The trace of ``(S1 S2)^(1/2)`` is taken from the eigenvalues of the
    symmetric product ``S1^(1/2) S2 S1^(1/2)``, which shares the spectrum of
    ``S1 S2``; negative eigenvalues from round-off are clamped to zero.
    """
    mu1, mu2 = np.atleast_1d(mu1), np.atleast_1d(mu2)
    sigma1, sigma2 = np.atleast_2d(sigma1), np.atleast_2d(sigma2)
    root1 = _psd_sqrt(sigma1)
    middle = root1 @ sigma2 @ root1
    eig = np.linalg.eigvalsh((middle + middle.T) / 2)
    tr_covmean = np.sqrt(np.clip(eig, 0, None)).sum()
    diff = mu1 - mu2
    fid = diff @ diff + np.trace(sigma1) + np.trace(sigma2) - 2.0 * tr_covmean
    return float(max(fid, 0.0))


def fid_metric(pred_features, gt_features) -> float:
    """Fréchet distance between ``(n, d)`` feature sets (``n >= 2`` each)."""
    a = np.asarray(pred_features, dtype=np.float64)
    b = np.asarray(gt_features, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"feature sets must be (n, d) with matching d, got {a.shape} and {b.shape}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("need at least two feature vectors per set")
    return frechet_distance(a.mean(0), np.cov(a, rowvar=False), b.mean(0), np.cov(b, rowvar=False))


def extract_features(images, extractor, batch: int = 32) -> np.ndarray:
    """Embed uint8 ``(H, W, 3)`` images with ``extractor.embed`` -> ``(n, d)``."""
    feats = []
    images = list(images)
    with torch.no_grad():
        for i in range(0, len(images), batch):
            chunk = np.stack(images[i:i + batch]).astype(np.float32) / 127.5 - 1.0
            x = torch.from_numpy(chunk.transpose(0, 3, 1, 2).copy())
            feats.append(extractor.embed(x).double().numpy())
    return np.concatenate(feats, axis=0)


def paired_files(pred_dir, gt_dir) -> list:
    """Match PNG files by name; the two directories must hold exactly the same names."""
    pred = {p.name for p in Path(pred_dir).glob("*.png")}
    gt = {p.name for p in Path(gt_dir).glob("*.png")}
    if len(pred) != len(gt):
        raise ValueError(f"mismatched counts: {len(pred)} predictions vs {len(gt)} ground-truth frames")
    if pred != gt:
        missing = sorted(pred ^ gt)[:5]
        raise ValueError(f"unpaired file names, e.g. {missing}")
    if not pred:
        raise ValueError("no PNG frames found")
    return sorted(pred)


def write_report(path, rows) -> None:
    """CSV with columns ``metric, value, n_pred, n_gt, extractor``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value", "n_pred", "n_gt", "extractor"])
        for r in rows:
            w.writerow([r["metric"], repr(float(r["value"])), r["n_pred"], r["n_gt"], r.get("extractor", "")])
