"""Training corpora: per-identity source banks plus target clips.

A corpus yields :class:`Batch` objects whose targets all share one identity's
bank. Two sources are provided: a procedurally rendered one and a loader for
prepared directories (see :func:`load_corpus`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import facegeom as fg
from . import synthetic as syn


@dataclass
class Batch:
    inputs: torch.Tensor  # (B, 5N, H, W)
    targets: torch.Tensor  # (B, 3, H, W) in [-1, 1]
    heatmaps: torch.Tensor  # (B, H, W)


@dataclass
class Clip:
    frames: np.ndarray  # (F, H, W, 3) float32 in [-1, 1]
    landmarks: np.ndarray  # (F, 68, 2)


@dataclass
class Subject:
    bank: fg.SourceBank
    clips: list


def encode_batch(bank: fg.SourceBank, targets, target_landmarks, gamma=0.95, floor=0.3) -> Batch:
    h, w = bank.height, bank.width
    x = np.stack([fg.encode_target(bank, t) for t in target_landmarks])
    k = np.stack([fg.heatmap_weights(t, w, h, gamma, floor) for t in target_landmarks])
    tg = np.asarray(targets, dtype=np.float32)
    return Batch(
        inputs=torch.from_numpy(np.ascontiguousarray(x.transpose(0, 3, 1, 2))),
        targets=torch.from_numpy(np.ascontiguousarray(tg.transpose(0, 3, 1, 2))),
        heatmaps=torch.from_numpy(k),
    )


class Corpus:
    """A list of subjects with a deterministic batch sampler."""

    def __init__(self, subjects: list):
        if not subjects:
            raise ValueError("corpus has no subjects")
        self.subjects = subjects

    @property
    def image_size(self) -> tuple[int, int]:
        b = self.subjects[0].bank
        return b.height, b.width

    def sample(self, rng: np.random.Generator, batch: int = 16, clips: int = 4, n_sources: int | None = None,
               gamma=0.95, floor=0.3) -> Batch:
        """Draw ``batch`` target frames from ``clips`` clips of one random subject."""
        subj = self.subjects[int(rng.integers(len(self.subjects)))]
        bank = subj.bank if n_sources is None else subj.bank.truncate(n_sources)
        n_clips = min(clips, len(subj.clips))
        chosen = rng.choice(len(subj.clips), size=n_clips, replace=False)
        per_clip = np.full(n_clips, batch // n_clips)
        per_clip[: batch % n_clips] += 1
        frames, lms = [], []
        for ci, k in zip(chosen, per_clip):
            clip = subj.clips[int(ci)]
            idx = rng.integers(len(clip.frames), size=int(k))
            frames.extend(clip.frames[idx])
            lms.extend(clip.landmarks[idx])
        return encode_batch(bank, frames, lms, gamma, floor)


class SingleSample:
    """Always returns the same (bank, target) pair; used for overfitting checks."""

    def __init__(self, bank: fg.SourceBank, target: np.ndarray, target_landmarks: np.ndarray):
        self.bank = bank
        self.target = target
        self.target_landmarks = target_landmarks

    @property
    def image_size(self):
        return self.bank.height, self.bank.width

    def sample(self, rng, batch=1, clips=1, n_sources=None, gamma=0.95, floor=0.3) -> Batch:
        bank = self.bank if n_sources is None else self.bank.truncate(n_sources)
        return encode_batch(bank, [self.target] * batch, [self.target_landmarks] * batch, gamma, floor)


def synthetic_corpus(n_subjects: int = 4, size: int = 64, bank_size: int = 5, clips_per_subject: int = 4,
                     frames_per_clip: int = 12, source_frames: int = 15, seed: int = 0) -> Corpus:
    """Render a corpus of cartoon subjects; banks come from a separate source clip."""
    rng = np.random.default_rng(seed)
    subjects = []
    for _ in range(n_subjects):
        ident = syn.Identity.random(rng)
        src_frames, src_lms, _ = syn.talking_clip(ident, source_frames, size, rng)
        bank = fg.select_bank(src_frames, src_lms, bank_size)
        clips = []
        for _ in range(clips_per_subject):
            frames, lms, _ = syn.talking_clip(ident, frames_per_clip, size, rng)
            clips.append(Clip(np.stack([fg.image_to_float(f) for f in frames]), np.stack(lms)))
        subjects.append(Subject(bank, clips))
    return Corpus(subjects)


def overfit_fixture(size: int = 64, bank_size: int = 5, seed: int = 7) -> SingleSample:
    """One subject, a bank spanning mouth openness, and a half-open target not in the bank."""
    rng = np.random.default_rng(seed)
    ident = syn.Identity.random(rng)
    frames, lms = syn.openness_sweep(ident, 9, size)
    bank = fg.select_bank(frames, lms, bank_size)
    target, t_lms = syn.render_face(ident, syn.Pose(mouth=0.85, eyes=1.0, dx=0.02, dy=-0.01), size)
    return SingleSample(bank, fg.image_to_float(target), t_lms)


# -- on-disk layout ----------------------------------------------------------

def read_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


def write_png(path, img: np.ndarray) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8), "RGB").save(path)


def read_frame_dir(frames_dir) -> list:
    frames_dir = Path(frames_dir)
    paths = sorted(p for p in frames_dir.iterdir() if p.suffix.lower() == ".png")
    return [read_png(p) for p in paths]


def write_bank(out_dir, bank: fg.SourceBank, extra: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, img in enumerate(bank.images):
        name = f"bank_{i:02d}.png"
        write_png(out / name, fg.image_to_uint8(img))
        names.append(name)
    fg.save_landmarks(out / "landmarks.jsonl", bank.landmarks)
    manifest = {
        "n_sources": bank.size,
        "height": bank.height,
        "width": bank.width,
        "images": names,
        "openness": [float(o) for o in bank.openness],
    }
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def read_bank(bank_dir) -> fg.SourceBank:
    bank_dir = Path(bank_dir)
    manifest_path = bank_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no bank manifest in {bank_dir}")
    manifest = json.loads(manifest_path.read_text())
    images = [read_png(bank_dir / n) for n in manifest["images"]]
    lms = fg.load_landmarks(bank_dir / "landmarks.jsonl")
    if len(lms) != len(images):
        raise ValueError(f"bank {bank_dir}: {len(images)} images but {len(lms)} landmark records")
    return fg.SourceBank.from_frames(images, lms)


def write_clip(out_dir, frames, landmarks) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        write_png(out / f"frame_{i:05d}.png", f)
    fg.save_landmarks(out / "landmarks.jsonl", landmarks)


def read_clip(clip_dir) -> Clip:
    frames = read_frame_dir(clip_dir)
    lms = fg.load_landmarks(Path(clip_dir) / "landmarks.jsonl")
    if len(frames) != len(lms):
        raise ValueError(f"clip {clip_dir}: {len(frames)} frames but {len(lms)} landmark records")
    return Clip(np.stack([fg.image_to_float(f) for f in frames]), np.stack(lms))


def load_corpus(root) -> Corpus:
    """Load ``root/<subject>/{bank,clips/<clip>}``; ``root`` may itself be one subject."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"data directory {root} does not exist")
    candidates = [root] if (root / "bank").is_dir() else sorted(p for p in root.iterdir() if (p / "bank").is_dir())
    subjects = []
    for subj in candidates:
        clip_dirs = sorted(p for p in (subj / "clips").iterdir() if p.is_dir()) if (subj / "clips").is_dir() else []
        if not clip_dirs:
            raise ValueError(f"subject {subj} has no clips")
        subjects.append(Subject(read_bank(subj / "bank"), [read_clip(c) for c in clip_dirs]))
    if not subjects:
        raise ValueError(f"no subjects with a bank/ directory under {root}")
    return Corpus(subjects)
