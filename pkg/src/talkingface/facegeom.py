"""Landmark handling, source-bank selection and network input encoding.

Conventions used throughout the package:

* images are ``(H, W, C)`` arrays; 8-bit on disk, float32 in ``[-1, 1]`` in memory
* a landmark set is a ``(68, 2)`` float array of ``(x, y)`` pixel coordinates,
  ``x`` along columns and ``y`` along rows, row ``j`` holding Dlib landmark ``j + 1``
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import cv2
import numpy as np
from scipy.spatial import cKDTree

NUM_LANDMARKS = 68

# 1-indexed Dlib ids
UPPER_LIP_MID = 52
LOWER_LIP_MID = 58
NOSE_TIP = 34
LEFT_EYE_OUTER = 37
RIGHT_EYE_OUTER = 46

CROP_MARGIN = 1.25


def lm(points: np.ndarray, idx: int) -> np.ndarray:
    """Return landmark ``idx`` using the 1-indexed Dlib numbering."""
    return points[idx - 1]


def as_landmarks(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape != (NUM_LANDMARKS, 2):
        raise ValueError(f"expected {NUM_LANDMARKS} (x, y) landmarks, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("landmark coordinates must be finite")
    return pts


def load_landmarks(path) -> list[np.ndarray]:
    """Read a JSON-lines landmark file: one record per frame, 68 ``[x, y]`` pairs."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if isinstance(obj, dict):
                obj = obj.get("landmarks", obj.get("points"))
            try:
                records.append(as_landmarks(obj))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records


def save_landmarks(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pts in records:
            fh.write(json.dumps(np.asarray(pts, dtype=float).tolist()) + "\n")


def image_to_float(img: np.ndarray) -> np.ndarray:
    """uint8 ``[0, 255]`` -> float32 ``[-1, 1]``."""
    return (np.asarray(img, dtype=np.float32) / 127.5 - 1.0).astype(np.float32)


def image_to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((np.asarray(img, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def mouth_openness(landmarks) -> float:
    """Distance in pixels between the outer middle lip landmarks (52 and 58)."""
    pts = np.asarray(landmarks, dtype=np.float64)
    d = lm(pts, UPPER_LIP_MID) - lm(pts, LOWER_LIP_MID)
    return float(np.hypot(d[0], d[1]))


@dataclass(frozen=True)
class SourceBank:
    """N face images of one subject with their landmarks, ordered by mouth openness.

    ``images`` is ``(N, H, W, 3)`` float32 in ``[-1, 1]``, ``landmarks`` is
    ``(N, 68, 2)`` and ``openness`` is non-decreasing.
    """

    images: np.ndarray
    landmarks: np.ndarray
    openness: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[-1] != 3:
            raise ValueError(f"bank images must be (N, H, W, 3), got {self.images.shape}")
        n = self.images.shape[0]
        if n < 1:
            raise ValueError("source bank must hold at least one image")
        if self.landmarks.shape != (n, NUM_LANDMARKS, 2) or self.openness.shape != (n,):
            raise ValueError("bank images, landmarks and openness disagree on N")
        if np.any(np.diff(self.openness) < 0):
            raise ValueError("bank openness must be non-decreasing")

    @property
    def size(self) -> int:
        return self.images.shape[0]

    @property
    def height(self) -> int:
        return self.images.shape[1]

    @property
    def width(self) -> int:
        return self.images.shape[2]

    def truncate(self, k: int) -> "SourceBank":
        """Keep the first ``k`` images (most closed mouths first)."""
        if not 1 <= k <= self.size:
            raise ValueError(f"cannot truncate a bank of {self.size} to {k}")
        return SourceBank(self.images[:k], self.landmarks[:k], self.openness[:k])

    @classmethod
    def from_frames(cls, images, landmarks) -> "SourceBank":
        imgs = np.stack([image_to_float(im) if np.asarray(im).dtype == np.uint8 else np.asarray(im, np.float32)
                         for im in images])
        pts = np.stack([as_landmarks(p) for p in landmarks])
        return cls(imgs, pts, np.array([mouth_openness(p) for p in pts]))


def bank_ranks(num_frames: int, n: int) -> list[int]:
    """Evenly spaced ranks into ``num_frames`` sorted frames, always keeping both ends."""
    if n == 1:
        return [0]
    return [k * (num_frames - 1) // (n - 1) for k in range(n)]


def select_bank_indices(landmarks, n: int) -> list[int]:
    """Original frame indices chosen by :func:`select_bank`, most closed mouth first."""
    if n < 1:
        raise ValueError("bank size must be positive")
    if len(landmarks) < n:
        raise ValueError(f"insufficient frames: need {n}, got {len(landmarks)}")
    openness = np.array([mouth_openness(p) for p in landmarks])
    order = np.argsort(openness, kind="stable")
    return [int(order[r]) for r in bank_ranks(len(landmarks), n)]


def select_bank(frames, landmarks, n: int) -> SourceBank:
    """Pick ``n`` frames spread uniformly over the mouth-openness ordering.

    Frames are sorted by openness (stable, so ties keep their original order)
    and the frames at ranks ``floor(k * (F - 1) / (n - 1))`` are kept.
    """
    frames = list(frames)
    landmarks = [as_landmarks(p) for p in landmarks]
    if len(frames) != len(landmarks):
        raise ValueError(f"{len(frames)} frames but {len(landmarks)} landmark records")
    chosen = select_bank_indices(landmarks, n)
    return SourceBank.from_frames([frames[i] for i in chosen], [landmarks[i] for i in chosen])


def difference_field(source, target, width: int, height: int) -> np.ndarray:
    """Sparse ``(H, W, 2)`` map with ``target - source`` at each rounded source landmark.

    Landmarks that round outside the image are skipped; when two land on the
    same pixel the higher landmark index wins.
    """
    if width <= 0 or height <= 0:
        raise ValueError("field size must be positive")
    src = as_landmarks(source)
    tgt = as_landmarks(target)
    field = np.zeros((height, width, 2), dtype=np.float32)
    cols = np.rint(src[:, 0]).astype(np.int64)
    rows = np.rint(src[:, 1]).astype(np.int64)
    delta = tgt - src
    for j in range(NUM_LANDMARKS):
        c, r = cols[j], rows[j]
        if 0 <= c < width and 0 <= r < height:
            field[r, c] = delta[j]
    return field


def bank_difference_fields(bank: SourceBank, target) -> np.ndarray:
    """Stack of per-source difference fields, ``(N, H, W, 2)``."""
    return np.stack([difference_field(s, target, bank.width, bank.height) for s in bank.landmarks])


def assemble_input(bank: SourceBank, fields: np.ndarray) -> np.ndarray:
    """Concatenate bank images and difference fields into one ``(H, W, 5N)`` tensor.

    Channel order is ``[x_1 RGB, ..., x_N RGB, f_1 xy, ..., f_N xy]``. Field
    values are divided by ``max(W, H)``.
    """
    fields = np.asarray(fields, dtype=np.float32)
    n, h, w = bank.size, bank.height, bank.width
    if fields.shape != (n, h, w, 2):
        raise ValueError(f"fields shape {fields.shape} does not match bank {(n, h, w, 2)}")
    imgs = np.transpose(bank.images, (1, 2, 0, 3)).reshape(h, w, 3 * n)
    disp = np.transpose(fields, (1, 2, 0, 3)).reshape(h, w, 2 * n) / np.float32(max(w, h))
    return np.concatenate([imgs, disp], axis=-1).astype(np.float32)


def encode_target(bank: SourceBank, target) -> np.ndarray:
    """Convenience: fields for ``target`` followed by :func:`assemble_input`."""
    return assemble_input(bank, bank_difference_fields(bank, target))


def heatmap_weights(target, width: int, height: int, gamma: float = 0.95, floor: float = 0.3) -> np.ndarray:
    """Landmark-proximity weights ``max(gamma ** B, floor)`` as an ``(H, W)`` float32 map.

    ``B`` is the Euclidean distance from each pixel to the nearest rounded
    target landmark.
    """
    if width <= 0 or height <= 0:
        raise ValueError("map size must be positive")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if not 0 <= floor <= 1:
        raise ValueError("floor must lie in [0, 1]")
    pts = np.rint(as_landmarks(target))
    yy, xx = np.mgrid[0:height, 0:width]
    dist, _ = cKDTree(pts).query(np.column_stack([xx.ravel(), yy.ravel()]))
    k = np.maximum(np.power(gamma, dist), floor)
    return k.reshape(height, width).astype(np.float32)


def crop_transform(landmarks, mode: str = "nose-tip", out_size: int = 224, side: float | None = None):
    """Affine ``(2, 3)`` matrix for the centered square crop, plus the window ``(x0, y0, side)``.

    The window is centered on the nose tip or on the midpoint of the outer eye
    corners; its side defaults to ``2 * 1.25 * r`` with ``r`` the largest
    distance from that center to any landmark.
    """
    pts = as_landmarks(landmarks)
    if mode == "nose-tip":
        center = lm(pts, NOSE_TIP)
    elif mode == "eye-corners":
        center = 0.5 * (lm(pts, LEFT_EYE_OUTER) + lm(pts, RIGHT_EYE_OUTER))
    else:
        raise ValueError(f"unknown crop mode {mode!r}")
    if side is None:
        side = 2.0 * CROP_MARGIN * float(np.max(np.linalg.norm(pts - center, axis=1)))
    if side <= 0:
        raise ValueError("degenerate crop window")
    x0, y0 = center - side / 2.0
    s = out_size / side
    mat = np.array([[s, 0.0, -x0 * s], [0.0, s, -y0 * s]])
    return mat, (float(x0), float(y0), float(side))


def crop_center(image: np.ndarray, landmarks, mode: str = "nose-tip", out_size: int = 224,
                side: float | None = None):
    """Crop a centered face square, resize it to ``out_size`` and remap the landmarks."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    mat, (x0, y0, side) = crop_transform(landmarks, mode, out_size, side)
    if x0 >= w or y0 >= h or x0 + side <= 0 or y0 + side <= 0:
        raise ValueError("crop window lies entirely outside the image")
    out = cv2.warpAffine(image, mat, (out_size, out_size), flags=cv2.INTER_LINEAR,
                         borderMode=cv2.BORDER_REPLICATE)
    pts = as_landmarks(landmarks)
    remapped = pts @ mat[:, :2].T + mat[:, 2]
    return out, remapped
