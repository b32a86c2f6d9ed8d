"""Parametric cartoon faces with Dlib-ordered landmarks.

Each face exposes mouth and eye openness plus small head translations, so the
renderer can stand in for a talking-head corpus: banks show different mouth
shapes, teeth only appear when the mouth is open and eyelids hide the eyes
when blinking.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import cv2
import numpy as np

_SS = 4  # supersampling factor
_SHIFT = 4  # fixed-point bits for cv2 sub-pixel drawing


@dataclass(frozen=True)
class Identity:
    skin: tuple
    hair: tuple
    lips: tuple
    iris: tuple
    background: tuple
    face_w: float = 0.30  # half-width, fraction of image size
    face_h: float = 0.38
    eye_gap: float = 0.13
    mouth_w: float = 0.11

    @classmethod
    def random(cls, rng: np.random.Generator) -> "Identity":
        def color(lo, hi):
            return tuple(int(c) for c in rng.integers(lo, hi, size=3))

        return cls(
            skin=color(150, 235),
            hair=color(10, 90),
            lips=(int(rng.integers(120, 200)), int(rng.integers(30, 80)), int(rng.integers(40, 90))),
            iris=color(20, 140),
            background=color(40, 220),
            face_w=float(rng.uniform(0.27, 0.32)),
            face_h=float(rng.uniform(0.35, 0.40)),
            eye_gap=float(rng.uniform(0.11, 0.14)),
            mouth_w=float(rng.uniform(0.09, 0.12)),
        )


@dataclass(frozen=True)
class Pose:
    mouth: float = 0.0  # 0 closed .. 1 wide open
    eyes: float = 1.0  # 0 shut .. 1 open
    dx: float = 0.0  # head translation, fraction of image size
    dy: float = 0.0


def face_landmarks(ident: Identity, pose: Pose, size: int) -> np.ndarray:
    """68 ``(x, y)`` landmarks in output pixel coordinates."""
    cx = 0.5 + pose.dx
    cy = 0.52 + pose.dy
    a, b = ident.face_w, ident.face_h
    pts = np.zeros((68, 2))

    # jaw 1-17: lower half of the face ellipse, image-left to image-right
    th = np.linspace(np.pi, 0.0, 17)
    jaw_drop = 0.06 * pose.mouth
    pts[0:17, 0] = cx + a * np.cos(th)
    pts[0:17, 1] = cy - 0.05 + (b + jaw_drop) * np.sin(th)

    eye_y = cy - 0.08
    for side, base in ((-1, 17), (1, 22)):
        ex = cx + side * ident.eye_gap
        xs = ex + side * np.array([-0.07, -0.035, 0.0, 0.035, 0.07]) * (-1 if side < 0 else 1)
        xs = np.sort(xs)
        pts[base:base + 5, 0] = xs
        pts[base:base + 5, 1] = eye_y - 0.07 - 0.015 * np.cos(np.linspace(-1.2, 1.2, 5))

    # nose: bridge 28-31, lower 32-36 with 34 the tip
    pts[27:31, 0] = cx
    pts[27:31, 1] = np.linspace(eye_y, cy + 0.07, 4)
    pts[31:36, 0] = cx + np.array([-0.04, -0.02, 0.0, 0.02, 0.04])
    pts[31:36, 1] = cy + 0.09 + np.array([0.0, 0.008, 0.012, 0.008, 0.0])

    eye_hw, eye_hh = 0.045, 0.022 * max(pose.eyes, 0.0)
    for corner_l, ex in ((36, cx - ident.eye_gap), (42, cx + ident.eye_gap)):
        # order: left corner, 2 upper, right corner, 2 lower (right to left)
        pts[corner_l + 0] = (ex - eye_hw, eye_y)
        pts[corner_l + 1] = (ex - eye_hw / 3, eye_y - eye_hh)
        pts[corner_l + 2] = (ex + eye_hw / 3, eye_y - eye_hh)
        pts[corner_l + 3] = (ex + eye_hw, eye_y)
        pts[corner_l + 4] = (ex + eye_hw / 3, eye_y + eye_hh)
        pts[corner_l + 5] = (ex - eye_hw / 3, eye_y + eye_hh)

    mw = ident.mouth_w
    my = cy + 0.19 + 0.02 * pose.mouth
    gap = 0.09 * pose.mouth
    up, lo = my - gap / 2, my + gap / 2
    lip = 0.02
    # outer lip 49-60
    pts[48] = (cx - mw, my)
    pts[49] = (cx - mw * 0.6, up - lip * 0.9)
    pts[50] = (cx - mw * 0.2, up - lip)
    pts[51] = (cx, up - lip * 0.8)
    pts[52] = (cx + mw * 0.2, up - lip)
    pts[53] = (cx + mw * 0.6, up - lip * 0.9)
    pts[54] = (cx + mw, my)
    pts[55] = (cx + mw * 0.6, lo + lip * 1.1)
    pts[56] = (cx + mw * 0.3, lo + lip * 1.3)
    pts[57] = (cx, lo + lip * 1.3)
    pts[58] = (cx - mw * 0.3, lo + lip * 1.3)
    pts[59] = (cx - mw * 0.6, lo + lip * 1.1)
    # inner lip 61-68
    pts[60] = (cx - mw * 0.8, my)
    pts[61] = (cx - mw * 0.35, up)
    pts[62] = (cx, up)
    pts[63] = (cx + mw * 0.35, up)
    pts[64] = (cx + mw * 0.8, my)
    pts[65] = (cx + mw * 0.35, lo)
    pts[66] = (cx, lo)
    pts[67] = (cx - mw * 0.35, lo)

    # unit -> pixel coordinates with pixel centers at integers
    return pts * size - 0.5


def _fixed(pts_px: np.ndarray) -> np.ndarray:
    hi = (pts_px + 0.5) * _SS - 0.5
    return np.rint(hi * (1 << _SHIFT)).astype(np.int32)


def render_face(ident: Identity, pose: Pose, size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Return an ``(size, size, 3)`` uint8 RGB image and its landmarks."""
    pts = face_landmarks(ident, pose, size)
    big = size * _SS
    canvas = np.empty((big, big, 3), np.uint8)
    # vertical background gradient
    ramp = np.linspace(0.8, 1.15, big)[:, None, None]
    canvas[:] = np.clip(np.array(ident.background)[None, None, :] * ramp, 0, 255).astype(np.uint8)

    def poly(points, color):
        cv2.fillPoly(canvas, [_fixed(points)], color, lineType=cv2.LINE_AA, shift=_SHIFT)

    def line(points, color, width):
        cv2.polylines(canvas, [_fixed(points)], False, color, width * _SS, lineType=cv2.LINE_AA, shift=_SHIFT)

    # hair cap, head, neck
    cx, top = pts[27, 0], pts[0, 1]
    a = (pts[16, 0] - pts[0, 0]) / 2
    th = np.linspace(np.pi, 2 * np.pi, 40)
    cap = np.column_stack([cx + 1.08 * a * np.cos(th), top + 0.95 * a * np.sin(th)])
    poly(np.vstack([cap, [[pts[16, 0] + 0.08 * a, top + 0.2 * a], [pts[0, 0] - 0.08 * a, top + 0.2 * a]]]), ident.hair)
    head = np.vstack([np.column_stack([cx + a * np.cos(th), top + 0.8 * a * np.sin(th)]), pts[16::-1]])
    poly(head, ident.skin)
    shade = tuple(int(c * 0.85) for c in ident.skin)

    # eyes: white sclera, iris clipped by lids
    for s in (36, 42):
        eye = pts[s:s + 6]
        if eye[4, 1] - eye[2, 1] > 0.15:
            poly(eye, (245, 245, 245))
            centre = eye.mean(axis=0)
            r = 0.65 * (eye[3, 0] - eye[0, 0]) / 2
            mask = np.zeros((big, big), np.uint8)
            cv2.fillPoly(mask, [_fixed(eye)], 255, lineType=cv2.LINE_AA, shift=_SHIFT)
            iris = canvas.copy()
            c = _fixed(centre[None])[0]
            cv2.circle(iris, (int(c[0]), int(c[1])), int(r * _SS * (1 << _SHIFT)), ident.iris, -1,
                       lineType=cv2.LINE_AA, shift=_SHIFT)
            cv2.circle(iris, (int(c[0]), int(c[1])), int(0.45 * r * _SS * (1 << _SHIFT)), (10, 10, 10), -1,
                       lineType=cv2.LINE_AA, shift=_SHIFT)
            alpha = (mask.astype(np.float32) / 255.0)[..., None]
            canvas[:] = (canvas * (1 - alpha) + iris * alpha).astype(np.uint8)
        line(eye[[0, 1, 2, 3]], (40, 30, 30), 1)
        if eye[4, 1] - eye[2, 1] <= 0.15:
            line(eye[[0, 1, 2, 3]] + [0, 0.3], shade, 1)

    line(pts[17:22], ident.hair, 1)
    line(pts[22:27], ident.hair, 1)
    line(pts[27:31], shade, 1)
    line(pts[31:36], tuple(int(c * 0.6) for c in ident.skin), 1)

    poly(pts[48:60], ident.lips)
    inner = pts[60:68]
    if inner[6, 1] - inner[2, 1] > 0.2:
        poly(inner, (60, 15, 25))
        teeth_h = 0.45 * (inner[6, 1] - inner[2, 1])
        teeth = np.array([inner[0], inner[1], inner[2], inner[3], inner[4],
                          inner[4] + [0, teeth_h * 0.4], inner[3] + [0, teeth_h],
                          inner[2] + [0, teeth_h], inner[1] + [0, teeth_h], inner[0] + [0, teeth_h * 0.4]])
        mask = np.zeros((big, big), np.uint8)
        cv2.fillPoly(mask, [_fixed(inner)], 255, lineType=cv2.LINE_AA, shift=_SHIFT)
        layer = canvas.copy()
        cv2.fillPoly(layer, [_fixed(teeth)], (240, 240, 230), lineType=cv2.LINE_AA, shift=_SHIFT)
        alpha = (mask.astype(np.float32) / 255.0)[..., None]
        canvas[:] = (canvas * (1 - alpha) + layer * alpha).astype(np.uint8)
    else:
        line(inner[[0, 1, 2, 3, 4]], (90, 20, 30), 1)

    img = cv2.resize(canvas, (size, size), interpolation=cv2.INTER_AREA)
    return img, pts


def talking_clip(ident: Identity, n_frames: int, size: int = 64, rng: np.random.Generator | None = None,
                 jitter: float = 0.02):
    """A short clip: mouth opening and closing, occasional blinks, slight head drift."""
    rng = np.random.default_rng(0) if rng is None else rng
    phase = rng.uniform(0, 2 * np.pi)
    freq = rng.uniform(0.5, 1.2)
    frames, landmarks, poses = [], [], []
    for t in range(n_frames):
        mouth = float(np.clip(0.5 - 0.5 * np.cos(freq * t + phase) + rng.normal(0, 0.05), 0, 1))
        eyes = 0.0 if rng.random() < 0.12 else 1.0
        pose = Pose(mouth=mouth, eyes=eyes, dx=float(rng.normal(0, jitter)), dy=float(rng.normal(0, jitter)))
        img, pts = render_face(ident, pose, size)
        frames.append(img)
        landmarks.append(pts)
        poses.append(pose)
    return frames, landmarks, poses


def openness_sweep(ident: Identity, n_frames: int, size: int = 64, shuffle_seed: int | None = None):
    """Frames with mouth openness evenly spread over ``[0, 1]`` (optionally shuffled)."""
    levels = np.linspace(0.0, 1.0, n_frames)
    if shuffle_seed is not None:
        np.random.default_rng(shuffle_seed).shuffle(levels)
    out = [render_face(ident, Pose(mouth=float(m)), size) for m in levels]
    return [o[0] for o in out], [o[1] for o in out]


def with_pose(pose: Pose, **changes) -> Pose:
    return replace(pose, **changes)
