"""Synthetic relational videos with ground-truth boxes.

Each video shows a "hand" rectangle and one or two "object" rectangles
on a noisy background. The class is defined by how the entities move
and transform over time, not by any single frame: all classes draw the
same random attributes in the same order, so videos of different
classes generated from the same seed open on pixel-identical (or
near-identical) first frames and diverge only in their trajectories.

Classes
    put-beside  hand drags the object next to a second object
    cover       hand ends on top of the object, hiding it
    uncover     hand drags the object aside, revealing one hidden under it
    swap        the two objects exchange places while the hand hovers
    move-away   time reversal of put-beside: the hand drags the object
                away from the second object
    split       the object breaks into two separating halves

Matched seeds make cover, uncover and split open on the same first
frame (the object hidden under an uncover is invisible there), and
put-beside and swap likewise; move-away is frame-for-frame the reversal
of put-beside. Occluded entities (at least 90% covered) emit no box.
"""

from __future__ import annotations

import math
import multiprocessing
import os
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .rois import RoiBox
from .tensor import read_tensor, write_tensor

CLASSES = ("put-beside", "cover", "uncover", "swap", "move-away", "split")
CORRUPT_MODES = ("iou@0.50", "iou@0.25", "iou@0.05", "drop-hands", "drop-objects", "drop-all")

_VISIBLE_FRACTION = 0.1  # below this an entity counts as occluded
_NOISE_AMPLITUDE = 0.08


@dataclass
class SynthVideo:
    frames: np.ndarray  # (T, S, S, 3) float32 in [0, 1]
    rois: list[RoiBox]
    label: int
    seed: int


@dataclass
class _Sprite:
    tag: str
    color: np.ndarray
    centers: list[tuple[float, float] | None]  # per frame; None = not alive
    half: tuple[float, float]


def _lerp(p, q, u):
    return (p[0] + (q[0] - p[0]) * u, p[1] + (q[1] - p[1]) * u)


def _sample_positions(rng: np.random.Generator, count: int, min_dist: float) -> list[tuple[float, float]]:
    points: list[tuple[float, float]] = []
    while len(points) < count:
        cand = tuple(rng.uniform(0.2, 0.8, size=2))
        if all(math.dist(cand, p) >= min_dist for p in points):
            points.append(cand)
    return points


def _sample_away(rng: np.random.Generator, origin, min_dist: float) -> tuple[float, float]:
    while True:
        cand = tuple(rng.uniform(0.2, 0.8, size=2))
        if math.dist(cand, origin) >= min_dist:
            return cand


def _shared_draws(rng: np.random.Generator, frames: int, size: int) -> dict:
    """Every class consumes the identical draw sequence, which is what
    makes matched-seed videos of different classes open identically."""
    base = rng.uniform(0.4, 0.6)
    noise = rng.uniform(-_NOISE_AMPLITUDE, _NOISE_AMPLITUDE, size=(frames, size, size, 3))
    background = np.clip(base + noise, 0.0, 1.0)

    hand_half = rng.uniform(0.10, 0.14)
    obj_half_raw = rng.uniform(0.09, 0.13)
    hidden_ratio = rng.uniform(0.70, 0.85)
    obj_half = min(obj_half_raw, 0.85 * hand_half)  # the hand can always cover it

    a, b, c = _sample_positions(rng, 3, min_dist=0.34)
    drag_to = _sample_away(rng, b, min_dist=0.30)
    push_to = _sample_away(rng, b, min_dist=0.30)

    hand_color = np.array([rng.uniform(0.70, 0.95), rng.uniform(0.25, 0.50), rng.uniform(0.15, 0.35)])
    obj_color = np.array([rng.uniform(0.10, 0.35), rng.uniform(0.35, 0.65), rng.uniform(0.65, 0.95)])
    obj2_color = np.array([rng.uniform(0.10, 0.35), rng.uniform(0.35, 0.65), rng.uniform(0.65, 0.95)])

    return {
        "background": background,
        "hand_half": hand_half,
        "obj_half": obj_half,
        "hidden_half": hidden_ratio * obj_half,
        "a": a,
        "b": b,
        "c": c,
        "drag_to": drag_to,
        "push_to": push_to,
        "hand_color": hand_color,
        "obj_color": obj_color,
        "obj2_color": obj2_color,
    }


def _grip(point, draws) -> tuple[float, float]:
    # hand rests just past the object edge, on whichever side has room
    offset = draws["hand_half"] + draws["obj_half"] + 0.01
    sign = 1.0 if draws["b"][1] <= 0.5 else -1.0
    return (point[0], point[1] + sign * offset)


def _build_sprites(cls: str, frames: int, draws: dict) -> list[_Sprite]:
    """Per-frame centers for every entity, bottom to top draw order."""
    t_meet = frames // 2
    a, b, c = draws["a"], draws["b"], draws["c"]

    def approach(target):
        return [_lerp(a, target, t / t_meet) for t in range(t_meet + 1)]

    def action_u(t):
        return (t - t_meet) / max(frames - 1 - t_meet, 1)

    hand_half = (draws["hand_half"], draws["hand_half"])
    obj_half = (draws["obj_half"], draws["obj_half"])

    if cls == "cover":
        hand = approach(b) + [b] * (frames - t_meet - 1)
        obj = [b] * frames
        return [
            _Sprite("object", draws["obj_color"], obj, obj_half),
            _Sprite("hand", draws["hand_color"], hand, hand_half),
        ]

    if cls == "uncover":
        grip = _grip(b, draws)
        obj_path = [b] * (t_meet + 1) + [_lerp(b, draws["drag_to"], action_u(t)) for t in range(t_meet + 1, frames)]
        hand = approach(grip) + [_grip(p, draws) for p in obj_path[t_meet + 1 :]]
        hidden = [b] * frames
        return [
            _Sprite("object", draws["obj2_color"], hidden, (draws["hidden_half"],) * 2),
            _Sprite("object", draws["obj_color"], obj_path, obj_half),
            _Sprite("hand", draws["hand_color"], hand, hand_half),
        ]

    if cls == "put-beside":
        grip = _grip(b, draws)
        side = draws["obj_half"] * 2 + 0.02
        dest = (c[0] + side, c[1]) if c[0] <= 0.5 else (c[0] - side, c[1])
        obj_path = [b] * (t_meet + 1) + [_lerp(b, dest, action_u(t)) for t in range(t_meet + 1, frames)]
        hand = approach(grip) + [_grip(p, draws) for p in obj_path[t_meet + 1 :]]
        return [
            _Sprite("object", draws["obj2_color"], [c] * frames, obj_half),
            _Sprite("object", draws["obj_color"], obj_path, obj_half),
            _Sprite("hand", draws["hand_color"], hand, hand_half),
        ]

    if cls == "swap":
        mid = _lerp(b, c, 0.5)
        hand = approach(mid) + [mid] * (frames - t_meet - 1)
        d = math.dist(b, c)
        perp = ((c[1] - b[1]) / d, -(c[0] - b[0]) / d)

        def arc(src, dst, direction):
            path = [src] * (t_meet + 1)
            for t in range(t_meet + 1, frames):
                u = action_u(t)
                base = _lerp(src, dst, u)
                bulge = 0.08 * math.sin(math.pi * u) * direction
                path.append((base[0] + perp[0] * bulge, base[1] + perp[1] * bulge))
            return path

        return [
            _Sprite("object", draws["obj2_color"], arc(c, b, -1.0), obj_half),
            _Sprite("object", draws["obj_color"], arc(b, c, 1.0), obj_half),
            _Sprite("hand", draws["hand_color"], hand, hand_half),
        ]

    # move-away is handled in generate() as a whole-video reversal

    if cls == "split":
        grip = _grip(b, draws)
        hand = approach(grip) + [grip] * (frames - t_meet - 1)
        whole = [b] * (t_meet + 1) + [None] * (frames - t_meet - 1)
        half_w = draws["obj_half"] / 2
        left: list = [None] * (t_meet + 1)
        right: list = [None] * (t_meet + 1)
        for t in range(t_meet + 1, frames):
            sep = half_w + 0.08 * action_u(t)
            left.append((b[0] - sep, b[1]))
            right.append((b[0] + sep, b[1]))
        return [
            _Sprite("object", draws["obj_color"], whole, obj_half),
            _Sprite("object", draws["obj_color"], left, (half_w, draws["obj_half"])),
            _Sprite("object", draws["obj_color"], right, (half_w, draws["obj_half"])),
            _Sprite("hand", draws["hand_color"], hand, hand_half),
        ]

    raise ConfigError(f"unknown class {cls!r}; expected one of {CLASSES}")


def _pixel_mask(rect, size: int) -> np.ndarray:
    x1, y1, x2, y2 = rect
    mask = np.zeros((size, size), dtype=bool)
    i0 = max(math.ceil(x1 * size - 0.5), 0)
    i1 = min(math.floor(x2 * size - 0.5), size - 1)
    j0 = max(math.ceil(y1 * size - 0.5), 0)
    j1 = min(math.floor(y2 * size - 0.5), size - 1)
    if i0 <= i1 and j0 <= j1:
        mask[i0 : i1 + 1, j0 : j1 + 1] = True
    return mask


def _sprite_rect(sprite: _Sprite, t: int):
    center = sprite.centers[t]
    if center is None:
        return None
    hx, hy = sprite.half
    # keep entities fully inside the image
    cx = min(max(center[0], hx), 1.0 - hx)
    cy = min(max(center[1], hy), 1.0 - hy)
    return (cx - hx, cy - hy, cx + hx, cy + hy)


def generate(seed: int, cls: str, frames: int = 8, size: int = 32) -> SynthVideo:
    """Render one labelled video; a pure function of its arguments."""
    if cls not in CLASSES:
        raise ConfigError(f"unknown class {cls!r}; expected one of {CLASSES}")
    if cls == "move-away":
        # frame-for-frame time reversal of put-beside: the unordered frame
        # set is identical, so only temporal order separates the two
        forward = generate(seed, "put-beside", frames, size)
        rois = [replace(b, frame=frames - 1 - b.frame) for b in forward.rois]
        rois.sort(key=lambda b: b.frame)  # stable: keeps draw order per frame
        return SynthVideo(forward.frames[::-1].copy(), rois, CLASSES.index(cls), int(seed))
    rng = np.random.default_rng(int(seed))
    draws = _shared_draws(rng, frames, size)
    sprites = _build_sprites(cls, frames, draws)

    video = draws["background"].copy()
    rois: list[RoiBox] = []
    for t in range(frames):
        rects = [_sprite_rect(s, t) for s in sprites]
        masks = [None if r is None else _pixel_mask(r, size) for r in rects]
        for sprite, mask in zip(sprites, masks):
            if mask is not None:
                video[t][mask] = sprite.color
        for i, (sprite, rect, mask) in enumerate(zip(sprites, rects, masks)):
            if rect is None or not mask.any():
                continue
            covered = np.zeros_like(mask)
            for later in masks[i + 1 :]:
                if later is not None:
                    covered |= later
            visible = (mask & ~covered).sum() / mask.sum()
            if visible < _VISIBLE_FRACTION:
                continue
            rois.append(
                RoiBox(t, float(rect[0]), float(rect[1]), float(rect[2]), float(rect[3]), sprite.tag)
            )

    return SynthVideo(video.astype(np.float32), rois, CLASSES.index(cls), int(seed))


def video_seed(base_seed: int, class_id: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, class_id, index]).generate_state(1, np.uint64)[0])


def _generate_job(args) -> SynthVideo:
    seed, cls, frames, size = args
    return generate(seed, cls, frames, size)


def build_dataset(
    base_seed: int,
    per_class: int,
    frames: int = 8,
    size: int = 32,
    classes=CLASSES,
    workers: int | None = None,
) -> list[SynthVideo]:
    """Equal counts per class, interleaved; video seeds derive from
    (base_seed, class, index) so the set is order- and worker-independent."""
    jobs = [
        (video_seed(base_seed, ci, idx), cls, frames, size)
        for idx in range(per_class)
        for ci, cls in enumerate(classes)
    ]
    if workers is None:
        workers = int(os.environ.get("TROIKIT_THREADS", "1"))
    workers = max(1, min(workers, len(jobs)))
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            return pool.map(_generate_job, jobs)
    return [_generate_job(job) for job in jobs]


# ---------------------------------------------------------------------------
# corruption transforms


def iou(a: RoiBox, b: RoiBox) -> float:
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.width() * a.height() + b.width() * b.height() - inter
    return inter / union if union > 0 else 0.0


def shift_for_iou(alpha: float) -> float:
    """Fraction of the box width to translate so that the shifted box
    overlaps the original at exactly the target ratio."""
    return (1.0 - alpha) / (1.0 + alpha)


def _shift_box(box: RoiBox, alpha: float) -> RoiBox:
    delta = shift_for_iou(alpha) * box.width()
    if box.x2 + delta <= 1.0:
        x1, x2 = box.x1 + delta, box.x2 + delta
    elif box.x1 - delta >= 0.0:
        x1, x2 = box.x1 - delta, box.x2 - delta
    else:
        x1, x2 = box.x1 + delta, min(box.x2 + delta, 1.0)  # clipped at the border
    return replace(box, x1=x1, x2=x2)


def corrupt_rois(rois, mode: str) -> list[RoiBox]:
    """Degrade a box list the way a worse detector would."""
    if mode == "drop-all":
        return []
    if mode == "drop-hands":
        return [b for b in rois if b.entity != "hand"]
    if mode == "drop-objects":
        return [b for b in rois if b.entity != "object"]
    match = re.fullmatch(r"iou@([0-9.]+)", mode)
    if not match:
        raise ConfigError(f"unknown corruption mode {mode!r}; expected one of {CORRUPT_MODES}")
    alpha = float(match.group(1))
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"corruption target IoU must be in (0, 1], got {alpha}")
    return [_shift_box(b, alpha) for b in rois]


# ---------------------------------------------------------------------------
# on-disk format: manifest plus one tensor file per video

MANIFEST_NAME = "manifest.txt"


def _format_boxes(rois) -> str:
    if not rois:
        return "-"
    return ";".join(f"{b.frame},{b.x1!r},{b.y1!r},{b.x2!r},{b.y2!r},{b.entity}" for b in rois)


def _parse_boxes(text: str) -> list[RoiBox]:
    if text == "-":
        return []
    boxes = []
    for part in text.split(";"):
        frame, x1, y1, x2, y2, entity = part.split(",")
        boxes.append(RoiBox(int(frame), float(x1), float(y1), float(x2), float(y2), entity))
    return boxes


def save_dataset(directory, videos, force: bool = False) -> Path:
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if manifest.exists() and not force:
        raise DataError(f"{manifest} already exists; pass force to overwrite")
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, video in enumerate(videos):
        fname = f"{i:05d}.bin"
        with open(directory / fname, "wb") as fh:
            write_tensor(fh, video.frames)
        lines.append(f"{fname}\t{video.label}\t{video.frames.shape[0]}\t{_format_boxes(video.rois)}")
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def load_dataset(directory) -> list[SynthVideo]:
    """Round-trips save_dataset bit-exactly (seeds are not stored)."""
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.exists():
        raise DataError(f"no manifest at {manifest}")
    videos = []
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        fname, label, frames, boxes = line.split("\t")
        with open(directory / fname, "rb") as fh:
            data = read_tensor(fh)
        if data.ndim != 4 or data.shape[0] != int(frames):
            raise DataError(f"{fname}: stored shape {data.shape} does not match manifest")
        videos.append(SynthVideo(data, _parse_boxes(boxes), int(label), 0))
    return videos
