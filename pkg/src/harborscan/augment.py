"""Training-set enrichment: aspect-ratio-preserving scaling and horizontal flips.

Both transforms apply jointly to the image and its box records. Scaling
resamples the content by the same factor on both axes and keeps the
canvas size fixed: shrunk content sits centered on a gray-padded canvas,
grown content is center-cropped. Color is never touched, so augmented
frames stay photometrically realistic. Every draw is seeded and
replayable from its stored transform descriptor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .annotations import AnnotationRecord
from .geometry import BoxNorm, flip_h

VISIBILITY_THRESHOLD = 0.25  # minimum visible fraction of a scaled box


@dataclass(frozen=True)
class AugmentSpec:
    scale_min: float = 0.8
    scale_max: float = 1.2
    flip_probability: float = 0.5
    seed: int = 0
    pad_value: int = 114

    def __post_init__(self) -> None:
        if not 0.0 < self.scale_min <= self.scale_max:
            raise ValueError(f"bad scale range: [{self.scale_min}, {self.scale_max}]")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"bad flip probability: {self.flip_probability}")
        if not 0 <= self.pad_value <= 255:
            raise ValueError(f"bad pad value: {self.pad_value}")


@dataclass(frozen=True)
class TransformDescriptor:
    """Everything needed to replay one augmentation draw."""

    scale: float
    flipped: bool
    offset: tuple[int, int]  # content placement offset (x, y); negative = crop


@dataclass(frozen=True)
class AugmentedSample:
    image: np.ndarray
    records: tuple[AnnotationRecord, ...]
    transform: TransformDescriptor


def _scale_box(box: BoxNorm, s: float) -> BoxNorm | None:
    """Map a box through center-anchored scaling; None when mostly off-canvas."""
    cx = 0.5 + (box.cx - 0.5) * s
    cy = 0.5 + (box.cy - 0.5) * s
    w = box.w * s
    h = box.h * s
    x1, y1 = cx - w / 2.0, cy - h / 2.0
    x2, y2 = cx + w / 2.0, cy + h / 2.0
    cx1, cy1 = max(0.0, x1), max(0.0, y1)
    cx2, cy2 = min(1.0, x2), min(1.0, y2)
    if cx2 <= cx1 or cy2 <= cy1:
        return None
    visible = (cx2 - cx1) * (cy2 - cy1)
    if visible / (w * h) < VISIBILITY_THRESHOLD:
        return None
    if x1 >= 0.0 and y1 >= 0.0 and x2 <= 1.0 and y2 <= 1.0:
        # unclipped: keep the exact scaled size so the ratio w/h is untouched
        return BoxNorm(cx, cy, w, h)
    return BoxNorm(
        cx=(cx1 + cx2) / 2.0, cy=(cy1 + cy2) / 2.0, w=cx2 - cx1, h=cy2 - cy1
    )


def scale_preserve_ar(
    image: np.ndarray, records, s: float, pad_value: int = 114
) -> tuple[np.ndarray, tuple[AnnotationRecord, ...], tuple[int, int]]:
    """Resample content by s on both axes onto a same-sized canvas.

    Returns (image, surviving records, placement offset). Boxes map through
    the exact center-anchored affine, so their aspect ratio is preserved;
    the pixel placement rounds to whole pixels independently.
    """
    if s <= 0.0:
        raise ValueError(f"scale factor must be positive: {s}")
    height, width = image.shape[:2]
    new_records = tuple(
        AnnotationRecord(r.class_id, scaled)
        for r in records
        if (scaled := _scale_box(r.box, s)) is not None
    )
    if s == 1.0:
        return image.copy(), new_records, (0, 0)

    sw = max(1, round(width * s))
    sh = max(1, round(height * s))
    resized = np.asarray(
        Image.fromarray(image).resize((sw, sh), Image.BILINEAR), dtype=image.dtype
    )
    canvas = np.full_like(image, pad_value)
    ox = (width - sw) // 2
    oy = (height - sh) // 2
    src_x = max(0, -ox)
    src_y = max(0, -oy)
    dst_x = max(0, ox)
    dst_y = max(0, oy)
    copy_w = min(sw - src_x, width - dst_x)
    copy_h = min(sh - src_y, height - dst_y)
    canvas[dst_y : dst_y + copy_h, dst_x : dst_x + copy_w] = resized[
        src_y : src_y + copy_h, src_x : src_x + copy_w
    ]
    return canvas, new_records, (ox, oy)


def horizontal_flip(image: np.ndarray, records) -> tuple[np.ndarray, tuple[AnnotationRecord, ...]]:
    """Mirror the image about its vertical axis and reflect every box."""
    flipped = np.ascontiguousarray(image[:, ::-1])
    return flipped, tuple(AnnotationRecord(r.class_id, flip_h(r.box)) for r in records)


def apply_transform(
    image: np.ndarray, records, transform: TransformDescriptor, pad_value: int = 114
) -> tuple[np.ndarray, tuple[AnnotationRecord, ...]]:
    """Replay a stored descriptor against the source sample."""
    out_img, out_recs, _ = scale_preserve_ar(image, records, transform.scale, pad_value)
    if transform.flipped:
        out_img, out_recs = horizontal_flip(out_img, out_recs)
    return out_img, out_recs


def augment(image: np.ndarray, records, spec: AugmentSpec, draw_index: int) -> AugmentedSample:
    """One seeded augmentation draw, deterministic for (spec.seed, draw_index)."""
    rng = np.random.default_rng([spec.seed, draw_index])
    if spec.scale_min == spec.scale_max:
        s = spec.scale_min
        rng.uniform(spec.scale_min, spec.scale_max)  # keep the draw sequence fixed
    else:
        s = float(rng.uniform(spec.scale_min, spec.scale_max))
    flipped = bool(rng.random() < spec.flip_probability)

    out_img, out_recs, offset = scale_preserve_ar(image, records, s, spec.pad_value)
    if flipped:
        out_img, out_recs = horizontal_flip(out_img, out_recs)
    return AugmentedSample(
        image=out_img,
        records=out_recs,
        transform=TransformDescriptor(scale=s, flipped=flipped, offset=offset),
    )
