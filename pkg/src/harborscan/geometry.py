"""Box geometry: normalized/pixel box forms, IoU, and per-box shape statistics.

All boxes are axis-aligned. The normalized center format (cx, cy, w, h) is
the canonical annotation representation; the pixel corner format
(x1, y1, x2, y2) is used for overlap math and rendering. Every operation
here is a pure function over immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BoxNorm:
    """Box in normalized center format.

    (cx, cy) is the box center and (w, h) its size, all as fractions of the
    image dimensions. The center must lie inside the image and the size must
    be positive and at most the full image; the box itself may overhang the
    image edge, in which case :meth:`corners` clips it.
    """

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"box center out of range: ({self.cx}, {self.cy})")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"box size out of range: ({self.w}, {self.h})")

    def corners(self) -> tuple[float, float, float, float]:
        """Corner form (x1, y1, x2, y2) clipped to the unit square."""
        return (
            max(0.0, self.cx - self.w / 2.0),
            max(0.0, self.cy - self.h / 2.0),
            min(1.0, self.cx + self.w / 2.0),
            min(1.0, self.cy + self.h / 2.0),
        )


@dataclass(frozen=True)
class BoxPixel:
    """Box in pixel corner format: top-left (x1, y1), bottom-right (x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if self.x1 < 0 or self.y1 < 0:
            raise ValueError(f"negative corner: ({self.x1}, {self.y1})")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValueError(
                f"empty box: ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class ImageMeta:
    """Pixel dimensions of an image."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid image size: {self.width}x{self.height}")


@dataclass(frozen=True)
class BoxStats:
    """Shape statistics of one box: aspect ratio and normalized area."""

    ar: float
    area_norm: float


def to_pixel(b: BoxNorm, m: ImageMeta) -> BoxPixel:
    """Convert a normalized box to pixel corners, clipped to the image.

    Coordinates stay fractional; callers round only for rendering.
    """
    x1, y1, x2, y2 = b.corners()
    return BoxPixel(x1 * m.width, y1 * m.height, x2 * m.width, y2 * m.height)


def to_norm(p: BoxPixel, m: ImageMeta) -> BoxNorm:
    """Convert pixel corners back to the normalized center format."""
    return BoxNorm(
        cx=(p.x1 + p.x2) / 2.0 / m.width,
        cy=(p.y1 + p.y2) / 2.0 / m.height,
        w=(p.x2 - p.x1) / m.width,
        h=(p.y2 - p.y1) / m.height,
    )


def iou_corners(
    a: tuple[float, float, float, float], b: tuple[float, float, float, float]
) -> float:
    """IoU on raw corner tuples; the hot path under NMS and matching."""
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    if union <= 0.0:
        # degenerate zero-area boxes: defined as no overlap
        return 0.0
    return inter / union


def iou(a: BoxPixel, b: BoxPixel) -> float:
    """Intersection over union of two pixel boxes, in [0, 1]."""
    return iou_corners((a.x1, a.y1, a.x2, a.y2), (b.x1, b.y1, b.x2, b.y2))


def iou_norm(a: BoxNorm, b: BoxNorm) -> float:
    """IoU of two normalized boxes, computed on their clipped corner forms."""
    return iou_corners(a.corners(), b.corners())


def box_stats(b: BoxNorm) -> BoxStats:
    """Aspect ratio and normalized area, both on the stored fractional values.

    The aspect ratio w/h is dimensionless only when width and height are
    measured in the same units; on normalized values it compares fractions
    of the image sides. See :func:`aspect_ratio_pixel` for the pixel-space
    variant.
    """
    return BoxStats(ar=b.w / b.h, area_norm=b.w * b.h)


def aspect_ratio_pixel(b: BoxNorm, m: ImageMeta) -> float:
    """Aspect ratio of the box measured in pixels rather than fractions."""
    return (b.w * m.width) / (b.h * m.height)


def flip_h(b: BoxNorm) -> BoxNorm:
    """Mirror a box about the vertical axis of the image."""
    return BoxNorm(cx=1.0 - b.cx, cy=b.cy, w=b.w, h=b.h)
