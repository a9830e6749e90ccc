"""Pyramidal Lucas-Kanade optical flow and feature-point seeding.

Per tracked point, the local translation between two frames solves the
2x2 normal equations G d = b, where G accumulates products of spatial
gradients over a square window and b accumulates products of the
temporal difference with those gradients. The solve iterates with
bilinear subpixel sampling and runs coarse-to-fine over a box-filtered
image pyramid, doubling the estimate when descending a level, which
extends the usable motion range well beyond the window radius.

A point is lost, not an error, when its gradient matrix is near-singular
(the per-pixel minimum eigenvalue gate catches flat water and sky) or
when it drifts outside the frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BoxNorm


class FrameTooSmall(Exception):
    """Frames below 16x16 cannot support a pyramid."""


@dataclass(frozen=True)
class GrayFrame:
    """Single-channel frame with its position in the sequence."""

    pixels: np.ndarray  # (height, width), any real dtype
    index: int = 0

    def __post_init__(self) -> None:
        if self.pixels.ndim != 2:
            raise ValueError(f"expected a 2-D luminance buffer, got {self.pixels.shape}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Pyramid:
    """Level 0 is full resolution; each level above halves both sides."""

    levels: tuple[np.ndarray, ...]

    @property
    def base_shape(self) -> tuple[int, int]:
        return self.levels[0].shape


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luma of an (H, W, 3) uint8 image, rounded to nearest."""
    flat = rgb.astype(np.float64)
    y = 0.299 * flat[..., 0] + 0.587 * flat[..., 1] + 0.114 * flat[..., 2]
    return np.rint(y).astype(np.uint8)


def _halve(img: np.ndarray) -> np.ndarray:
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    trimmed = img[: 2 * h2, : 2 * w2]
    return (
        trimmed[0::2, 0::2] + trimmed[1::2, 0::2] + trimmed[0::2, 1::2] + trimmed[1::2, 1::2]
    ) / 4.0


def build_pyramid(frame: GrayFrame | np.ndarray, levels: int = 3) -> Pyramid:
    """Box-filtered half-resolution stack, capped so no level dips under 16 px."""
    pixels = frame.pixels if isinstance(frame, GrayFrame) else frame
    img = np.asarray(pixels, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D luminance buffer, got {img.shape}")
    if min(img.shape) < 16:
        raise FrameTooSmall(f"frame {img.shape[1]}x{img.shape[0]} is below 16x16")
    if levels < 1:
        raise ValueError(f"need at least one level, got {levels}")
    stack = [img]
    while len(stack) < levels and min(stack[-1].shape) // 2 >= 16:
        stack.append(_halve(stack[-1]))
    return Pyramid(levels=tuple(stack))


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Subpixel samples with replicated borders."""
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 2)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 2)
    fx = xs - x0
    fy = ys - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x0 + 1] * fx
    bottom = img[y0 + 1, x0] * (1.0 - fx) + img[y0 + 1, x0 + 1] * fx
    return top * (1.0 - fy) + bottom * fy


def lk_flow(
    prev: Pyramid,
    nxt: Pyramid,
    points,
    *,
    window: int = 15,
    max_iterations: int = 30,
    epsilon: float = 0.01,
    min_eigenvalue: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-point displacement from `prev` to `nxt`, with a tracked flag.

    Returns (flows, status): flows has shape (N, 2) in full-resolution
    pixels, status is False for points lost to the eigenvalue gate or to
    leaving the frame. The gate compares the minimum eigenvalue of G,
    divided by the window pixel count, against `min_eigenvalue` at full
    resolution.
    """
    if prev.base_shape != nxt.base_shape:
        raise ValueError("pyramids come from frames of different sizes")
    if window < 5 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 5, got {window}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    flows = np.zeros((n, 2), dtype=np.float64)
    status = np.ones(n, dtype=bool)
    if n == 0:
        return flows, status

    r = window // 2
    span = np.arange(-r, r + 1, dtype=np.float64)
    off_x, off_y = np.meshgrid(span, span)
    off_x = off_x.ravel()[None, :]
    off_y = off_y.ravel()[None, :]
    n_window = window * window

    depth = min(len(prev.levels), len(nxt.levels))
    g = np.zeros((n, 2), dtype=np.float64)
    for level in range(depth - 1, -1, -1):
        img_p = prev.levels[level]
        img_n = nxt.levels[level]
        grad_y, grad_x = np.gradient(img_p)
        h, w = img_p.shape
        p_level = pts / (2.0**level)

        px = p_level[:, 0:1] + off_x
        py = p_level[:, 1:2] + off_y
        window_p = _bilinear(img_p, px, py)
        ix = _bilinear(grad_x, px, py)
        iy = _bilinear(grad_y, px, py)
        gxx = (ix * ix).sum(axis=1)
        gxy = (ix * iy).sum(axis=1)
        gyy = (iy * iy).sum(axis=1)
        det = gxx * gyy - gxy * gxy

        if level == 0:
            trace = gxx + gyy
            min_eig = (trace - np.sqrt((gxx - gyy) ** 2 + 4.0 * gxy * gxy)) / 2.0
            status &= min_eig / n_window >= min_eigenvalue

        v = np.zeros((n, 2), dtype=np.float64)
        solvable = det > 1e-12
        active = status & solvable
        for _ in range(max_iterations):
            if not active.any():
                break
            shift_x = g[active, 0:1] + v[active, 0:1]
            shift_y = g[active, 1:2] + v[active, 1:2]
            window_n = _bilinear(img_n, px[active] + shift_x, py[active] + shift_y)
            diff = window_p[active] - window_n
            bx = (diff * ix[active]).sum(axis=1)
            by = (diff * iy[active]).sum(axis=1)
            d = det[active]
            dx = (gyy[active] * bx - gxy[active] * by) / d
            dy = (gxx[active] * by - gxy[active] * bx) / d
            v[active, 0] += dx
            v[active, 1] += dy
            moved = np.zeros(n, dtype=bool)
            moved[active] = np.hypot(dx, dy) >= epsilon
            # points whose updated position leaves the frame are lost
            nx = p_level[:, 0] + g[:, 0] + v[:, 0]
            ny = p_level[:, 1] + g[:, 1] + v[:, 1]
            inside = (nx >= 0.0) & (nx <= w - 1.0) & (ny >= 0.0) & (ny <= h - 1.0)
            lost = active & ~inside
            status &= ~lost
            active = active & moved & inside
        g = 2.0 * (g + v) if level > 0 else g + v
    flows[:] = g
    return flows, status


def min_eig_map(img: np.ndarray, block: int = 3) -> np.ndarray:
    """Minimum eigenvalue of the structure tensor summed over block x block."""
    grad_y, grad_x = np.gradient(np.asarray(img, dtype=np.float64))
    gxx = grad_x * grad_x
    gxy = grad_x * grad_y
    gyy = grad_y * grad_y
    r = block // 2
    pad = ((r, r), (r, r))

    def box_sum(a):
        padded = np.pad(a, pad, mode="edge")
        out = np.zeros_like(a)
        for dy in range(block):
            for dx in range(block):
                out += padded[dy : dy + a.shape[0], dx : dx + a.shape[1]]
        return out

    sxx, sxy, syy = box_sum(gxx), box_sum(gxy), box_sum(gyy)
    return ((sxx + syy) - np.sqrt((sxx - syy) ** 2 + 4.0 * sxy * sxy)) / 2.0


def seed_points(
    box: BoxNorm,
    frame: GrayFrame | np.ndarray,
    *,
    max_points: int = 25,
    window: int = 15,
    min_points: int = 6,
    quality: float = 0.01,
) -> np.ndarray:
    """Corner-like points inside a box, or a uniform grid when texture is poor.

    Candidates rank by the minimum eigenvalue of their local structure
    tensor and are accepted greedily with a minimum spacing of half the
    tracking window. Falls back to a 5x5 interior grid when fewer than
    `min_points` corners exist (for example on a flat patch). All points
    are strictly inside the frame.
    """
    pixels = frame.pixels if isinstance(frame, GrayFrame) else frame
    img = np.asarray(pixels, dtype=np.float64)
    h, w = img.shape
    x1 = max(1.0, (box.cx - box.w / 2.0) * w)
    y1 = max(1.0, (box.cy - box.h / 2.0) * h)
    x2 = min(w - 2.0, (box.cx + box.w / 2.0) * w)
    y2 = min(h - 2.0, (box.cy + box.h / 2.0) * h)
    if x2 <= x1 or y2 <= y1:
        return np.empty((0, 2), dtype=np.float64)

    eig = min_eig_map(img)
    ys, xs = np.mgrid[int(np.ceil(y1)) : int(np.floor(y2)) + 1, int(np.ceil(x1)) : int(np.floor(x2)) + 1]
    ys = ys.ravel()
    xs = xs.ravel()
    values = eig[ys, xs]
    floor = max(quality * values.max(), 1e-9) if values.size else 0.0
    keep = values > floor
    order = np.argsort(-values[keep], kind="stable")
    cand_x = xs[keep][order]
    cand_y = ys[keep][order]

    spacing = window / 2.0
    chosen: list[tuple[float, float]] = []
    for cx, cy in zip(cand_x, cand_y):
        if len(chosen) >= max_points:
            break
        if all((cx - px) ** 2 + (cy - py) ** 2 >= spacing**2 for px, py in chosen):
            chosen.append((float(cx), float(cy)))
    if len(chosen) >= min_points:
        return np.array(chosen, dtype=np.float64)

    # flat interior: fall back to a uniform 5x5 grid strictly inside the box
    gx = np.linspace(x1, x2, 7)[1:-1]
    gy = np.linspace(y1, y2, 7)[1:-1]
    grid = np.array([(x, y) for y in gy for x in gx], dtype=np.float64)
    return grid
