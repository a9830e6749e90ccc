"""Anchor priors: k-means over ground-truth box shapes, three per scale.

Shapes are (w, h) pairs in normalized units, treated as origin-centered
boxes. The clustering distance is 1 - IoU of those boxes, which is
scale-free, so anchors computed on normalized shapes transfer to any
input resolution. Centroid updates use the component-wise mean; because
the mean is not the exact minimizer of the IoU cost, an update that fails
to improve the mean cost terminates the loop instead of being applied,
which keeps the recorded cost trace non-increasing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class TooFewShapes(Exception):
    """Fewer shapes than requested clusters."""


class DegenerateShape(Exception):
    """A shape with non-positive width or height."""


class WrongAnchorCount(Exception):
    """An anchor set needs exactly nine anchors to span three scales."""


SCALE_STRIDES = (8, 16, 32)  # finest grid first


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 9
    max_iter: int = 300
    seed: int = 0
    tol: float = 0.0  # minimum cost improvement required to keep iterating
    metric: str = "iou"  # "iou" or "euclidean"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.metric not in ("iou", "euclidean"):
            raise ValueError(f"unknown metric: {self.metric}")


@dataclass(frozen=True)
class ClusterResult:
    """Centroids sorted ascending by area, with the accepted cost trace."""

    centroids: tuple[tuple[float, float], ...]
    cost_trace: tuple[float, ...]
    n_iter: int

    @property
    def mean_cost(self) -> float:
        return self.cost_trace[-1]


@dataclass(frozen=True)
class AnchorSet:
    """Nine (w, h) priors partitioned over three detection scales.

    Anchors are sorted ascending by area; the first triple belongs to the
    finest grid (stride 8), the last to the coarsest (stride 32).
    """

    anchors: tuple[tuple[float, float], ...]
    scale_assignment: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        if len(self.anchors) != 9:
            raise WrongAnchorCount(f"expected 9 anchors, got {len(self.anchors)}")
        flat = [i for triple in self.scale_assignment for i in triple]
        if sorted(flat) != list(range(9)):
            raise ValueError(f"scale assignment does not partition 0..8: {flat}")
        for w, h in self.anchors:
            if w <= 0 or h <= 0:
                raise DegenerateShape(f"non-positive anchor: ({w}, {h})")

    def for_stride(self, stride: int) -> tuple[tuple[float, float], ...]:
        triple = self.scale_assignment[SCALE_STRIDES.index(stride)]
        return tuple(self.anchors[i] for i in triple)


def pair_iou(a, b) -> float:
    """IoU of two origin-centered boxes given as (w, h) pairs."""
    inter = min(a[0], b[0]) * min(a[1], b[1])
    union = a[0] * a[1] + b[0] * b[1] - inter
    return inter / union


def _distances(shapes: np.ndarray, centroids: np.ndarray, metric: str) -> np.ndarray:
    """Distance matrix with one row per shape and one column per centroid."""
    if metric == "euclidean":
        diff = shapes[:, None, :] - centroids[None, :, :]
        return np.sqrt((diff * diff).sum(axis=2))
    inter = np.minimum(shapes[:, None, 0], centroids[None, :, 0]) * np.minimum(
        shapes[:, None, 1], centroids[None, :, 1]
    )
    areas_s = shapes[:, 0] * shapes[:, 1]
    areas_c = centroids[:, 0] * centroids[:, 1]
    union = areas_s[:, None] + areas_c[None, :] - inter
    return 1.0 - inter / union


def _init_centroids(shapes: np.ndarray, k: int, rng: np.random.Generator, metric: str) -> np.ndarray:
    """Seed with distinct shapes, weighting later picks by distance to the chosen."""
    pool = np.unique(shapes, axis=0)
    if len(pool) <= k:
        extra = k - len(pool)
        chosen = list(pool)
        if extra:
            chosen.extend(pool[rng.integers(0, len(pool), size=extra)])
        return np.array(chosen, dtype=np.float64)
    picks = [int(rng.integers(0, len(pool)))]
    for _ in range(k - 1):
        dist = _distances(pool, pool[picks], metric).min(axis=1)
        dist[picks] = 0.0
        total = dist.sum()
        if total <= 0.0:
            remaining = [i for i in range(len(pool)) if i not in picks]
            picks.append(int(rng.choice(remaining)))
            continue
        picks.append(int(rng.choice(len(pool), p=dist / total)))
    return pool[picks].astype(np.float64)


def cluster_shapes(shapes, cfg: ClusterConfig = ClusterConfig()) -> ClusterResult:
    """k-means over (w, h) shapes; deterministic for a given seed."""
    arr = np.asarray(shapes, dtype=np.float64).reshape(-1, 2)
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise DegenerateShape("all shapes must have positive finite w and h")
    if len(arr) < cfg.k:
        raise TooFewShapes(f"{len(arr)} shapes for k={cfg.k}")

    rng = np.random.default_rng(cfg.seed)
    centroids = _init_centroids(arr, cfg.k, rng, cfg.metric)
    dist = _distances(arr, centroids, cfg.metric)
    labels = dist.argmin(axis=1)
    cost = float(dist[np.arange(len(arr)), labels].mean())
    trace = [cost]

    n_iter = 0
    for _ in range(cfg.max_iter):
        n_iter += 1
        new_centroids = centroids.copy()
        per_shape = dist[np.arange(len(arr)), labels]
        used = np.zeros(len(arr), dtype=bool)
        for c in range(cfg.k):
            members = labels == c
            if members.any():
                new_centroids[c] = arr[members].mean(axis=0)
            else:
                # reseed an empty cluster at the worst-fit shape
                candidates = np.where(~used)[0]
                worst = candidates[per_shape[candidates].argmax()]
                new_centroids[c] = arr[worst]
                used[worst] = True
        new_dist = _distances(arr, new_centroids, cfg.metric)
        new_labels = new_dist.argmin(axis=1)
        new_cost = float(new_dist[np.arange(len(arr)), new_labels].mean())
        if new_cost > cost:
            break  # mean update stopped helping; keep the previous state
        improvement = cost - new_cost
        centroids, labels, dist, cost = new_centroids, new_labels, new_dist, new_cost
        trace.append(cost)
        if improvement <= cfg.tol:
            break

    ordered = sort_anchors((float(w), float(h)) for w, h in centroids)
    return ClusterResult(centroids=ordered, cost_trace=tuple(trace), n_iter=n_iter)


def sort_anchors(pairs) -> tuple[tuple[float, float], ...]:
    """Canonical anchor order: ascending area, ties by width then height."""
    return tuple(sorted(pairs, key=lambda p: (p[0] * p[1], p[0], p[1])))


def assign_scales(anchors) -> tuple[tuple[int, int, int], ...]:
    """Partition nine anchors into per-scale triples by ascending area.

    Ties in area break by width, then height. Index triples refer to the
    anchors sorted that way: (0,1,2) on the finest grid, (6,7,8) on the
    coarsest.
    """
    anchors = tuple(anchors)
    if len(anchors) != 9:
        raise WrongAnchorCount(f"expected 9 anchors, got {len(anchors)}")
    if sort_anchors(anchors) != anchors:
        raise ValueError("anchors must already be in canonical sorted order")
    return ((0, 1, 2), (3, 4, 5), (6, 7, 8))


def kmeans_anchors(shapes, cfg: ClusterConfig = ClusterConfig()) -> AnchorSet:
    """Cluster shapes into nine anchor priors with their scale assignment."""
    if cfg.k != 9:
        raise WrongAnchorCount(f"anchor sets need k=9, got k={cfg.k}")
    result = cluster_shapes(shapes, cfg)
    return AnchorSet(anchors=result.centroids, scale_assignment=assign_scales(result.centroids))


def write_anchor_files(anchor_set: AnchorSet, mean_cost: float, out_dir: str | Path,
                       metric: str = "iou") -> tuple[Path, Path]:
    """Write the anchor text file plus a JSON sidecar with assignment and cost."""
    out_dir = Path(out_dir)
    txt = out_dir / "anchors.txt"
    txt.write_text(
        "".join(f"{w:.6f},{h:.6f}\n" for w, h in anchor_set.anchors), encoding="utf-8"
    )
    sidecar = out_dir / "anchors.json"
    payload = {
        "anchors": [[w, h] for w, h in anchor_set.anchors],
        "scale_assignment": {
            str(stride): list(triple)
            for stride, triple in zip(SCALE_STRIDES, anchor_set.scale_assignment)
        },
        "mean_cost": mean_cost,
        "metric": metric,
    }
    sidecar.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return txt, sidecar


def read_anchor_file(path: str | Path) -> AnchorSet:
    """Load anchors from the nine-line `w,h` text format."""
    anchors = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'w,h', got {line!r}")
        anchors.append((float(parts[0]), float(parts[1])))
    return AnchorSet(anchors=tuple(anchors), scale_assignment=assign_scales(anchors))
