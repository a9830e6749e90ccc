"""Dataset statistics and the stratified train/test split.

Produces per-class object histograms, 2-D density grids over box shape
(w, h) and over (aspect ratio, normalized area), and an image-level split
that keeps per-class object proportions close to a target test fraction.
Grids and summaries export to CSV/JSON for external plotting; no figures
are rendered here.
"""

from __future__ import annotations

import csv
import json
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import AnnotationRecord, DatasetIndex
from .geometry import box_stats


class EmptyDataset(Exception):
    """No annotated images to operate on."""


@dataclass(frozen=True)
class ClassHistogram:
    """Object counts per class id."""

    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def fractions(self) -> tuple[float, ...]:
        total = self.total
        if total == 0:
            return tuple(0.0 for _ in self.counts)
        return tuple(c / total for c in self.counts)


@dataclass
class DensityGrid2D:
    """2-D histogram with an explicit out-of-range overflow counter.

    Bins are left-closed/right-open except the final bin on each axis,
    which is closed so the axis maximum is counted.
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    counts: np.ndarray  # shape (x_bins, y_bins), int64
    total: int = 0
    out_of_range: int = 0

    @classmethod
    def empty(cls, x_range, y_range, bins) -> "DensityGrid2D":
        x_bins, y_bins = bins
        if x_bins < 1 or y_bins < 1:
            raise ValueError(f"need at least one bin per axis, got {bins}")
        return cls(
            x_min=x_range[0],
            x_max=x_range[1],
            y_min=y_range[0],
            y_max=y_range[1],
            counts=np.zeros((x_bins, y_bins), dtype=np.int64),
        )

    @property
    def x_bins(self) -> int:
        return self.counts.shape[0]

    @property
    def y_bins(self) -> int:
        return self.counts.shape[1]

    def _bin(self, value, lo, hi, bins) -> int | None:
        if value < lo or value > hi:
            return None
        idx = int((value - lo) / (hi - lo) * bins)
        return min(idx, bins - 1)

    def add(self, x: float, y: float) -> None:
        self.total += 1
        ix = self._bin(x, self.x_min, self.x_max, self.x_bins)
        iy = self._bin(y, self.y_min, self.y_max, self.y_bins)
        if ix is None or iy is None:
            self.out_of_range += 1
        else:
            self.counts[ix, iy] += 1


@dataclass(frozen=True)
class SplitResult:
    """Image-level train/test partition with per-class object counts."""

    train: tuple[str, ...]
    test: tuple[str, ...]
    train_counts: tuple[int, ...]
    test_counts: tuple[int, ...]

    def test_share(self, class_id: int) -> float:
        total = self.train_counts[class_id] + self.test_counts[class_id]
        return self.test_counts[class_id] / total if total else 0.0


def histogram_from_records(records, n_classes: int) -> ClassHistogram:
    counts = [0] * n_classes
    for rec in records:
        counts[rec.class_id] += 1
    return ClassHistogram(tuple(counts))


def class_counts(idx: DatasetIndex) -> ClassHistogram:
    """Count every record in the dataset, background objects included."""
    counts = [0] * len(idx.class_list)
    for _, records in idx.iter_records():
        for rec in records:
            counts[rec.class_id] += 1
    return ClassHistogram(tuple(counts))


def density_wh(idx: DatasetIndex, bins=(50, 50), class_id: int | None = None) -> DensityGrid2D:
    """Density of ground-truth boxes in the (w, h) plane over [0,1] x [0,1]."""
    grid = DensityGrid2D.empty((0.0, 1.0), (0.0, 1.0), bins)
    for _, records in idx.iter_records():
        for rec in records:
            if class_id is not None and rec.class_id != class_id:
                continue
            grid.add(rec.box.w, rec.box.h)
    return grid


def density_ar_area(
    idx: DatasetIndex, bins=(80, 50), ar_max: float = 8.0, class_id: int | None = None
) -> DensityGrid2D:
    """Density in the (aspect ratio, normalized area) plane.

    Aspect ratios beyond ar_max land in the overflow counter rather than
    being clamped, so the grid total stays conserved.
    """
    grid = DensityGrid2D.empty((0.0, ar_max), (0.0, 1.0), bins)
    for _, records in idx.iter_records():
        for rec in records:
            if class_id is not None and rec.class_id != class_id:
                continue
            stats = box_stats(rec.box)
            grid.add(stats.ar, stats.area_norm)
    return grid


def _dominant_class(records: list[AnnotationRecord]) -> int:
    counter = Counter(rec.class_id for rec in records)
    # most frequent class wins; ties go to the lowest class id
    return min(counter, key=lambda c: (-counter[c], c))


def stratified_split(
    idx: DatasetIndex, test_fraction: float = 0.25, seed: int = 0
) -> SplitResult:
    """Partition annotated images into train/test, stratified by dominant class.

    Splitting is at image granularity so no image contributes boxes to both
    sides; per-class object fractions therefore match the target only
    roughly, especially for classes that ride along as background objects.
    Deterministic for a given seed.
    """
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError(f"test_fraction outside [0, 1]: {test_fraction}")
    per_image: dict[str, list[AnnotationRecord]] = {}
    for entry, records in idx.iter_records():
        if not records:
            raise ValueError(f"image has no records: {idx.rel_path(entry)}")
        per_image[idx.rel_path(entry)] = records
    if not per_image:
        raise EmptyDataset("no annotated images to split")

    groups: dict[int, list[str]] = {}
    for rel in sorted(per_image):
        groups.setdefault(_dominant_class(per_image[rel]), []).append(rel)

    rng = random.Random(seed)
    train: list[str] = []
    test: list[str] = []
    for class_id in sorted(groups):
        members = groups[class_id]
        rng.shuffle(members)
        n_test = int(len(members) * test_fraction + 0.5)
        test.extend(members[:n_test])
        train.extend(members[n_test:])
    train.sort()
    test.sort()

    n_classes = len(idx.class_list)
    side_counts = []
    for side in (train, test):
        counts = [0] * n_classes
        for rel in side:
            for rec in per_image[rel]:
                counts[rec.class_id] += 1
        side_counts.append(tuple(counts))
    return SplitResult(tuple(train), tuple(test), side_counts[0], side_counts[1])


def write_grid_csv(grid: DensityGrid2D, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_bin", "y_bin", "count"])
        for ix in range(grid.x_bins):
            for iy in range(grid.y_bins):
                writer.writerow([ix, iy, int(grid.counts[ix, iy])])


def write_summary_json(hist: ClassHistogram, idx: DatasetIndex, path: str | Path) -> None:
    fractions = hist.fractions
    payload = {
        "images": len(idx.entries),
        "annotated_images": len(idx.annotated()),
        "objects": hist.total,
        "classes": [
            {
                "class_id": i,
                "name": idx.class_list.name(i),
                "count": hist.counts[i],
                "fraction": fractions[i],
            }
            for i in range(len(idx.class_list))
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_split_lists(split: SplitResult, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    train_path = out_dir / "train.txt"
    test_path = out_dir / "test.txt"
    train_path.write_text("".join(p + "\n" for p in split.train), encoding="utf-8")
    test_path.write_text("".join(p + "\n" for p in split.test), encoding="utf-8")
    return train_path, test_path
