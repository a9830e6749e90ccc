"""Detection-head decoding, non-maximal suppression, and detector backends.

A detector produces, per scale, a grid of cells where each cell predicts
B boxes as offsets against that scale's anchor priors: the box center is
the sigmoid-squashed offset within the cell, the size is the anchor
scaled by the exponential of the raw size logits, and the confidence is
the objectness sigmoid times the per-class sigmoid. Decoding turns those
tensors into concrete detections; NMS then keeps only the
highest-confidence box among near-duplicates of the same class.

Actual network inference stays behind the DetectorBackend protocol so the
toolkit carries no ML-framework dependency: the replay backend reads a
detections file, the tensor backend decodes serialized head outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .anchors import AnchorSet
from .geometry import BoxNorm, iou_corners


class ShapeMismatch(Exception):
    """A head tensor does not match the configured grid layout."""


class BackendUnavailable(Exception):
    """The backend's data source cannot be opened."""


class MissingEntry(Exception):
    """The backend has no stored output for the requested image."""


class DetectionsFormatError(Exception):
    """A detections file line is not valid."""


@dataclass(frozen=True)
class HeadConfig:
    """Grid layout of the detection head."""

    input_size: int = 416
    strides: tuple[int, ...] = (32, 16, 8)
    boxes_per_cell: int = 3
    num_classes: int = 4

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise ValueError(f"need at least one class, got {self.num_classes}")
        for stride in self.strides:
            if self.input_size % stride:
                raise ValueError(
                    f"input size {self.input_size} not divisible by stride {stride}"
                )

    @property
    def grid_sizes(self) -> tuple[int, ...]:
        return tuple(self.input_size // s for s in self.strides)

    @property
    def depth(self) -> int:
        return 5 + self.num_classes


@dataclass(frozen=True)
class DecodeParams:
    confidence_threshold: float = 0.25
    nms_iou_threshold: float = 0.45

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError(f"bad confidence threshold: {self.confidence_threshold}")
        if not 0.0 <= self.nms_iou_threshold <= 1.0:
            raise ValueError(f"bad NMS IoU threshold: {self.nms_iou_threshold}")


@dataclass(frozen=True)
class Detection:
    """One predicted object."""

    class_id: int
    confidence: float
    box: BoxNorm

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"negative class id: {self.class_id}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence outside [0, 1]: {self.confidence}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sigmoid_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


def decode_scale(
    raw: np.ndarray,
    anchors: Sequence[tuple[float, float]],
    cfg: HeadConfig,
    params: DecodeParams,
) -> list[Detection]:
    """Decode one scale's S x S x B x (5+C) tensor into candidate detections.

    For the cell at column gx, row gy with anchor (pw, ph):
    center = ((sigmoid(tx) + gx) / S, (sigmoid(ty) + gy) / S),
    size = (pw * exp(tw), ph * exp(th)) capped at the full image,
    confidence = sigmoid(to) * sigmoid(class logit), one candidate per
    class strictly above the confidence threshold. Candidates come out in
    row-major cell order, then anchor, then class.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 4 or raw.shape[0] != raw.shape[1]:
        raise ShapeMismatch(f"expected (S, S, B, 5+C), got {raw.shape}")
    grid = raw.shape[0]
    if grid not in cfg.grid_sizes:
        raise ShapeMismatch(f"grid {grid} not one of {cfg.grid_sizes}")
    if raw.shape[2] != cfg.boxes_per_cell or raw.shape[3] != cfg.depth:
        raise ShapeMismatch(
            f"expected (*, *, {cfg.boxes_per_cell}, {cfg.depth}), got {raw.shape}"
        )
    if len(anchors) != cfg.boxes_per_cell:
        raise ShapeMismatch(f"expected {cfg.boxes_per_cell} anchors, got {len(anchors)}")

    objectness = _sigmoid(raw[..., 4])
    # class sigmoid <= 1, so cells whose objectness is already at or below
    # the threshold can never produce a candidate
    hot = np.argwhere(objectness > params.confidence_threshold)
    detections: list[Detection] = []
    for gy, gx, b in hot:
        cell = raw[gy, gx, b]
        obj = objectness[gy, gx, b]
        class_conf = obj * _sigmoid(cell[5:])
        keep = np.nonzero(class_conf > params.confidence_threshold)[0]
        if keep.size == 0:
            continue
        pw, ph = anchors[b]
        bx = (_sigmoid_scalar(cell[0]) + gx) / grid
        by = (_sigmoid_scalar(cell[1]) + gy) / grid
        bw = min(1.0, pw * math.exp(cell[2]))
        bh = min(1.0, ph * math.exp(cell[3]))
        box = BoxNorm(bx, by, bw, bh)
        for c in keep:
            detections.append(Detection(int(c), float(class_conf[c]), box))
    return detections


def _nms_key(item: tuple[int, Detection]):
    index, det = item
    return (-det.confidence, -(det.box.w * det.box.h), index)


def nms(candidates: Sequence[Detection], params: DecodeParams) -> list[Detection]:
    """Greedy per-class suppression of overlapping candidates.

    Within each class, candidates are visited by descending confidence
    (ties prefer the larger box, then the earlier candidate); a kept box
    suppresses every remaining same-class box with IoU at or above the
    threshold. Survivors come back in that same global order.
    """
    corners = [det.box.corners() for det in candidates]
    by_class: dict[int, list[tuple[int, Detection]]] = {}
    for index, det in enumerate(candidates):
        by_class.setdefault(det.class_id, []).append((index, det))

    kept: list[tuple[int, Detection]] = []
    for class_id in sorted(by_class):
        pool = sorted(by_class[class_id], key=_nms_key)
        while pool:
            best = pool.pop(0)
            kept.append(best)
            best_corners = corners[best[0]]
            pool = [
                item
                for item in pool
                if iou_corners(best_corners, corners[item[0]]) < params.nms_iou_threshold
            ]
    kept.sort(key=_nms_key)
    return [det for _, det in kept]


class DetectorBackend(Protocol):
    def detect(self, image_id: str) -> list[Detection]: ...


def detect(image_id: str, backend: DetectorBackend) -> list[Detection]:
    """Run a backend and normalize its output order to descending confidence."""
    detections = backend.detect(image_id)
    return [det for _, det in sorted(enumerate(detections), key=_nms_key)]


# --- detections file (JSON lines, canonical 6-decimal formatting) ---------


def format_detection_line(image_id: str, det: Detection) -> str:
    b = det.box
    return (
        f'{{"image": {json.dumps(image_id)}, "class_id": {det.class_id}, '
        f'"confidence": {det.confidence:.6f}, "cx": {b.cx:.6f}, "cy": {b.cy:.6f}, '
        f'"w": {b.w:.6f}, "h": {b.h:.6f}}}\n'
    )


def write_detections(path: str | Path, per_image: dict[str, Sequence[Detection]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for image_id in sorted(per_image):
            for det in per_image[image_id]:
                fh.write(format_detection_line(image_id, det))


def parse_detection_line(line: str, lineno: int | None = None) -> tuple[str, Detection]:
    where = "" if lineno is None else f"line {lineno}: "
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as err:
        raise DetectionsFormatError(f"{where}{err}") from None
    try:
        det = Detection(
            class_id=int(obj["class_id"]),
            confidence=float(obj["confidence"]),
            box=BoxNorm(
                float(obj["cx"]), float(obj["cy"]), float(obj["w"]), float(obj["h"])
            ),
        )
        return str(obj["image"]), det
    except (KeyError, TypeError, ValueError) as err:
        raise DetectionsFormatError(f"{where}{err}") from None


def read_detections(path: str | Path) -> dict[str, list[Detection]]:
    per_image: dict[str, list[Detection]] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        image_id, det = parse_detection_line(line, lineno)
        per_image.setdefault(image_id, []).append(det)
    return per_image


class ReplayBackend:
    """Serves previously recorded detections keyed by image id.

    Images without recorded lines simply have no detections; only a
    missing or unreadable file is an error.
    """

    def __init__(self, path: str | Path):
        try:
            self._per_image = read_detections(path)
        except OSError as err:
            raise BackendUnavailable(f"cannot read detections file: {err}") from None

    def detect(self, image_id: str) -> list[Detection]:
        return list(self._per_image.get(image_id, ()))


# --- tensor fixtures: serialized head outputs ------------------------------


def write_tensor_fixture(
    out_dir: str | Path, per_image: dict[str, Sequence[np.ndarray]], cfg: HeadConfig
) -> Path:
    """Dump per-image head tensors as little-endian float32 with a manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"input_size": cfg.input_size, "images": {}}
    for n, (image_id, tensors) in enumerate(sorted(per_image.items())):
        scales = []
        for arr in tensors:
            arr = np.asarray(arr, dtype="<f4")
            name = f"img{n:04d}_s{arr.shape[0]}.bin"
            arr.tofile(out_dir / name)
            scales.append({"file": name, "shape": list(arr.shape)})
        manifest["images"][image_id] = scales
    manifest_path = out_dir / "tensors.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


class TensorBackend:
    """Decodes serialized head tensors through decode_scale + nms."""

    def __init__(
        self,
        manifest_path: str | Path,
        anchor_set: AnchorSet,
        cfg: HeadConfig,
        params: DecodeParams,
    ):
        self._dir = Path(manifest_path).parent
        try:
            manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
            self._images: dict = manifest["images"]
        except (OSError, json.JSONDecodeError, KeyError) as err:
            raise BackendUnavailable(f"cannot read tensor manifest: {err}") from None
        self._anchors = anchor_set
        self._cfg = cfg
        self._params = params

    def detect(self, image_id: str) -> list[Detection]:
        if image_id not in self._images:
            raise MissingEntry(f"no tensors recorded for {image_id!r}")
        candidates: list[Detection] = []
        entries = sorted(self._images[image_id], key=lambda e: e["shape"][0])
        for entry in entries:
            shape = tuple(entry["shape"])
            raw = np.fromfile(self._dir / entry["file"], dtype="<f4").reshape(shape)
            stride = self._cfg.input_size // shape[0]
            anchors = self._anchors.for_stride(stride)
            candidates.extend(decode_scale(raw, anchors, self._cfg, self._params))
        return nms(candidates, self._params)
