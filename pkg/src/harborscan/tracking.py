"""Track-between-detections pipeline.

The detector is too slow for every video frame, so it runs on a fixed
cadence and optical flow carries its boxes through the frames in
between. On detector frames, fresh detections re-anchor existing tracks
by greedy IoU association; unmatched detections open new tracks and
tracks that miss two consecutive detector passes drop out. On
intermediate frames, each track's feature points advance by
Lucas-Kanade flow and the box follows the median translation and median
pairwise-distance-ratio scale of its surviving points, which tolerates
a large minority of bad point flows.

Every emitted object is tagged with its provenance: `detected` when the
box comes straight from the detector, `tracked` when propagated.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image

from .decode import Detection, DetectorBackend
from .flow import build_pyramid, lk_flow, luminance, seed_points
from .geometry import BoxNorm, iou_norm


@dataclass(frozen=True)
class TrackerConfig:
    pyramid_levels: int = 3
    window: int = 15
    max_iterations: int = 30
    epsilon: float = 0.01
    detect_every_n: int = 3
    reassoc_iou: float = 0.3
    min_alive_points: int = 6
    min_eigenvalue: float = 1e-4

    def __post_init__(self) -> None:
        if self.window < 5 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 5, got {self.window}")
        if self.detect_every_n < 1:
            raise ValueError(f"detect_every_n must be >= 1, got {self.detect_every_n}")
        if self.pyramid_levels < 1:
            raise ValueError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")
        if self.min_alive_points < 1:
            raise ValueError(f"min_alive_points must be >= 1, got {self.min_alive_points}")


@dataclass
class TrackState:
    """A tracked box with its feature points and detector provenance."""

    track_id: int
    class_id: int
    box: BoxNorm
    points: np.ndarray  # (M, 2) pixel positions
    alive: np.ndarray  # (M,) bool
    age: int = 0  # frames since the detector last confirmed this track
    confidence: float = 0.0
    misses: int = 0  # consecutive detector passes without a match


@dataclass(frozen=True)
class SourceFrame:
    index: int
    image_id: str
    pixels: np.ndarray  # (H, W) luminance


@dataclass(frozen=True)
class TrackObservation:
    frame_index: int
    track_id: int
    class_id: int
    source: str  # "detected" | "tracked"
    confidence: float
    box: BoxNorm


def propagate_box(
    track: TrackState,
    flows: np.ndarray,
    status: np.ndarray,
    frame_shape: tuple[int, int],
    *,
    min_alive_points: int = 6,
) -> TrackState | None:
    """Advance a track by its point flows; None when too few points survive.

    Translation is the component-wise median of the surviving flows;
    scale is the median ratio of pairwise point distances after/before.
    With more than half the points agreeing, arbitrary corruption of the
    rest cannot move the medians.
    """
    h, w = frame_shape
    new_points = track.points + flows
    inside = (
        (new_points[:, 0] >= 0.0)
        & (new_points[:, 0] <= w - 1.0)
        & (new_points[:, 1] >= 0.0)
        & (new_points[:, 1] <= h - 1.0)
    )
    alive = track.alive & status & inside
    n_alive = int(alive.sum())
    if n_alive < min_alive_points:
        return None

    tx = float(np.median(flows[alive, 0]))
    ty = float(np.median(flows[alive, 1]))
    scale = 1.0
    if n_alive >= 2:
        old = track.points[alive]
        new = new_points[alive]
        iu, ju = np.triu_indices(n_alive, k=1)
        d_old = np.hypot(old[iu, 0] - old[ju, 0], old[iu, 1] - old[ju, 1])
        d_new = np.hypot(new[iu, 0] - new[ju, 0], new[iu, 1] - new[ju, 1])
        valid = d_old > 1e-9
        if valid.any():
            scale = float(np.median(d_new[valid] / d_old[valid]))

    if tx == 0.0 and ty == 0.0 and scale == 1.0:
        box = track.box  # bit-stable on a static scene
    else:
        cx_px = track.box.cx * w + tx
        cy_px = track.box.cy * h + ty
        w_px = track.box.w * w * scale
        h_px = track.box.h * h * scale
        box = BoxNorm(
            cx=min(max(cx_px / w, 0.0), 1.0),
            cy=min(max(cy_px / h, 0.0), 1.0),
            w=min(max(w_px / w, 1e-9), 1.0),
            h=min(max(h_px / h, 1e-9), 1.0),
        )
    return TrackState(
        track_id=track.track_id,
        class_id=track.class_id,
        box=box,
        points=new_points,
        alive=alive,
        age=track.age,
        confidence=track.confidence,
        misses=track.misses,
    )


def _associate(
    tracks: Sequence[TrackState], detections: Sequence[Detection], min_iou: float
) -> tuple[dict[int, int], list[int], list[int]]:
    """Greedy best-IoU pairing. Returns (track->det, new det idxs, lost track idxs)."""
    pairs = []
    for ti, track in enumerate(tracks):
        for di, det in enumerate(detections):
            v = iou_norm(track.box, det.box)
            if v >= min_iou:
                pairs.append((-v, ti, di))
    pairs.sort()
    matched: dict[int, int] = {}
    used_dets: set[int] = set()
    for _, ti, di in pairs:
        if ti in matched or di in used_dets:
            continue
        matched[ti] = di
        used_dets.add(di)
    unmatched_dets = [di for di in range(len(detections)) if di not in used_dets]
    unmatched_tracks = [ti for ti in range(len(tracks)) if ti not in matched]
    return matched, unmatched_dets, unmatched_tracks


def _anchored_track(
    track_id: int, det: Detection, gray: np.ndarray, cfg: TrackerConfig, age: int = 0
) -> TrackState:
    points = seed_points(
        det.box, gray, window=cfg.window, min_points=cfg.min_alive_points
    )
    return TrackState(
        track_id=track_id,
        class_id=det.class_id,
        box=det.box,
        points=points,
        alive=np.ones(len(points), dtype=bool),
        age=age,
        confidence=det.confidence,
        misses=0,
    )


def run_pipeline(
    frames: Iterable[SourceFrame], backend: DetectorBackend, cfg: TrackerConfig = TrackerConfig()
) -> Iterator[list[TrackObservation]]:
    """Yield one observation list per frame, in frame order.

    The backend runs on frames whose index is a multiple of
    cfg.detect_every_n; other frames advance every live track by optical
    flow. Track ids are unique within the run.
    """
    tracks: list[TrackState] = []
    next_id = 0
    prev_pyramid = None
    for frame in frames:
        gray = frame.pixels
        pyramid = build_pyramid(gray, cfg.pyramid_levels)
        if prev_pyramid is not None and tracks:
            all_points = np.concatenate([t.points for t in tracks])
            flows, status = lk_flow(
                prev_pyramid,
                pyramid,
                all_points,
                window=cfg.window,
                max_iterations=cfg.max_iterations,
                epsilon=cfg.epsilon,
                min_eigenvalue=cfg.min_eigenvalue,
            )
            survivors = []
            offset = 0
            for track in tracks:
                m = len(track.points)
                updated = propagate_box(
                    track,
                    flows[offset : offset + m],
                    status[offset : offset + m],
                    gray.shape,
                    min_alive_points=cfg.min_alive_points,
                )
                offset += m
                if updated is not None:
                    survivors.append(updated)
            tracks = survivors
        for track in tracks:
            track.age += 1

        detected_ids: set[int] = set()
        if frame.index % cfg.detect_every_n == 0:
            detections = backend.detect(frame.image_id)
            matched, unmatched_dets, unmatched_tracks = _associate(
                tracks, detections, cfg.reassoc_iou
            )
            new_tracks: list[TrackState] = []
            for ti, track in enumerate(tracks):
                if ti in matched:
                    det = detections[matched[ti]]
                    new_tracks.append(_anchored_track(track.track_id, det, gray, cfg))
                    detected_ids.add(track.track_id)
                else:
                    track.misses += 1
                    if track.misses < 2:
                        new_tracks.append(track)
            for di in unmatched_dets:
                new_tracks.append(_anchored_track(next_id, detections[di], gray, cfg))
                detected_ids.add(next_id)
                next_id += 1
            tracks = new_tracks

        observations = [
            TrackObservation(
                frame_index=frame.index,
                track_id=t.track_id,
                class_id=t.class_id,
                source="detected" if t.track_id in detected_ids else "tracked",
                confidence=t.confidence,
                box=t.box,
            )
            for t in sorted(tracks, key=lambda t: t.track_id)
        ]
        yield observations
        prev_pyramid = pyramid


# --- frame sources and output serialization --------------------------------


def _load_gray(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return luminance(arr)


def frames_from_dir(directory: str | Path) -> Iterator[SourceFrame]:
    """Numbered image files (e.g. 000123.png) in index order."""
    directory = Path(directory)
    numbered = []
    for path in directory.iterdir():
        if path.suffix.lower() not in (".png", ".jpg", ".jpeg"):
            continue
        match = re.fullmatch(r"0*(\d+)", path.stem)
        if match:
            numbered.append((int(match.group(1)), path))
    numbered.sort()
    for index, path in numbered:
        yield SourceFrame(index=index, image_id=path.name, pixels=_load_gray(path))


def frames_from_manifest(manifest_path: str | Path) -> Iterator[SourceFrame]:
    """JSON manifest: {"frames": [{"index": 0, "path": "relative.png"}, ...]}."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    entries = sorted(manifest["frames"], key=lambda e: e["index"])
    for entry in entries:
        path = manifest_path.parent / entry["path"]
        yield SourceFrame(
            index=int(entry["index"]), image_id=str(entry["path"]), pixels=_load_gray(path)
        )


def format_observation_line(obs: TrackObservation) -> str:
    b = obs.box
    return (
        f'{{"frame": {obs.frame_index}, "track_id": {obs.track_id}, '
        f'"class_id": {obs.class_id}, "source": {json.dumps(obs.source)}, '
        f'"confidence": {obs.confidence:.6f}, "cx": {b.cx:.6f}, "cy": {b.cy:.6f}, '
        f'"w": {b.w:.6f}, "h": {b.h:.6f}}}\n'
    )


def write_observations(path: str | Path, per_frame: Iterable[list[TrackObservation]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for observations in per_frame:
            for obs in observations:
                fh.write(format_observation_line(obs))
