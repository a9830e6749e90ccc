"""HTTP review service for human-in-the-loop annotation.

Model-proposed boxes (from a recorded detections file) are served next to
the current annotation records for each image; a reviewer edits them in
the browser UI and commits the verified list back. Commits are atomic
writes of the canonical annotation text, guarded by optimistic
concurrency: the client sends the content hash it last saw and a
mismatch is rejected with 409 so two reviewers cannot silently overwrite
each other. Review status per image (pending, proposed, verified) lives
in a JSON sidecar so the annotation files stay plain.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .annotations import (
    AnnotationError,
    AnnotationRecord,
    ClassList,
    parse_annotation,
    scan_dataset,
    write_annotation,
)
from .decode import read_detections
from .geometry import BoxNorm

STATE_FILENAME = "review_state.json"

PENDING = "pending"
PROPOSED = "proposed"
VERIFIED = "verified"

MEDIA_TYPES = {".jpg": "image/jpeg", ".jpeg": "image/jpeg", ".png": "image/png"}


class RecordModel(BaseModel):
    class_id: int
    cx: float
    cy: float
    w: float
    h: float


class AnnotationsPut(BaseModel):
    records: list[RecordModel]
    base_hash: str


def content_hash(path: Path) -> str:
    """Hash of the current annotation bytes; empty string when absent."""
    if not path.is_file():
        return ""
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _atomic_write(path: Path, data: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ReviewStore:
    """Per-image review status with a persisted sidecar."""

    def __init__(self, root: Path, rel_paths: list[str], proposed: set[str]):
        self.path = root / STATE_FILENAME
        self._lock = threading.Lock()
        persisted: dict[str, dict] = {}
        if self.path.is_file():
            persisted = json.loads(self.path.read_text(encoding="utf-8")).get("images", {})
        self.images: dict[str, dict] = {}
        for rel in rel_paths:
            if rel in persisted:
                self.images[rel] = persisted[rel]
            else:
                status = PROPOSED if rel in proposed else PENDING
                self.images[rel] = {"status": status, "provenance": None, "updated_at": None}

    def get(self, rel: str) -> dict:
        return self.images[rel]

    def mark_verified(self, rel: str, provenance: str) -> None:
        with self._lock:
            self.images[rel] = {
                "status": VERIFIED,
                "provenance": provenance,
                "updated_at": datetime.now(timezone.utc).isoformat(),
            }
            _atomic_write(self.path, json.dumps({"images": self.images}, indent=2) + "\n")


def create_app(
    root: str | Path,
    classes: ClassList,
    detections_path: str | Path | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    root = Path(root)
    index = scan_dataset(root, classes)
    entries = list(index.entries)
    rel_paths = [index.rel_path(e) for e in entries]
    proposals = read_detections(detections_path) if detections_path else {}
    store = ReviewStore(root, rel_paths, {r for r, d in proposals.items() if d})
    locks = [threading.Lock() for _ in entries]

    app = FastAPI(title="harborscan review service")

    def entry_or_404(image_id: int):
        if not 0 <= image_id < len(entries):
            raise HTTPException(status_code=404, detail=f"unknown image id {image_id}")
        return entries[image_id]

    def annotation_path(image_id: int) -> Path:
        return entries[image_id].image_path.with_suffix(".txt")

    def image_info(image_id: int) -> dict:
        entry = entries[image_id]
        rel = rel_paths[image_id]
        state = store.get(rel)
        return {
            "id": image_id,
            "path": rel,
            "width": entry.meta.width if entry.meta else None,
            "height": entry.meta.height if entry.meta else None,
            "status": state["status"],
            "provenance": state["provenance"],
            "updated_at": state["updated_at"],
        }

    @app.get("/api/classes")
    def get_classes():
        return {"names": list(classes.names)}

    @app.get("/api/images")
    def list_images(page: int = 1, page_size: int = 50, status: str | None = None):
        if page < 1 or page_size < 1:
            raise HTTPException(status_code=422, detail="page and page_size start at 1")
        ids = range(len(entries))
        if status is not None:
            ids = [i for i in ids if store.get(rel_paths[i])["status"] == status]
        else:
            ids = list(ids)
        start = (page - 1) * page_size
        return {
            "items": [image_info(i) for i in ids[start : start + page_size]],
            "total": len(ids),
            "page": page,
            "page_size": page_size,
        }

    @app.get("/api/images/{image_id}")
    def get_image(image_id: int):
        entry = entry_or_404(image_id)
        media = MEDIA_TYPES.get(entry.image_path.suffix.lower(), "application/octet-stream")
        return FileResponse(entry.image_path, media_type=media)

    @app.get("/api/images/{image_id}/annotations")
    def get_annotations(image_id: int):
        entry_or_404(image_id)
        path = annotation_path(image_id)
        records = []
        if path.is_file():
            try:
                records = parse_annotation(path.read_text(encoding="utf-8"), classes)
            except AnnotationError as err:
                raise HTTPException(status_code=500, detail=f"stored file invalid: {err}")
        return {
            "records": [
                {"class_id": r.class_id, "cx": r.box.cx, "cy": r.box.cy, "w": r.box.w, "h": r.box.h}
                for r in records
            ],
            "content_hash": content_hash(path),
            "status": store.get(rel_paths[image_id])["status"],
        }

    @app.get("/api/images/{image_id}/proposals")
    def get_proposals(image_id: int):
        entry_or_404(image_id)
        dets = proposals.get(rel_paths[image_id], [])
        return {
            "proposals": [
                {
                    "class_id": d.class_id,
                    "confidence": d.confidence,
                    "cx": d.box.cx,
                    "cy": d.box.cy,
                    "w": d.box.w,
                    "h": d.box.h,
                }
                for d in dets
            ]
        }

    @app.put("/api/images/{image_id}/annotations")
    def put_annotations(image_id: int, body: AnnotationsPut):
        entry_or_404(image_id)
        records = []
        for n, r in enumerate(body.records):
            if not 0 <= r.class_id < len(classes):
                raise HTTPException(
                    status_code=422, detail=f"record {n}: class id {r.class_id} out of range"
                )
            try:
                records.append(AnnotationRecord(r.class_id, BoxNorm(r.cx, r.cy, r.w, r.h)))
            except ValueError as err:
                raise HTTPException(status_code=422, detail=f"record {n}: {err}")
        path = annotation_path(image_id)
        with locks[image_id]:
            current = content_hash(path)
            if body.base_hash != current:
                raise HTTPException(
                    status_code=409,
                    detail={"message": "stale base hash", "current_hash": current},
                )
            _atomic_write(path, write_annotation(records))
            rel = rel_paths[image_id]
            provenance = "semi_automatic" if proposals.get(rel) else "manual"
            store.mark_verified(rel, provenance)
            new_hash = content_hash(path)
        return {"content_hash": new_hash, "status": VERIFIED}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
