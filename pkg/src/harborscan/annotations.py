"""Reader, writer, and validator for plain-text box annotation files.

Each image `<stem>.jpg|.png` pairs with a `<stem>.txt` holding one line
per object: `class_id cx cy w h`, with the box in normalized center
format. Class names live in a `.names` file, one name per line; the line
number is the class id. The writer emits a canonical form (single spaces,
six decimal places, LF endings) so artifacts are byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from PIL import Image

from .geometry import BoxNorm, ImageMeta

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


class AnnotationError(Exception):
    """Base for structured annotation-format failures."""

    def __init__(self, message: str, *, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MalformedLine(AnnotationError):
    """Wrong field count or a non-numeric field."""


class ClassOutOfRange(AnnotationError):
    """Class id is negative or not in the class list."""


class CoordOutOfRange(AnnotationError):
    """Center outside [0, 1] or size outside (0, 1]."""


@dataclass(frozen=True)
class ClassList:
    """Ordered category names; the index of a name is its class id."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.names:
            raise ValueError("class list is empty")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate class names")
        for name in self.names:
            if not name or name != name.strip():
                raise ValueError(f"bad class name: {name!r}")

    def __len__(self) -> int:
        return len(self.names)

    def name(self, class_id: int) -> str:
        return self.names[class_id]

    @classmethod
    def from_file(cls, path: str | Path) -> "ClassList":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(line.strip() for line in lines if line.strip()))


@dataclass(frozen=True)
class AnnotationRecord:
    """One ground-truth object: class id plus normalized box."""

    class_id: int
    box: BoxNorm

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"negative class id: {self.class_id}")


def _parse_line(line: str, n_classes: int, lineno: int | None = None) -> AnnotationRecord:
    fields = line.split()
    if len(fields) != 5:
        raise MalformedLine(f"expected 5 fields, got {len(fields)}", line=lineno)
    try:
        class_id = int(fields[0])
    except ValueError:
        raise MalformedLine(f"non-integer class id {fields[0]!r}", line=lineno) from None
    try:
        cx, cy, w, h = (float(f) for f in fields[1:])
    except ValueError:
        raise MalformedLine(f"non-numeric coordinate in {fields[1:]!r}", line=lineno) from None
    if not 0 <= class_id < n_classes:
        raise ClassOutOfRange(
            f"class id {class_id} outside 0..{n_classes - 1}", line=lineno
        )
    if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
        raise CoordOutOfRange(f"center ({cx}, {cy}) outside [0, 1]", line=lineno)
    if not (0.0 < w <= 1.0 and 0.0 < h <= 1.0):
        raise CoordOutOfRange(f"size ({w}, {h}) outside (0, 1]", line=lineno)
    return AnnotationRecord(class_id, BoxNorm(cx, cy, w, h))


def parse_annotation(text: str, classes: ClassList) -> list[AnnotationRecord]:
    """Parse the full content of one annotation file.

    Blank lines are skipped; tabs and repeated spaces are tolerated.
    Raises a structured :class:`AnnotationError` on the first bad line.
    """
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        records.append(_parse_line(line, len(classes), lineno))
    return records


def write_annotation(records: Iterable[AnnotationRecord]) -> str:
    """Serialize records to the canonical single-space, 6-decimal form."""
    lines = []
    for r in records:
        b = r.box
        lines.append(f"{r.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}\n")
    return "".join(lines)


@dataclass(frozen=True)
class DatasetEntry:
    """One image with its (possibly absent) annotation file and dimensions."""

    image_path: Path
    annotation_path: Path | None
    meta: ImageMeta | None


@dataclass(frozen=True)
class DatasetIndex:
    """Deterministic listing of a dataset directory tree."""

    root: Path
    entries: tuple[DatasetEntry, ...]
    class_list: ClassList

    def rel_path(self, entry: DatasetEntry) -> str:
        return entry.image_path.relative_to(self.root).as_posix()

    def annotated(self) -> tuple[DatasetEntry, ...]:
        return tuple(e for e in self.entries if e.annotation_path is not None)

    def iter_records(self) -> Iterator[tuple[DatasetEntry, list[AnnotationRecord]]]:
        """Yield (entry, records) for every annotated image, parsing strictly."""
        for entry in self.annotated():
            text = _read_text(entry.annotation_path)
            yield entry, parse_annotation(text, self.class_list)


def _read_text(path: Path) -> str:
    return path.read_bytes().decode("utf-8", errors="replace")


def _read_image_meta(path: Path) -> ImageMeta | None:
    try:
        with Image.open(path) as im:
            width, height = im.size
        return ImageMeta(width, height)
    except Exception:
        return None


def scan_dataset(root: str | Path, classes: ClassList) -> DatasetIndex:
    """Recursively pair image files with same-stem .txt annotations.

    Entries are sorted lexicographically by relative path, so the index
    is deterministic regardless of filesystem iteration order.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root is not a directory: {root}")
    images = [
        p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    ]
    images.sort(key=lambda p: p.relative_to(root).as_posix())
    entries = []
    for path in images:
        ann = path.with_suffix(".txt")
        entries.append(
            DatasetEntry(
                image_path=path,
                annotation_path=ann if ann.is_file() else None,
                meta=_read_image_meta(path),
            )
        )
    return DatasetIndex(root=root, entries=tuple(entries), class_list=classes)


# Issue kinds reported by validate_dataset.
MALFORMED_LINE = "malformed_line"
CLASS_OUT_OF_RANGE = "class_out_of_range"
COORD_OUT_OF_RANGE = "coord_out_of_range"
UNREADABLE_IMAGE = "unreadable_image"
UNREADABLE_ANNOTATION = "unreadable_annotation"
MISSING_ANNOTATION = "missing_annotation"
DUPLICATE_BOX = "duplicate_box"

_ERROR_KINDS = {
    MalformedLine: MALFORMED_LINE,
    ClassOutOfRange: CLASS_OUT_OF_RANGE,
    CoordOutOfRange: COORD_OUT_OF_RANGE,
}


@dataclass(frozen=True)
class Issue:
    path: str
    line: int | None
    kind: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    """All dataset quality findings; empty means every check passed."""

    issues: tuple[Issue, ...] = field(default_factory=tuple)

    def __bool__(self) -> bool:
        return bool(self.issues)

    @property
    def ok(self) -> bool:
        return not self.issues

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for issue in self.issues:
            out[issue.kind] = out.get(issue.kind, 0) + 1
        return out


def validate_dataset(idx: DatasetIndex) -> ValidationReport:
    """Check every entry: readable image, parsable in-range records, no duplicates."""
    issues: list[Issue] = []
    n_classes = len(idx.class_list)
    for entry in idx.entries:
        rel = idx.rel_path(entry)
        if entry.meta is None:
            issues.append(Issue(rel, None, UNREADABLE_IMAGE, "cannot read image header"))
        if entry.annotation_path is None:
            issues.append(Issue(rel, None, MISSING_ANNOTATION, "no annotation file"))
            continue
        ann_rel = entry.annotation_path.relative_to(idx.root).as_posix()
        try:
            text = _read_text(entry.annotation_path)
        except OSError as err:
            issues.append(Issue(ann_rel, None, UNREADABLE_ANNOTATION, str(err)))
            continue
        seen: dict[tuple, int] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = _parse_line(line, n_classes, lineno)
            except AnnotationError as err:
                issues.append(Issue(ann_rel, lineno, _ERROR_KINDS[type(err)], str(err)))
                continue
            key = (rec.class_id, rec.box.cx, rec.box.cy, rec.box.w, rec.box.h)
            if key in seen:
                issues.append(
                    Issue(
                        ann_rel,
                        lineno,
                        DUPLICATE_BOX,
                        f"repeats line {seen[key]}",
                    )
                )
            else:
                seen[key] = lineno
    return ValidationReport(tuple(issues))
