"""Detection quality metrics: matching, PR curves, AP, mAP, FNR, and FP/P.

Predictions are matched to ground truths per image and per class:
walking predictions in descending confidence, each one claims its
best-overlapping still-unmatched ground truth if that overlap reaches
the IoU threshold (true positive), otherwise it counts as a false
positive; leftover ground truths are false negatives. Cross-class
matches never happen, so a correctly localized but misclassified box
costs both an FP in the predicted class and an FN in the true one.

AP integrates the monotone (right-to-left max) precision envelope over
recall with all-points interpolation. Because ship datasets are heavily
unbalanced toward the negative class, the per-class rates FNR = FN/P and
FP/P are reported beside AP, with P = TP + FN the positive count.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .annotations import AnnotationRecord
from .decode import Detection
from .geometry import iou_norm

DEFAULT_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


class EmptyGroundTruth(Exception):
    """AP and rates are undefined for a class with no positives."""


class NoDefinedClasses(Exception):
    """mAP needs at least one class with a defined AP."""


@dataclass(frozen=True)
class ClassMatch:
    """Ranked outcomes and counts for one class at one IoU threshold."""

    outcomes: tuple[tuple[float, bool], ...]  # (confidence, is_true_positive)
    p: int  # ground-truth positives = TP + FN

    @property
    def tp(self) -> int:
        return sum(flag for _, flag in self.outcomes)

    @property
    def fp(self) -> int:
        return len(self.outcomes) - self.tp

    @property
    def fn(self) -> int:
        return self.p - self.tp


@dataclass(frozen=True)
class MatchResult:
    iou_threshold: float
    per_class: dict[int, ClassMatch]


@dataclass(frozen=True)
class PRCurve:
    """Recall/precision at every rank plus the envelope used for AP."""

    points: tuple[tuple[float, float], ...]
    envelope: tuple[float, ...]
    p: int


@dataclass(frozen=True)
class ClassMetrics:
    ap: float
    fnr: float
    fp_over_p: float
    recall: float
    precision: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class EvalReport:
    thresholds: tuple[float, ...]
    per_threshold: dict[float, dict[int, ClassMetrics]]
    maps: dict[float, float]


def _match_one_image(
    preds: Sequence[Detection], gts: Sequence[AnnotationRecord], iou_thr: float
) -> tuple[list[tuple[float, bool]], int]:
    """Greedy one-to-one matching for a single (image, class) group."""
    if gts:
        best_static = [
            max((iou_norm(det.box, gt.box) for gt in gts), default=0.0) for det in preds
        ]
    else:
        best_static = [0.0] * len(preds)
    # confidence ties break toward the better-overlapping prediction,
    # then input order
    order = sorted(
        range(len(preds)), key=lambda i: (-preds[i].confidence, -best_static[i], i)
    )
    taken = [False] * len(gts)
    outcomes = []
    for i in order:
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            v = iou_norm(preds[i].box, gt.box)
            if v > best_iou:
                best_iou, best_j = v, j
        if best_j >= 0 and best_iou >= iou_thr:
            taken[best_j] = True
            outcomes.append((preds[i].confidence, True))
        else:
            outcomes.append((preds[i].confidence, False))
    return outcomes, len(gts)


def match_predictions(
    preds_by_image: Mapping[str, Sequence[Detection]],
    gts_by_image: Mapping[str, Sequence[AnnotationRecord]],
    iou_threshold: float,
) -> MatchResult:
    """Match every image independently and merge into per-class rankings."""
    class_ids: set[int] = set()
    for dets in preds_by_image.values():
        class_ids.update(d.class_id for d in dets)
    for recs in gts_by_image.values():
        class_ids.update(r.class_id for r in recs)

    outcomes: dict[int, list[tuple[float, bool]]] = {c: [] for c in class_ids}
    positives: dict[int, int] = {c: 0 for c in class_ids}
    images = sorted(set(preds_by_image) | set(gts_by_image))
    for image in images:
        preds = preds_by_image.get(image, ())
        gts = gts_by_image.get(image, ())
        for c in class_ids:
            c_preds = [d for d in preds if d.class_id == c]
            c_gts = [g for g in gts if g.class_id == c]
            if not c_preds and not c_gts:
                continue
            image_outcomes, p = _match_one_image(c_preds, c_gts, iou_threshold)
            outcomes[c].extend(image_outcomes)
            positives[c] += p

    per_class = {}
    for c in class_ids:
        # global ranking across images; stable, so equal confidences keep
        # image order then per-image rank
        ranked = sorted(outcomes[c], key=lambda oc: -oc[0])
        per_class[c] = ClassMatch(outcomes=tuple(ranked), p=positives[c])
    return MatchResult(iou_threshold=iou_threshold, per_class=per_class)


def pr_curve(match: ClassMatch) -> PRCurve:
    """Recall/precision walk down the ranking, with the monotone envelope."""
    points = []
    tp = 0
    for rank, (_, flag) in enumerate(match.outcomes, start=1):
        tp += flag
        recall = tp / match.p if match.p else 0.0
        points.append((recall, tp / rank))
    envelope = []
    best = 0.0
    for _, precision in reversed(points):
        best = max(best, precision)
        envelope.append(best)
    envelope.reverse()
    return PRCurve(points=tuple(points), envelope=tuple(envelope), p=match.p)


def average_precision(curve: PRCurve) -> float:
    """Area under the envelope with all-points interpolation."""
    if curve.p == 0:
        raise EmptyGroundTruth("AP undefined without ground-truth positives")
    ap = 0.0
    prev_recall = 0.0
    for (recall, _), env in zip(curve.points, curve.envelope):
        if recall > prev_recall:
            ap += (recall - prev_recall) * env
            prev_recall = recall
    return ap


def mean_ap(aps: Sequence[float]) -> float:
    """Arithmetic mean over the classes whose AP is defined."""
    defined = [a for a in aps if a is not None]
    if not defined:
        raise NoDefinedClasses("no class has a defined AP")
    return sum(defined) / len(defined)


def class_rates(match: ClassMatch) -> ClassMetrics:
    """AP plus the unbalance-aware rates for one class.

    recall = TP/P and fnr = 1 - recall, so the identity fnr + recall = 1
    holds exactly; FN/P equals fnr up to one floating-point ulp.
    """
    if match.p == 0:
        raise EmptyGroundTruth("rates undefined without ground-truth positives")
    tp, fp = match.tp, match.fp
    recall = tp / match.p
    n_preds = len(match.outcomes)
    return ClassMetrics(
        ap=average_precision(pr_curve(match)),
        fnr=1.0 - recall,
        fp_over_p=fp / match.p,
        recall=recall,
        precision=tp / n_preds if n_preds else 0.0,
        tp=tp,
        fp=fp,
        fn=match.fn,
    )


def iou_sweep(
    preds_by_image: Mapping[str, Sequence[Detection]],
    gts_by_image: Mapping[str, Sequence[AnnotationRecord]],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> EvalReport:
    """Re-match and re-score the whole dataset at each IoU threshold."""
    per_threshold: dict[float, dict[int, ClassMetrics]] = {}
    maps: dict[float, float] = {}
    for thr in thresholds:
        result = match_predictions(preds_by_image, gts_by_image, thr)
        metrics = {
            c: class_rates(m) for c, m in sorted(result.per_class.items()) if m.p > 0
        }
        per_threshold[thr] = metrics
        if metrics:
            maps[thr] = mean_ap([m.ap for m in metrics.values()])
    return EvalReport(
        thresholds=tuple(thresholds), per_threshold=per_threshold, maps=maps
    )


def write_report_json(
    report: EvalReport, path: str | Path, class_names: Sequence[str] | None = None
) -> None:
    payload = {
        "thresholds": list(report.thresholds),
        "matching": "greedy confidence-descending one-to-one, best unmatched ground truth",
        "interpolation": "all_points",
        "results": [
            {
                "iou_threshold": thr,
                "map": report.maps.get(thr),
                "classes": [
                    {
                        "class_id": c,
                        "name": class_names[c] if class_names else None,
                        "ap": m.ap,
                        "fnr": m.fnr,
                        "fp_over_p": m.fp_over_p,
                        "recall": m.recall,
                        "precision": m.precision,
                        "tp": m.tp,
                        "fp": m.fp,
                        "fn": m.fn,
                    }
                    for c, m in sorted(report.per_threshold[thr].items())
                ],
            }
            for thr in report.thresholds
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_report_csv(
    report: EvalReport, path: str | Path, class_names: Sequence[str] | None = None
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["iou_threshold", "class_id", "class", "ap", "fnr", "fp_over_p", "tp", "fp", "fn"]
        )
        for thr in report.thresholds:
            for c, m in sorted(report.per_threshold[thr].items()):
                writer.writerow(
                    [
                        f"{thr:.2f}",
                        c,
                        class_names[c] if class_names else "",
                        f"{m.ap:.6f}",
                        f"{m.fnr:.6f}",
                        f"{m.fp_over_p:.6f}",
                        m.tp,
                        m.fp,
                        m.fn,
                    ]
                )
