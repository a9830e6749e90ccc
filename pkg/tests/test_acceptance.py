"""Acceptance suite: one test per release criterion, at pinned tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to get one PASS line per
criterion. Every expected value is either trivial arithmetic or computed
by an independent oracle embedded in the test.
"""

import math
import time

import numpy as np
import pytest

from harborscan.anchors import ClusterConfig, cluster_shapes, pair_iou
from harborscan.annotations import (
    AnnotationError,
    AnnotationRecord,
    parse_annotation,
    write_annotation,
)
from harborscan.augment import AugmentSpec, augment, horizontal_flip
from harborscan.decode import DecodeParams, Detection, HeadConfig, decode_scale, nms
from harborscan.evaluation import average_precision, class_rates, match_predictions, mean_ap, pr_curve
from harborscan.flow import build_pyramid, lk_flow
from harborscan.geometry import BoxNorm, BoxPixel, box_stats, iou
from harborscan.tracking import SourceFrame, TrackerConfig, TrackState, propagate_box, run_pipeline

from conftest import SHIP_CLASSES
from test_decode import reference_nms
from test_evaluation import ap_oracle, match_from_flags
from test_flow import analytic_frame
from test_geometry import iou_monte_carlo, random_pixel_box
from test_tracking import StubBackend, moving_video


def ok(name):
    print(f"\nACCEPTANCE PASS: {name}")


def random_norm_box(rng, w_lo=0.1, w_hi=0.4):
    w, h = rng.uniform(w_lo, w_hi, size=2)
    cx = rng.uniform(w / 2, 1 - w / 2)
    cy = rng.uniform(h / 2, 1 - h / 2)
    return BoxNorm(cx, cy, w, h)


def test_map_arithmetic_reproduction():
    assert abs(mean_ap([0.92, 0.96, 0.71, 0.85]) - 0.86) <= 1e-12
    ok("mAP arithmetic: mean of the four per-class APs is 0.86 (tol 1e-12)")


def test_rate_identity_reproduction():
    cargo = class_rates(match_from_flags([True] * 94 + [False] * 10, p=100))
    assert cargo.fnr == pytest.approx(0.06, abs=1e-12)
    assert cargo.fp_over_p == pytest.approx(0.10, abs=1e-12)
    oil = class_rates(match_from_flags([True] * 75 + [False] * 36, p=100))
    assert oil.fnr == pytest.approx(0.25, abs=1e-12)
    assert oil.fp_over_p == pytest.approx(0.36, abs=1e-12)

    rng = np.random.default_rng(101)
    for _ in range(1000):
        p = int(rng.integers(1, 1000))
        tp = int(rng.integers(0, p + 1))
        fp = int(rng.integers(0, 300))
        rates = class_rates(match_from_flags([True] * tp + [False] * fp, p=p))
        assert rates.fnr + rates.recall == 1.0  # exact identity
    ok("rate identities: cargo/oil operating points and FNR = 1 - recall exact")


def test_ap_oracle_equivalence():
    rng = np.random.default_rng(103)
    start = time.perf_counter()
    checked = 0
    for _ in range(250):
        n_gt = int(rng.integers(1, 6))
        n_pred = int(rng.integers(0, 11))
        gts = {"img": [AnnotationRecord(0, random_norm_box(rng)) for _ in range(n_gt)]}
        preds = {
            "img": [
                Detection(0, float(rng.random()), random_norm_box(rng))
                for _ in range(n_pred)
            ]
        }
        match = match_predictions(preds, gts, 0.5).per_class[0]
        flags = [flag for _, flag in match.outcomes]
        assert average_precision(pr_curve(match)) == pytest.approx(
            ap_oracle(flags, match.p), abs=1e-9
        )
        checked += 1
    elapsed = time.perf_counter() - start
    assert checked >= 200 and elapsed < 5.0
    ok(f"AP envelope equals the rank-cut-point oracle on {checked} instances "
       f"(tol 1e-9, {elapsed:.2f}s)")


def test_nms_oracle_equivalence():
    rng = np.random.default_rng(107)
    params = DecodeParams(nms_iou_threshold=0.45)
    start = time.perf_counter()
    for _ in range(500):
        cands = [
            Detection(
                int(rng.integers(0, 3)),
                float(rng.integers(1, 11)) / 10.0,
                random_norm_box(rng, 0.05, 0.6),
            )
            for _ in range(int(rng.integers(0, 9)))
        ]
        survivors = nms(cands, params)
        assert {(d.class_id, d.box) for d in survivors} == reference_nms(cands, 0.45)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    ok(f"NMS survivors identical to the brute-force reference on 500 sets ({elapsed:.2f}s)")


def test_iou_properties():
    rng = np.random.default_rng(109)
    for _ in range(10_000):
        a = random_pixel_box(rng)
        b = random_pixel_box(rng)
        assert iou(a, b) == iou(b, a)
        assert iou(a, a) == 1.0
    assert iou(BoxPixel(0, 0, 1, 1), BoxPixel(5, 5, 6, 6)) == 0.0
    for _ in range(100):
        a = random_pixel_box(rng, min_side=20.0)
        b = random_pixel_box(rng, min_side=20.0)
        assert abs(iou_monte_carlo(a, b, 1_000_000, rng) - iou(a, b)) < 2e-2
    ok("IoU symmetry/identity/disjoint on 10^4 pairs; Monte-Carlo within 2e-2 on 100")


def test_decode_fixture():
    cfg = HeadConfig(input_size=416, strides=(32, 16, 8), boxes_per_cell=3, num_classes=4)
    anchors = ((0.15, 0.1), (0.35, 0.25), (0.7, 0.5))
    params = DecodeParams(confidence_threshold=0.2)
    raw = np.zeros((13, 13, 3, 9), dtype=np.float32)
    dets = decode_scale(raw, anchors, cfg, params)
    assert len(dets) == 13 * 13 * 3 * 4
    k = 0
    for gy in range(13):
        for gx in range(13):
            for b in range(3):
                for _ in range(4):
                    d = dets[k]
                    k += 1
                    # objectness sigmoid(0) = 0.5 exactly; class sigmoid too
                    assert d.confidence == 0.25
                    assert (d.box.w, d.box.h) == anchors[b]
                    assert d.box.cx == (0.5 + gx) / 13
                    assert d.box.cy == (0.5 + gy) / 13
    # moving the only hot cell relocates the center to exactly the formula
    # value at the new cell; pairwise shifts match to one ulp
    hot_params = DecodeParams(confidence_threshold=0.4)
    centers = {}
    for gy, gx in [(1, 1), (1, 9), (11, 1)]:
        hot = np.zeros((13, 13, 3, 9), dtype=np.float32)
        hot[..., 5:] = -25.0
        hot[gy, gx, 0, 4] = 5.0  # objectness only; t_x = t_y = 0
        hot[gy, gx, 0, 5] = 5.0
        (d,) = decode_scale(hot, anchors, cfg, hot_params)
        assert d.box.cx == (0.5 + gx) / 13
        assert d.box.cy == (0.5 + gy) / 13
        centers[(gy, gx)] = (d.box.cx, d.box.cy)
    assert centers[(1, 9)][0] - centers[(1, 1)][0] == pytest.approx(8 / 13, abs=1e-15)
    assert centers[(11, 1)][1] - centers[(1, 1)][1] == pytest.approx(10 / 13, abs=1e-15)
    ok("decode fixture: objectness exactly 0.5, anchor-sized boxes, cell-exact centers")


def test_anchor_clustering_properties():
    rng = np.random.default_rng(113)
    for trial in range(50):
        shapes = rng.uniform(0.02, 0.95, size=(int(rng.integers(20, 100)), 2))
        result = cluster_shapes(shapes, ClusterConfig(k=6, seed=trial))
        trace = result.cost_trace
        assert all(b <= a + 1e-15 for a, b in zip(trace, trace[1:]))

    shapes = rng.uniform(0.02, 0.95, size=(77, 2))
    a = cluster_shapes(shapes, ClusterConfig(k=9, seed=5))
    b = cluster_shapes(shapes, ClusterConfig(k=9, seed=5))
    assert a == b  # byte-exact determinism

    two = np.vstack(
        [
            np.column_stack([rng.uniform(0.08, 0.14, 40), rng.uniform(0.08, 0.14, 40)]),
            np.column_stack([rng.uniform(0.7, 0.9, 40), rng.uniform(0.3, 0.5, 40)]),
        ]
    )
    result = cluster_shapes(two, ClusterConfig(k=2, seed=0))
    centroids = [np.array(c) for c in result.centroids]
    assert centroids[0][0] < 0.2 < centroids[1][0]  # separated clusters recovered
    labels = [int(np.argmin([1.0 - pair_iou(s, c) for c in centroids])) for s in two]

    def cost_for(lbls):
        total = 0.0
        for c in range(2):
            members = two[[i for i, l in enumerate(lbls) if l == c]]
            if len(members):
                centroid = members.mean(axis=0)
                total += sum(1.0 - pair_iou(s, centroid) for s in members)
        return total / len(two)

    base = cost_for(labels)
    for i in range(len(two)):
        flipped = list(labels)
        flipped[i] = 1 - flipped[i]
        assert cost_for(flipped) >= base - 1e-12
    ok("anchor clustering: 50 monotone cost traces, byte-exact seeds, "
       "locally optimal two-cluster fixture")


def scale_clips(box, s):
    """Whether the center-anchored scaling pushes any corner off the canvas."""
    cx = 0.5 + (box.cx - 0.5) * s
    cy = 0.5 + (box.cy - 0.5) * s
    w, h = box.w * s, box.h * s
    return cx - w / 2 < 0 or cy - h / 2 < 0 or cx + w / 2 > 1 or cy + h / 2 > 1


def test_augmentation_properties():
    rng = np.random.default_rng(127)
    img = rng.integers(0, 256, size=(48, 64, 3), dtype=np.uint8)
    spec = AugmentSpec(scale_min=0.8, scale_max=1.2, flip_probability=0.5, seed=17)
    unclipped = 0
    for i in range(1000):
        w, h = rng.uniform(0.05, 0.5, size=2)
        cx = rng.uniform(w / 2, 1 - w / 2)
        cy = rng.uniform(h / 2, 1 - h / 2)
        before = AnnotationRecord(0, BoxNorm(cx, cy, w, h))
        sample = augment(img, (before,), spec, draw_index=i)
        if scale_clips(before.box, sample.transform.scale):
            continue
        (rec,) = sample.records
        unclipped += 1
        assert abs(box_stats(rec.box).ar - box_stats(before.box).ar) <= 1e-9
    assert unclipped > 500  # the check must actually exercise most draws

    records = (AnnotationRecord(1, BoxNorm(0.3, 0.4, 0.2, 0.1)),)
    once_img, once_recs = horizontal_flip(img, records)
    twice_img, twice_recs = horizontal_flip(once_img, once_recs)
    assert twice_img.tobytes() == img.tobytes()
    assert write_annotation(twice_recs) == write_annotation(records)

    identity = AugmentSpec(scale_min=1.0, scale_max=1.0, flip_probability=0.0, seed=3)
    sample = augment(img, records, identity, draw_index=0)
    assert np.array_equal(sample.image, img) and sample.records == records
    ok("augmentation: AR preserved to 1e-9 over 10^3 draws, double flip "
       "byte-identical, identity spec is the identity")


def test_lk_accuracy():
    start = time.perf_counter()
    points = np.array([[24.0, 20.0], [40.0, 44.0], [52.0, 18.0], [18.0, 50.0]])
    rng = np.random.default_rng(131)
    for _ in range(8):
        shift = tuple(rng.uniform(-3.0, 3.0, size=2))
        prev = build_pyramid(analytic_frame(), 3)
        nxt = build_pyramid(analytic_frame(shift=shift), 3)
        flows, status = lk_flow(prev, nxt, points, window=15)
        assert np.all(status)
        assert np.all(np.abs(flows[:, 0] - shift[0]) <= 0.25)
        assert np.all(np.abs(flows[:, 1] - shift[1]) <= 0.25)

    static = build_pyramid(analytic_frame(), 3)
    flows, status = lk_flow(static, static, points)
    assert np.all(status) and np.all(flows == 0.0)

    frames, boxes = moving_video(9, shift_per_frame=(2.0, 0.0))
    backend = StubBackend(
        {frames[k].image_id: [Detection(1, 0.9, boxes[k])] for k in range(0, 9, 3)}
    )
    outputs = list(run_pipeline(frames, backend, TrackerConfig(detect_every_n=3)))
    for k, obs in enumerate(outputs):
        assert len(obs) == 1
        assert abs(obs[0].box.cx - boxes[k].cx) * 96 <= 1.0
        assert abs(obs[0].box.cy - boxes[k].cy) * 96 <= 1.0
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    ok(f"LK: shifts within 0.25 px, static flow exactly zero, 9-frame run "
       f"within 1 px ({elapsed:.2f}s)")


def test_annotation_round_trip_and_fuzz():
    rng = np.random.default_rng(137)
    for _ in range(1000):
        n = int(rng.integers(0, 8))
        records = []
        for _ in range(n):
            box = BoxNorm(
                int(rng.integers(0, 10**6 + 1)) / 10**6,
                int(rng.integers(0, 10**6 + 1)) / 10**6,
                int(rng.integers(1, 10**6 + 1)) / 10**6,
                int(rng.integers(1, 10**6 + 1)) / 10**6,
            )
            records.append(AnnotationRecord(int(rng.integers(0, 4)), box))
        text = write_annotation(records)
        parsed = parse_annotation(text, SHIP_CLASSES)
        assert parsed == records  # parse . write = identity
        assert write_annotation(parsed) == text  # write . parse idempotent

    alphabet = "0123456789 .\t\n-+eEabcxyz\x00\xff"
    for _ in range(2000):
        text = "".join(rng.choice(list(alphabet), size=int(rng.integers(0, 60))))
        try:
            parse_annotation(text, SHIP_CLASSES)
        except AnnotationError:
            pass  # structured failure is the only acceptable failure
    ok("annotation round-trip identity/idempotence on 10^3 files; fuzz is crash-free")


def test_throughput_budgets():
    cfg = HeadConfig(input_size=416, strides=(32, 16, 8), boxes_per_cell=3, num_classes=4)
    anchors_by_grid = {
        13: ((0.4, 0.3), (0.6, 0.45), (0.85, 0.6)),
        26: ((0.15, 0.1), (0.2, 0.18), (0.3, 0.22)),
        52: ((0.03, 0.02), (0.06, 0.05), (0.1, 0.08)),
    }
    params = DecodeParams()
    rng = np.random.default_rng(139)
    tensors = []
    for grid in (13, 26, 52):
        raw = np.full((grid, grid, 3, 9), -8.0, dtype=np.float32)
        for _ in range(8):  # a realistic handful of confident cells per scale
            gy, gx, b = rng.integers(0, grid), rng.integers(0, grid), rng.integers(0, 3)
            raw[gy, gx, b, :] = rng.normal(0, 1, size=9)
            raw[gy, gx, b, 4] = 3.0
        tensors.append(raw)

    def frame_decode():
        cands = []
        for grid, raw in zip((13, 26, 52), tensors):
            cands.extend(decode_scale(raw, anchors_by_grid[grid], cfg, params))
        return nms(cands, params)

    frame_decode()  # warm-up
    times = []
    for _ in range(30):
        t0 = time.perf_counter()
        frame_decode()
        times.append(time.perf_counter() - t0)
    decode_ms = 1000 * sorted(times)[len(times) // 2]
    assert decode_ms < 5.0, f"decode+NMS took {decode_ms:.2f} ms"

    blobs = [
        (rng.uniform(40, 376), rng.uniform(40, 376), rng.uniform(4, 9), rng.uniform(80, 220))
        for _ in range(30)
    ]
    frame_a = analytic_frame(width=416, height=416, blobs=blobs)
    frame_b = analytic_frame(width=416, height=416, shift=(1.0, 0.5), blobs=blobs)
    points = np.column_stack([rng.uniform(30, 380, 25), rng.uniform(30, 380, 25)])
    track = TrackState(
        track_id=0,
        class_id=0,
        box=BoxNorm(0.5, 0.5, 0.5, 0.5),
        points=points,
        alive=np.ones(25, dtype=bool),
    )
    pyr_a = build_pyramid(frame_a, 3)

    def tracker_step():
        pyr_b = build_pyramid(frame_b, 3)
        flows, status = lk_flow(pyr_a, pyr_b, track.points, window=15)
        return propagate_box(track, flows, status, frame_b.shape)

    tracker_step()
    times = []
    for _ in range(12):
        t0 = time.perf_counter()
        tracker_step()
        times.append(time.perf_counter() - t0)
    step_ms = 1000 * sorted(times)[len(times) // 2]
    steps_per_s = 1000.0 / step_ms
    assert steps_per_s >= 25.0, f"tracker step {step_ms:.1f} ms ({steps_per_s:.1f}/s)"
    ok(f"throughput: decode+NMS {decode_ms:.2f} ms/frame, tracker {steps_per_s:.0f} steps/s")
