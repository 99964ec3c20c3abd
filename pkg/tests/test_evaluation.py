import math

import numpy as np
import pytest

from mono3d import (
    Box3D,
    Detection,
    Difficulty,
    GroundTruth,
    UndefinedMetricError,
    average_precision,
    difficulty_of,
    evaluate_detections,
    iou_3d,
    mean_depth_error,
    rotated_iou_bev,
)


def monte_carlo_bev_iou(a: Box3D, b: Box3D, n: int, rng) -> float:
    """Independent area oracle: uniform point sampling over the joint bbox."""
    corners = []
    for box in (a, b):
        ct, st = math.cos(box.theta), math.sin(box.theta)
        du = np.array([ct, -st]) * box.l / 2
        dw = np.array([st, ct]) * box.w / 2
        c = np.array([box.x, box.z])
        corners.append(np.stack([c + du + dw, c - du + dw, c - du - dw, c + du - dw]))
    all_pts = np.vstack(corners)
    lo, hi = all_pts.min(axis=0), all_pts.max(axis=0)
    samples = rng.uniform(lo, hi, size=(n, 2))

    def inside(box, pts):
        ct, st = math.cos(box.theta), math.sin(box.theta)
        rel = pts - [box.x, box.z]
        lu = rel[:, 0] * ct - rel[:, 1] * st
        lw = rel[:, 0] * st + rel[:, 1] * ct
        return (np.abs(lu) <= box.l / 2) & (np.abs(lw) <= box.w / 2)

    in_a, in_b = inside(a, samples), inside(b, samples)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def random_box(rng) -> Box3D:
    return Box3D(
        x=rng.uniform(-3, 3), y=rng.uniform(0, 2), z=rng.uniform(8, 12),
        l=rng.uniform(1, 5), w=rng.uniform(1, 3), h=rng.uniform(1, 2),
        theta=rng.uniform(-math.pi, math.pi),
    )


class TestRotatedIouBev:
    def test_identical_boxes(self):
        b = Box3D(x=1, y=1, z=20, l=4, w=2, h=1.5, theta=0.7)
        assert rotated_iou_bev(b, b) == pytest.approx(1.0)

    def test_axis_aligned_offset(self):
        a = Box3D(x=0, y=0, z=10, l=1, w=1, h=1, theta=0)
        b = Box3D(x=0.5, y=0, z=10, l=1, w=1, h=1, theta=0)
        assert rotated_iou_bev(a, b) == pytest.approx(1 / 3)

    def test_rotated_45_degrees(self):
        a = Box3D(x=0, y=0, z=10, l=1, w=1, h=1, theta=0)
        b = Box3D(x=0, y=0, z=10, l=1, w=1, h=1, theta=math.pi / 4)
        mc = monte_carlo_bev_iou(a, b, 1_000_000, np.random.default_rng(0))
        assert rotated_iou_bev(a, b) == pytest.approx(0.7071, abs=0.005)
        assert rotated_iou_bev(a, b) == pytest.approx(mc, abs=0.005)

    def test_disjoint(self):
        a = Box3D(x=0, y=0, z=10, l=1, w=1, h=1, theta=0)
        b = Box3D(x=5, y=0, z=10, l=1, w=1, h=1, theta=0.3)
        assert rotated_iou_bev(a, b) == 0.0

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b = random_box(rng), random_box(rng)
            iou = rotated_iou_bev(a, b)
            assert 0.0 <= iou <= 1.0
            assert iou == pytest.approx(rotated_iou_bev(b, a), abs=1e-12)

    def test_rigid_transform_invariance(self):
        a = Box3D(x=0, y=0, z=10, l=4, w=2, h=1.5, theta=0.3)
        b = Box3D(x=1, y=0, z=11, l=3, w=2, h=1.5, theta=-0.2)
        base = rotated_iou_bev(a, b)
        dx, dz, dt = 3.0, -2.0, 0.9

        def moved(box):
            # yaw by +dt moves footprint points by [[ct, st], [-st, ct]] in
            # the (x, z) plane under the Y-down yaw convention
            ct, st = math.cos(dt), math.sin(dt)
            x = box.x * ct + box.z * st + dx
            z = -box.x * st + box.z * ct + dz
            return Box3D(x=x, y=box.y, z=z, l=box.l, w=box.w, h=box.h,
                         theta=box.theta + dt)

        assert rotated_iou_bev(moved(a), moved(b)) == pytest.approx(base, abs=1e-9)

    def test_monte_carlo_oracle_agreement(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a, b = random_box(rng), random_box(rng)
            mc = monte_carlo_bev_iou(a, b, 200_000, rng)
            assert rotated_iou_bev(a, b) == pytest.approx(mc, abs=0.01)


class TestIou3d:
    def test_identical(self):
        b = Box3D(x=0, y=1, z=10, l=4, w=2, h=1.5, theta=0.5)
        assert iou_3d(b, b) == pytest.approx(1.0)

    def test_disjoint_vertical_intervals(self):
        a = Box3D(x=0, y=0, z=10, l=2, w=2, h=1, theta=0)
        b = Box3D(x=0, y=5, z=10, l=2, w=2, h=1, theta=0)
        assert iou_3d(a, b) == 0.0

    def test_half_vertical_overlap(self):
        a = Box3D(x=0, y=0, z=10, l=2, w=2, h=1, theta=0)
        b = Box3D(x=0, y=0.5, z=10, l=2, w=2, h=1, theta=0)
        assert iou_3d(a, b) == pytest.approx(1 / 3)

    def test_equals_bev_iou_when_heights_align(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            a = random_box(rng)
            b = random_box(rng)
            b = Box3D(x=b.x, y=a.y, z=b.z, l=b.l, w=b.w, h=a.h, theta=b.theta)
            assert iou_3d(a, b) == pytest.approx(rotated_iou_bev(a, b), abs=1e-9)


class TestDifficulty:
    def gt(self, height, occ, trunc):
        return GroundTruth(box=Box3D(0, 1, 10, 4, 2, 1.5, 0),
                           bbox2d=(0, 0, 10, height), occlusion=occ, truncation=trunc)

    def test_easy(self):
        assert difficulty_of(self.gt(45, 0, 0.0)) == Difficulty.EASY
        assert difficulty_of(self.gt(40, 0, 0.15)) == Difficulty.EASY

    def test_moderate(self):
        assert difficulty_of(self.gt(30, 1, 0.2)) == Difficulty.MODERATE
        assert difficulty_of(self.gt(45, 1, 0.0)) == Difficulty.MODERATE

    def test_hard(self):
        assert difficulty_of(self.gt(25, 2, 0.5)) == Difficulty.HARD

    def test_ignored(self):
        assert difficulty_of(self.gt(20, 0, 0.0)) == Difficulty.IGNORED
        assert difficulty_of(self.gt(45, 3, 0.0)) == Difficulty.IGNORED


def make_gt(x, frame="0", height=50.0):
    return GroundTruth(box=Box3D(x, 1, 10, 4, 2, 1.5, 0),
                       bbox2d=(0, 0, 10, height), frame_id=frame)


def make_det(x, score, frame="0"):
    return Detection(box=Box3D(x, 1, 10, 4, 2, 1.5, 0), score=score, frame_id=frame)


class TestAveragePrecision:
    def test_perfect_detections(self):
        gts = [make_gt(0), make_gt(10)]
        dets = [make_det(0, 0.9), make_det(10, 0.8)]
        ap = average_precision(dets, gts, rotated_iou_bev, 0.7, Difficulty.MODERATE)
        assert ap == pytest.approx(1.0)

    def test_no_detections(self):
        assert average_precision([], [make_gt(0)], rotated_iou_bev, 0.5,
                                 Difficulty.MODERATE) == 0.0

    def test_two_gt_three_det_fixture(self):
        # ranks 1 and 3 are true positives, rank 2 is a false positive;
        # closed form: (6 * 1.0 + 5 * (2/3)) / 11
        gts = [make_gt(0), make_gt(10)]
        dets = [make_det(0, 0.9), make_det(100, 0.8), make_det(10, 0.7)]
        ap = average_precision(dets, gts, rotated_iou_bev, 0.5, Difficulty.MODERATE)
        assert ap == pytest.approx((6 + 5 * (2 / 3)) / 11, abs=1e-12)

    def test_score_rescaling_invariance(self):
        gts = [make_gt(0), make_gt(10)]
        dets = [make_det(0, 0.9), make_det(100, 0.5), make_det(10, 0.3)]
        base = average_precision(dets, gts, rotated_iou_bev, 0.5, Difficulty.MODERATE)
        rescaled = [Detection(box=d.box, score=2 * d.score + 7, frame_id=d.frame_id)
                    for d in dets]
        assert average_precision(rescaled, gts, rotated_iou_bev, 0.5,
                                 Difficulty.MODERATE) == pytest.approx(base)

    def test_ignored_gt_absorbs_detection(self):
        # a detection matching only an ignored (too small) gt must not be a FP
        gts = [make_gt(0), make_gt(10, height=20.0)]
        dets = [make_det(0, 0.9), make_det(10, 0.8)]
        ap = average_precision(dets, gts, rotated_iou_bev, 0.5, Difficulty.MODERATE)
        assert ap == pytest.approx(1.0)

    def test_harder_gts_ignored_in_easier_regime(self):
        gts = [make_gt(0), make_gt(10, height=30.0)]  # second gt is moderate
        dets = [make_det(0, 0.9)]
        ap = average_precision(dets, gts, rotated_iou_bev, 0.5, Difficulty.EASY)
        assert ap == pytest.approx(1.0)

    def test_duplicate_detection_is_fp(self):
        gts = [make_gt(0)]
        dets = [make_det(0, 0.9), make_det(0, 0.8)]
        ap = average_precision(dets, gts, rotated_iou_bev, 0.5, Difficulty.MODERATE)
        # recall 1 reached at precision 1; duplicates only lower later precision
        assert ap == pytest.approx(1.0)

    def test_multi_frame(self):
        gts = [make_gt(0, frame="a"), make_gt(0, frame="b")]
        dets = [make_det(0, 0.9, frame="a"), make_det(0, 0.8, frame="b")]
        assert average_precision(dets, gts, iou_3d, 0.5,
                                 Difficulty.MODERATE) == pytest.approx(1.0)


class TestMeanDepthError:
    def test_exact_predictions(self):
        boxes = [Box3D(0, 1, 10, 4, 2, 1.5, 0)]
        assert mean_depth_error(boxes, boxes, [(0, 0)]) == 0.0

    def test_two_pairs(self):
        preds = [Box3D(0, 1, 11, 4, 2, 1.5, 0), Box3D(0, 1, 22, 4, 2, 1.5, 0)]
        gts = [Box3D(0, 1, 10, 4, 2, 1.5, 0), Box3D(0, 1, 20, 4, 2, 1.5, 0)]
        assert mean_depth_error(preds, gts, [(0, 0), (1, 1)]) == pytest.approx(1.5)

    def test_empty_matching(self):
        with pytest.raises(UndefinedMetricError):
            mean_depth_error([], [], [])


class TestEvaluateDetections:
    def test_perfect_report(self):
        gts = [make_gt(0), make_gt(10, frame="1")]
        dets = [make_det(0, 1.0), make_det(10, 1.0, frame="1")]
        report = evaluate_detections(dets, gts)
        assert all(v == pytest.approx(1.0) for v in report.ap.values())
        assert report.mean_depth_error == pytest.approx(0.0)
        assert "IoU=0.7 AP_3D" in report.to_text()

    def test_empty_gt_raises(self):
        with pytest.raises(UndefinedMetricError):
            evaluate_detections([], [])
