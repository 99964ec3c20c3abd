"""Detection metrics: rotated BEV IoU, 3D IoU, difficulty regimes, AP, depth error.

Rotated-rectangle overlap is computed by Sutherland-Hodgman clipping of one
footprint against the other followed by a shoelace area, so no geometry
library is needed.  AP follows the classic 11-point interpolation protocol
(configurable to 40-point) with KITTI-style easy/moderate/hard regimes and
ignored ground truths that count as neither true nor false positives.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import UndefinedMetricError
from .geometry import Box3D


class Difficulty(enum.IntEnum):
    EASY = 0
    MODERATE = 1
    HARD = 2
    IGNORED = 3


@dataclass(frozen=True)
class Detection:
    """A scored predicted box belonging to one frame."""

    box: Box3D
    score: float
    frame_id: str = "0"

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")


@dataclass(frozen=True)
class GroundTruth:
    """An annotated box plus the 2D metadata driving difficulty assignment."""

    box: Box3D
    bbox2d: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 100.0)
    occlusion: int = 0
    truncation: float = 0.0
    label: str = "Car"
    frame_id: str = "0"

    def __post_init__(self):
        u1, v1, u2, v2 = self.bbox2d
        if u2 < u1 or v2 < v1:
            raise ValueError(f"bbox2d must be well-ordered, got {self.bbox2d}")

    @property
    def bbox_height(self) -> float:
        return self.bbox2d[3] - self.bbox2d[1]


def footprint_corners(b: Box3D) -> np.ndarray:
    """The four (x, z) footprint corners, counter-clockwise in the x-z plane."""
    ct, st = math.cos(b.theta), math.sin(b.theta)
    du = np.array([ct, -st]) * (b.l / 2.0)
    dw = np.array([st, ct]) * (b.w / 2.0)
    c = np.array([b.x, b.z])
    return np.stack([c + du + dw, c - du + dw, c - du - dw, c + du - dw])


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of an (N, 2) polygon; positive for CCW winding."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_polygon(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon by a convex CCW polygon."""
    output = [tuple(p) for p in subject]
    n = len(clipper)
    for k in range(n):
        if not output:
            break
        a = clipper[k]
        b = clipper[(k + 1) % n]
        edge = (b[0] - a[0], b[1] - a[1])

        def inside(p):
            # interior is to the left of each CCW edge
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0]) >= -1e-12

        def intersect(p, q):
            dp = (q[0] - p[0], q[1] - p[1])
            denom = edge[0] * dp[1] - edge[1] * dp[0]
            num = edge[1] * (p[0] - a[0]) - edge[0] * (p[1] - a[1])
            t = num / denom
            return (p[0] + t * dp[0], p[1] + t * dp[1])

        polygon, output = output, []
        for i, cur in enumerate(polygon):
            prev = polygon[i - 1]
            if inside(cur):
                if not inside(prev):
                    output.append(intersect(prev, cur))
                output.append(cur)
            elif inside(prev):
                output.append(intersect(prev, cur))
    return np.array(output).reshape(-1, 2)


def rotated_iou_bev(a: Box3D, b: Box3D) -> float:
    """IoU of the two yaw-rotated footprint rectangles in the BEV plane."""
    ca = footprint_corners(a)
    cb = footprint_corners(b)
    area_a = abs(polygon_area(ca))
    area_b = abs(polygon_area(cb))
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    inter = abs(polygon_area(clip_polygon(ca, cb)))
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Volumetric IoU: BEV intersection area times vertical interval overlap.

    Vertical extents are [y - h, y] since the camera Y axis points down.
    """
    ca = footprint_corners(a)
    cb = footprint_corners(b)
    inter_area = abs(polygon_area(clip_polygon(ca, cb)))
    overlap = min(a.y, b.y) - max(a.y - a.h, b.y - b.h)
    if overlap <= 0.0 or inter_area <= 0.0:
        return 0.0
    inter_vol = inter_area * overlap
    union = a.volume + b.volume - inter_vol
    if union <= 0.0:
        return 0.0
    return min(max(inter_vol / union, 0.0), 1.0)


def difficulty_of(g: GroundTruth) -> Difficulty:
    """KITTI regime assignment from 2D box height, occlusion, and truncation."""
    h = g.bbox_height
    if h >= 40 and g.occlusion == 0 and g.truncation <= 0.15:
        return Difficulty.EASY
    if h >= 25 and g.occlusion <= 1 and g.truncation <= 0.30:
        return Difficulty.MODERATE
    if h >= 25 and g.occlusion <= 2 and g.truncation <= 0.50:
        return Difficulty.HARD
    return Difficulty.IGNORED


def _match_frame(dets: list[Detection], gts: list[GroundTruth],
                 iou_fn: Callable[[Box3D, Box3D], float], iou_threshold: float,
                 difficulty: Difficulty) -> list[tuple[float, bool]]:
    """Greedy per-frame matching; returns (score, is_tp) for counted detections.

    Ground truths harder than the regime (or DontCare) are ignorable: a
    detection matching only those is dropped from the ranking entirely.
    """
    levels = [difficulty_of(g) for g in gts]
    target = [lv <= difficulty for lv in levels]
    matched = [False] * len(gts)
    results = []

    def content_key(i):
        # ties broken by box content so matching is independent of input order
        b = dets[i].box
        return (-dets[i].score, b.z, b.x, b.y, b.theta, b.l, b.w, b.h)

    order = sorted(range(len(dets)), key=content_key)
    for i in order:
        det = dets[i]
        best_iou, best_j = 0.0, -1
        best_ign_iou, best_ign_j = 0.0, -1
        for j, g in enumerate(gts):
            if matched[j]:
                continue
            iou = iou_fn(det.box, g.box)
            if iou < iou_threshold:
                continue
            if target[j]:
                if iou > best_iou:
                    best_iou, best_j = iou, j
            elif iou > best_ign_iou:
                best_ign_iou, best_ign_j = iou, j
        if best_j >= 0:
            matched[best_j] = True
            results.append((det.score, True))
        elif best_ign_j >= 0:
            matched[best_ign_j] = True  # absorbed by an ignored gt, not counted
        else:
            results.append((det.score, False))
    return results


def average_precision(dets: Sequence[Detection], gts: Sequence[GroundTruth],
                      iou_fn: Callable[[Box3D, Box3D], float], iou_threshold: float,
                      difficulty: Difficulty, n_points: int = 11) -> float:
    """Interpolated AP over evenly spaced recall points (11 by default).

    Detections are matched greedily per frame in descending score; each ground
    truth matches at most once at IoU >= threshold.
    """
    by_frame_d: dict[str, list[Detection]] = {}
    for d in dets:
        by_frame_d.setdefault(d.frame_id, []).append(d)
    by_frame_g: dict[str, list[GroundTruth]] = {}
    for g in gts:
        by_frame_g.setdefault(g.frame_id, []).append(g)

    n_pos = sum(1 for g in gts if difficulty_of(g) <= difficulty)
    if n_pos == 0:
        return 0.0

    scored: list[tuple[float, bool]] = []
    for frame in sorted(set(by_frame_d) | set(by_frame_g)):
        scored.extend(_match_frame(by_frame_d.get(frame, []), by_frame_g.get(frame, []),
                                   iou_fn, iou_threshold, difficulty))
    if not scored:
        return 0.0

    # evaluate the PR curve at distinct score thresholds so tied scores are
    # consumed as a group and the result is independent of input order
    scored.sort(key=lambda t: -t[0])
    precision_pts, recall_pts = [], []
    tp = n = 0
    i = 0
    while i < len(scored):
        s = scored[i][0]
        while i < len(scored) and scored[i][0] == s:
            tp += 1 if scored[i][1] else 0
            n += 1
            i += 1
        precision_pts.append(tp / n)
        recall_pts.append(tp / n_pos)
    precision = np.array(precision_pts)
    recall = np.array(recall_pts)

    ap = 0.0
    for r in np.linspace(0.0, 1.0, n_points):
        mask = recall >= r - 1e-12
        ap += float(np.max(precision[mask])) if np.any(mask) else 0.0
    return ap / n_points


def mean_depth_error(pred_boxes: Sequence[Box3D], gt_boxes: Sequence[Box3D],
                     matching: Sequence[tuple[int, int]]) -> float:
    """Mean |z_pred - z_gt| over matched (pred_index, gt_index) pairs."""
    if not matching:
        raise UndefinedMetricError("mean depth error over an empty matching")
    errors = [abs(pred_boxes[pi].z - gt_boxes[gi].z) for pi, gi in matching]
    return float(np.mean(errors))


def match_by_bev_iou(preds: Sequence[Box3D], gts: Sequence[Box3D],
                     min_iou: float = 0.1) -> list[tuple[int, int]]:
    """Greedy one-to-one matching by descending BEV IoU; used for depth error."""
    pairs = []
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            iou = rotated_iou_bev(p, g)
            if iou >= min_iou:
                pairs.append((iou, i, j))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_p: set[int] = set()
    used_g: set[int] = set()
    matching = []
    for _, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matching.append((i, j))
    return matching


@dataclass(frozen=True)
class EvalReport:
    """AP per (metric, IoU threshold, difficulty) plus mean depth error."""

    ap: dict[tuple[str, float, str], float]
    mean_depth_error: float | None
    n_detections: int
    n_ground_truths: int

    def to_records(self) -> list[dict]:
        recs = [
            {"metric": m, "iou_threshold": t, "difficulty": d, "ap": v}
            for (m, t, d), v in sorted(self.ap.items())
        ]
        if self.mean_depth_error is not None:
            recs.append({"metric": "mean_depth_error", "value": self.mean_depth_error})
        return recs

    def to_text(self) -> str:
        thresholds = sorted({t for _, t, _ in self.ap})
        metrics = ["AP_BEV", "AP_3D"]
        difficulties = ["easy", "moderate", "hard"]
        header = ["Metric"] + [f"{d.capitalize()}" for d in difficulties]
        lines = []
        for t in thresholds:
            for m in metrics:
                row = [f"IoU={t:g} {m}"]
                for d in difficulties:
                    row.append(f"{100.0 * self.ap[(m, t, d)]:6.2f}")
                lines.append(row)
        widths = [max(len(r[i]) for r in [header] + lines) for i in range(len(header))]
        out = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        out += ["  ".join(c.rjust(w) if i else c.ljust(w)
                          for i, (c, w) in enumerate(zip(row, widths))) for row in lines]
        if self.mean_depth_error is not None:
            out.append(f"mean depth error: {self.mean_depth_error:.3f} m")
        return "\n".join(out) + "\n"


def evaluate_detections(dets: Sequence[Detection], gts: Sequence[GroundTruth],
                        iou_thresholds: Sequence[float] = (0.5, 0.7),
                        n_points: int = 11) -> EvalReport:
    """Full metric table over both IoU flavors, both thresholds, all regimes."""
    if not gts:
        raise UndefinedMetricError("no ground truth to evaluate against")
    ap: dict[tuple[str, float, str], float] = {}
    for t in iou_thresholds:
        for name, fn in (("AP_BEV", rotated_iou_bev), ("AP_3D", iou_3d)):
            for diff in (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD):
                ap[(name, t, diff.name.lower())] = average_precision(
                    dets, gts, fn, t, diff, n_points=n_points)

    frames = sorted({g.frame_id for g in gts})
    matching_errors: list[tuple[Box3D, Box3D]] = []
    for frame in frames:
        preds = [d.box for d in dets if d.frame_id == frame]
        targets = [g.box for g in gts if g.frame_id == frame
                   and difficulty_of(g) != Difficulty.IGNORED]
        for pi, gi in match_by_bev_iou(preds, targets):
            matching_errors.append((preds[pi], targets[gi]))
    mde = None
    if matching_errors:
        mde = float(np.mean([abs(p.z - g.z) for p, g in matching_errors]))
    return EvalReport(ap=ap, mean_depth_error=mde,
                      n_detections=len(dets), n_ground_truths=len(gts))
