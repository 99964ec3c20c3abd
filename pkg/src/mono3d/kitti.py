"""Parsers and writers for KITTI-style calibration, label, depth, and sidecar files.

All parsers are total over their grammars: malformed input raises a
:class:`~mono3d.errors.ParseError` carrying the 1-based line number, never an
uncaught exception.  Floats are written with six decimals, so parse/write
round trips preserve values to 1e-6.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, ParseError
from .evaluation import Detection, GroundTruth
from .geometry import Box3D, CameraIntrinsics, StructuredPolygon, project_box
from .heatmap import CANONICAL_ORDER

DEPTH_SCALE = 256.0  # 16-bit depth PNGs store meters * 256; raw 0 = invalid


@dataclass(frozen=True)
class CalibFile:
    """Named 3x4 projection matrices from a KITTI calib file."""

    matrices: dict[str, np.ndarray]
    extra: dict[str, str] = field(default_factory=dict)

    @property
    def camera(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_p2(self.matrices["P2"])


@dataclass(frozen=True)
class LabelRecord:
    """One object row of a KITTI label or result file.

    KITTI stores dimensions in (h, w, l) order and the location at the
    bottom-face center; `box` converts into our Box3D field order.
    """

    label: str
    truncation: float
    occlusion: int
    alpha: float
    bbox2d: tuple[float, float, float, float]
    h: float
    w: float
    l: float
    x: float
    y: float
    z: float
    rotation_y: float
    score: float | None = None

    @property
    def is_dontcare(self) -> bool:
        return self.label == "DontCare"

    @property
    def box(self) -> Box3D:
        return Box3D(x=self.x, y=self.y, z=self.z, l=self.l, w=self.w, h=self.h,
                     theta=self.rotation_y)

    def to_ground_truth(self, frame_id: str = "0") -> GroundTruth:
        return GroundTruth(box=self.box, bbox2d=self.bbox2d, occlusion=self.occlusion,
                           truncation=self.truncation, label=self.label, frame_id=frame_id)


def _parse_floats(parts: list[str], line_no: int) -> list[float]:
    values = []
    for tok in parts:
        try:
            values.append(float(tok))
        except ValueError:
            raise ParseError(line_no, f"not a number: {tok!r}") from None
    return values


def parse_calib(text: str) -> CalibFile:
    """Parse "KEY: v1 ... v12" calibration lines; P2 is mandatory."""
    matrices: dict[str, np.ndarray] = {}
    extra: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if ":" not in line:
            raise ParseError(line_no, "expected 'KEY: values' format")
        key, _, rest = line.partition(":")
        key = key.strip()
        parts = rest.split()
        if key.startswith("P") and len(parts) == 12:
            matrices[key] = np.array(_parse_floats(parts, line_no)).reshape(3, 4)
        else:
            extra[key] = rest.strip()
    if "P2" not in matrices:
        raise ParseError(0, "missing P2 projection matrix")
    if abs(np.linalg.det(matrices["P2"][:, :3])) < 1e-12:
        raise ParseError(0, "P2 left 3x3 block is singular")
    return CalibFile(matrices=matrices, extra=extra)


def write_calib(calib: CalibFile) -> str:
    buf = io.StringIO()
    for key in sorted(calib.matrices):
        vals = " ".join(f"{v:.12e}" for v in calib.matrices[key].ravel())
        buf.write(f"{key}: {vals}\n")
    for key, rest in calib.extra.items():
        buf.write(f"{key}: {rest}\n")
    return buf.getvalue()


def parse_labels(text: str) -> list[LabelRecord]:
    """Parse a KITTI label/result file (15 fields, 16 with trailing score)."""
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) not in (15, 16):
            raise ParseError(line_no, f"expected 15 or 16 fields, got {len(parts)}")
        label = parts[0]
        v = _parse_floats(parts[1:], line_no)
        rec = LabelRecord(
            label=label, truncation=v[0], occlusion=int(v[1]), alpha=v[2],
            bbox2d=(v[3], v[4], v[5], v[6]),
            h=v[7], w=v[8], l=v[9], x=v[10], y=v[11], z=v[12], rotation_y=v[13],
            score=v[14] if len(parts) == 16 else None,
        )
        if not rec.is_dontcare and (rec.h <= 0 or rec.w <= 0 or rec.l <= 0):
            raise ParseError(line_no, f"non-positive dimensions for class {label!r}")
        records.append(rec)
    return records


def write_labels(records: list[LabelRecord]) -> str:
    lines = []
    for r in records:
        fields = [
            r.label, f"{r.truncation:.6f}", str(r.occlusion), f"{r.alpha:.6f}",
            *(f"{v:.6f}" for v in r.bbox2d),
            f"{r.h:.6f}", f"{r.w:.6f}", f"{r.l:.6f}",
            f"{r.x:.6f}", f"{r.y:.6f}", f"{r.z:.6f}", f"{r.rotation_y:.6f}",
        ]
        if r.score is not None:
            fields.append(f"{r.score:.6f}")
        lines.append(" ".join(fields))
    return "\n".join(lines) + ("\n" if lines else "")


def load_depth_png(data: bytes) -> np.ndarray:
    """Decode a 16-bit grayscale depth PNG to an (H, W) array of meters.

    Raw value 0 marks invalid pixels and decodes to 0.0.
    """
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise FormatError(f"not a decodable image: {exc}") from exc
    if img.mode not in ("I", "I;16", "I;16B"):
        raise FormatError(f"expected 16-bit single-channel PNG, got mode {img.mode!r}")
    raw = np.array(img, dtype=np.uint32)
    if raw.max(initial=0) > 0xFFFF:
        raise FormatError("pixel values exceed 16 bits")
    return raw.astype(np.float64) / DEPTH_SCALE


def save_depth_png(depth: np.ndarray) -> bytes:
    """Encode meters to the 16-bit PNG convention (value = meters * 256)."""
    raw = np.round(np.asarray(depth, dtype=float) * DEPTH_SCALE)
    if raw.min(initial=0) < 0 or raw.max(initial=0) > 0xFFFF:
        raise FormatError("depth out of the representable [0, 255.996] m range")
    img = Image.fromarray(raw.astype(np.uint16))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def detection_to_record(det: Detection, K: CameraIntrinsics | None = None,
                        label: str = "Car") -> LabelRecord:
    """Convert a detection to a result row; alpha = theta - atan2(x, z).

    The 2D bbox is the extent of the projected cuboid when intrinsics are
    given, otherwise zeros.
    """
    b = det.box
    alpha = b.theta - math.atan2(b.x, b.z)
    bbox = (0.0, 0.0, 0.0, 0.0)
    if K is not None:
        verts = project_box(K, b).vertices
        bbox = (float(verts[:, 0].min()), float(verts[:, 1].min()),
                float(verts[:, 0].max()), float(verts[:, 1].max()))
    return LabelRecord(
        label=label, truncation=0.0, occlusion=0, alpha=alpha, bbox2d=bbox,
        h=b.h, w=b.w, l=b.l, x=b.x, y=b.y, z=b.z, rotation_y=b.theta, score=det.score,
    )


def write_predictions(dets: list[Detection], K: CameraIntrinsics | None = None) -> str:
    """Serialize detections of one frame, descending score then input order."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    return write_labels([detection_to_record(dets[i], K) for i in order])


# --- prediction sidecar files (per-frame, text) -------------------------------
#
# Each sidecar may carry "# vertex_order: i1 ... i8" declaring the permutation
# of the file's vertex columns relative to the canonical indexing (column k
# holds the vertex numbered i_k).  Loaders always return canonical order.


def _parse_vertex_order(rest: str, line_no: int) -> tuple[int, ...]:
    try:
        order = tuple(int(t) for t in rest.split())
    except ValueError:
        raise ParseError(line_no, f"bad vertex_order: {rest!r}") from None
    if sorted(order) != list(CANONICAL_ORDER):
        raise ParseError(line_no, f"vertex_order must be a permutation of 1..8, got {order}")
    return order


def parse_polygons(text: str) -> dict[int, StructuredPolygon]:
    """Parse 'obj_id u1 v1 ... u8 v8 [score]' lines into canonical polygons."""
    order = CANONICAL_ORDER
    polygons: dict[int, StructuredPolygon] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("vertex_order:"):
                order = _parse_vertex_order(body.partition(":")[2], line_no)
            continue
        parts = line.split()
        if len(parts) not in (17, 18):
            raise ParseError(line_no, f"expected 17 or 18 fields, got {len(parts)}")
        try:
            obj_id = int(parts[0])
        except ValueError:
            raise ParseError(line_no, f"bad object id: {parts[0]!r}") from None
        coords = np.array(_parse_floats(parts[1:17], line_no)).reshape(8, 2)
        verts = np.empty((8, 2))
        for k, vertex_no in enumerate(order):
            verts[vertex_no - 1] = coords[k]
        polygons[obj_id] = StructuredPolygon(verts)
    return polygons


def write_polygons(polygons: dict[int, StructuredPolygon]) -> str:
    lines = ["# vertex_order: " + " ".join(str(i) for i in CANONICAL_ORDER)]
    for obj_id in sorted(polygons):
        coords = " ".join(f"{v:.6f}" for v in polygons[obj_id].vertices.ravel())
        lines.append(f"{obj_id} {coords}")
    return "\n".join(lines) + "\n"


def parse_heights(text: str) -> dict[int, float]:
    """Parse 'obj_id t_H' lines (log-ratio height targets)."""
    heights: dict[int, float] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(line_no, f"expected 'obj_id t_H', got {len(parts)} fields")
        try:
            obj_id = int(parts[0])
        except ValueError:
            raise ParseError(line_no, f"bad object id: {parts[0]!r}") from None
        heights[obj_id] = _parse_floats(parts[1:], line_no)[0]
    return heights


def write_heights(heights: dict[int, float]) -> str:
    lines = [f"{obj_id} {heights[obj_id]:.6f}" for obj_id in sorted(heights)]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_residuals(text: str) -> dict[int, np.ndarray]:
    """Parse 'obj_id dx dy dz dl dw dh dtheta' lines."""
    residuals: dict[int, np.ndarray] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ParseError(line_no, f"expected 8 fields, got {len(parts)}")
        try:
            obj_id = int(parts[0])
        except ValueError:
            raise ParseError(line_no, f"bad object id: {parts[0]!r}") from None
        residuals[obj_id] = np.array(_parse_floats(parts[1:], line_no))
    return residuals


def write_residuals(residuals: dict[int, np.ndarray]) -> str:
    lines = []
    for obj_id in sorted(residuals):
        vals = " ".join(f"{v:.6f}" for v in residuals[obj_id])
        lines.append(f"{obj_id} {vals}")
    return "\n".join(lines) + ("\n" if lines else "")


def read_text(path: str | Path) -> str:
    return Path(path).read_text(encoding="utf-8")
