"""Pinhole camera geometry and 3D box <-> cuboid <-> projected-polygon conversions.

Coordinate conventions follow KITTI's rectified camera frame: X right, Y down,
Z forward.  A 3D box is parameterized by the bottom-face center (x, y, z),
dimensions (l, w, h) and yaw about the camera Y axis.

Cuboid vertices use a fixed canonical indexing (vertices array is 0-based,
names P1..P8 are 1-based):

    bottom face cycle  P2 -> P3 -> P7 -> P6   (diagonals P2P7 and P3P6 cross
                                               at the bottom center)
    top face cycle     P1 -> P4 -> P8 -> P5
    vertical edges     (P1,P2) (P4,P3) (P5,P6) (P8,P7)
    length edges       (P2,P3) (P6,P7) (P1,P4) (P5,P8)

At yaw 0 the length axis points along +X.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCuboidError, NonPositiveDepthError

# 0-based vertex index pairs, canonical order.
VERTICAL_EDGES = ((0, 1), (3, 2), (4, 5), (7, 6))
LENGTH_EDGES = ((1, 2), (5, 6), (0, 3), (4, 7))
WIDTH_EDGES = ((2, 6), (5, 1), (3, 7), (4, 0))
# Vectors P3->P2, P7->P6, P4->P1, P8->P5 all point along the +length axis.
LENGTH_DIRECTIONS = ((2, 1), (6, 5), (3, 0), (7, 4))


def wrap_angle(theta: float) -> float:
    """Normalize an angle to the interval (-pi, pi]."""
    t = theta % (2.0 * math.pi)
    if t > math.pi:
        t -= 2.0 * math.pi
    return t


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics, optionally with KITTI P2 translation terms.

    The projection model is the full 3x4 matrix

        [[fx, 0, cu, tx], [0, fy, cv, ty], [0, 0, 1, tz]]

    so u = (fx*X + cu*Z + tx) / (Z + tz) and analogously v.  With
    tx = ty = tz = 0 this reduces to the plain pinhole form
    u = fx*X/Z + cu.
    """

    fx: float
    fy: float
    cu: float
    cv: float
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @classmethod
    def from_p2(cls, P: np.ndarray) -> "CameraIntrinsics":
        """Build intrinsics from a KITTI 3x4 projection matrix."""
        P = np.asarray(P, dtype=float)
        if P.shape != (3, 4):
            raise ValueError(f"expected a 3x4 matrix, got shape {P.shape}")
        return cls(fx=P[0, 0], fy=P[1, 1], cu=P[0, 2], cv=P[1, 2],
                   tx=P[0, 3], ty=P[1, 3], tz=P[2, 3])

    def as_matrix(self) -> np.ndarray:
        """The 3x4 projection matrix."""
        return np.array([
            [self.fx, 0.0, self.cu, self.tx],
            [0.0, self.fy, self.cv, self.ty],
            [0.0, 0.0, 1.0, self.tz],
        ])

    def scaled(self, su: float, sv: float) -> "CameraIntrinsics":
        """Intrinsics for a raster downsampled by (su, sv) image pixels per cell.

        Raster index c covers image coordinate u = (c + 0.5) * su, so the
        scaled principal point carries a half-cell offset; tz is a depth
        offset and does not scale.
        """
        return CameraIntrinsics(
            fx=self.fx / su, fy=self.fy / sv,
            cu=self.cu / su - 0.5, cv=self.cv / sv - 0.5,
            tx=self.tx / su, ty=self.ty / sv, tz=self.tz,
        )


@dataclass(frozen=True)
class Box3D:
    """7-parameter 3D box; (x, y, z) is the bottom-face center.

    Yaw is normalized to (-pi, pi] on construction.
    """

    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError(f"box dimensions must be positive, got l={self.l}, w={self.w}, h={self.h}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def volume(self) -> float:
        return self.l * self.w * self.h

    @property
    def bottom_center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class Cuboid:
    """Eight 3D vertices in canonical indexing, shape (8, 3), meters."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.shape != (8, 3):
            raise ValueError(f"expected (8, 3) vertices, got shape {v.shape}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)


@dataclass(frozen=True)
class StructuredPolygon:
    """Eight projected vertices in pixels, shape (8, 2), same indexing as Cuboid."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.shape != (8, 2):
            raise ValueError(f"expected (8, 2) vertices, got shape {v.shape}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)


def project_points(K: CameraIntrinsics, points: np.ndarray) -> np.ndarray:
    """Project (N, 3) camera-frame points to (N, 2) pixels.

    Raises:
        NonPositiveDepthError: if any point has Z <= 0 (or lies on the
            projection plane once tz is applied).
    """
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    Z = P[:, 2]
    if np.any(Z <= 0):
        bad = int(np.argmax(Z <= 0))
        raise NonPositiveDepthError(f"point {bad} has non-positive depth Z={Z[bad]}")
    denom = Z + K.tz
    if np.any(denom <= 0):
        bad = int(np.argmax(denom <= 0))
        raise NonPositiveDepthError(f"point {bad} has non-positive projective depth {denom[bad]}")
    u = (K.fx * P[:, 0] + K.cu * Z + K.tx) / denom
    v = (K.fy * P[:, 1] + K.cv * Z + K.ty) / denom
    return np.stack([u, v], axis=1)


def project_vertex(K: CameraIntrinsics, P) -> np.ndarray:
    """Project a single 3D point to a (2,) pixel."""
    return project_points(K, np.asarray(P, dtype=float).reshape(1, 3))[0]


def backproject_points(K: CameraIntrinsics, pixels: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Back-project (N, 2) pixels with per-point depths Z (the 3D Z coordinate).

    Exact inverse of :func:`project_points`: the returned points have third
    coordinate equal to Z and re-project onto the given pixels.
    """
    p = np.asarray(pixels, dtype=float).reshape(-1, 2)
    Z = np.broadcast_to(np.asarray(Z, dtype=float), (p.shape[0],))
    if np.any(Z <= 0):
        bad = int(np.argmax(Z <= 0))
        raise NonPositiveDepthError(f"pixel {bad} has non-positive depth Z={Z[bad]}")
    w = Z + K.tz
    X = (p[:, 0] * w - K.cu * Z - K.tx) / K.fx
    Y = (p[:, 1] * w - K.cv * Z - K.ty) / K.fy
    return np.stack([X, Y, Z], axis=1)


def backproject_vertex(K: CameraIntrinsics, p, Z: float) -> np.ndarray:
    """Back-project a single pixel at depth Z to a (3,) point."""
    return backproject_points(K, np.asarray(p, dtype=float).reshape(1, 2), np.array([Z]))[0]


def box_to_cuboid(b: Box3D) -> Cuboid:
    """Expand a 7-parameter box into its eight vertices (canonical indexing)."""
    c = b.bottom_center
    ct, st = math.cos(b.theta), math.sin(b.theta)
    du = np.array([ct, 0.0, -st]) * (b.l / 2.0)   # length half-axis
    dw = np.array([st, 0.0, ct]) * (b.w / 2.0)    # width half-axis
    up = np.array([0.0, -b.h, 0.0])               # camera Y points down
    p2 = c + du - dw
    p3 = c - du - dw
    p6 = c + du + dw
    p7 = c - du + dw
    verts = np.stack([p2 + up, p2, p3, p3 + up, p6 + up, p6, p7, p7 + up])
    return Cuboid(verts)


def cuboid_to_box(c: Cuboid) -> Box3D:
    """Recover a 7-parameter box from eight (possibly noisy) vertices.

    Location is the mean of the P2P7 and P3P6 diagonal midpoints; each
    dimension is the mean of its four edge lengths; yaw comes from the mean of
    the four unit-normalized length-axis direction vectors.

    Raises:
        DegenerateCuboidError: if the averaged direction has no X/Z component.
    """
    V = c.vertices

    def edge_mean(pairs) -> float:
        return float(np.mean([np.linalg.norm(V[i] - V[j]) for i, j in pairs]))

    loc = ((V[1] + V[6]) / 2.0 + (V[2] + V[5]) / 2.0) / 2.0
    length = edge_mean(LENGTH_EDGES)
    width = edge_mean(WIDTH_EDGES)
    height = edge_mean(VERTICAL_EDGES)

    dirs = np.stack([V[j] - V[i] for i, j in LENGTH_DIRECTIONS])
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateCuboidError("zero-length direction edge")
    mean_dir = np.mean(dirs / norms[:, None], axis=0)
    if math.hypot(mean_dir[0], mean_dir[2]) < 1e-12:
        raise DegenerateCuboidError("direction vectors cancel out")
    theta = math.atan2(-mean_dir[2], mean_dir[0])

    return Box3D(x=loc[0], y=loc[1], z=loc[2], l=length, w=width, h=height, theta=theta)


def project_box(K: CameraIntrinsics, b: Box3D) -> StructuredPolygon:
    """Project all eight box vertices, preserving the canonical indexing.

    Raises:
        NonPositiveDepthError: naming the first offending vertex if any lies
            at or behind the camera.
    """
    verts = box_to_cuboid(b).vertices
    Z = verts[:, 2]
    if np.any(Z <= 0):
        bad = int(np.argmax(Z <= 0))
        raise NonPositiveDepthError(f"vertex P{bad + 1} has non-positive depth Z={Z[bad]:.4f}")
    return StructuredPolygon(project_points(K, verts))
