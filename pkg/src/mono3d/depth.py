"""Height-guided depth recovery and coarse 3D box assembly.

Each vertical edge of the cuboid projects to a pixel segment of height h_j;
with the camera focal length f and the object's physical height H the edge
depth is Z_j = f * H / h_j.  Back-projecting every polygon vertex with its
edge's depth and averaging the resulting cuboid yields the coarse box.  For
zero-pitch boxes under the pinhole model this recovery is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEdgeError
from .geometry import (
    VERTICAL_EDGES,
    Box3D,
    CameraIntrinsics,
    Cuboid,
    StructuredPolygon,
    backproject_points,
    cuboid_to_box,
)

#: Projected vertical edges shorter than this are rejected as degenerate.
H_MIN_PIXELS = 2.0


@dataclass(frozen=True)
class HeightPrior:
    """Dataset-average object height anchoring the log-ratio encoding."""

    average_height: float = 1.46

    def __post_init__(self):
        if self.average_height <= 0:
            raise ValueError(f"average height must be positive, got {self.average_height}")


def edge_pixel_heights(p: StructuredPolygon) -> np.ndarray:
    """Euclidean pixel length of the four vertical edges, shape (4,)."""
    V = p.vertices
    return np.array([np.linalg.norm(V[i] - V[j]) for i, j in VERTICAL_EDGES])


def depth_from_height(f: float, H: float, h_j: float, h_min: float = H_MIN_PIXELS) -> float:
    """Edge depth from focal length, physical height, and projected height.

    Raises:
        DegenerateEdgeError: if h_j is below h_min (unusably small or occluded
            projection; the formula diverges as h_j -> 0).
    """
    if f <= 0 or H <= 0:
        raise ValueError(f"f and H must be positive, got f={f}, H={H}")
    if h_j < h_min:
        raise DegenerateEdgeError(-1, h_j, h_min)
    return f * H / h_j


def encode_height(G_H: float, prior: HeightPrior) -> float:
    """Log-ratio encoding of a ground-truth height against the prior."""
    if G_H <= 0:
        raise ValueError(f"height must be positive, got {G_H}")
    return math.log(G_H / prior.average_height)


def decode_height(t_H: float, prior: HeightPrior) -> float:
    """Invert :func:`encode_height`."""
    return prior.average_height * math.exp(t_H)


def smooth_l1(x: float) -> float:
    """0.5*x^2 inside |x| < 1, |x| - 0.5 outside; continuous and C1 at the joint."""
    ax = abs(x)
    return 0.5 * x * x if ax < 1.0 else ax - 0.5


def oracle_height(true_height: float, sigma_log: float = 0.0,
                  rng: np.random.Generator | int | None = None) -> float:
    """Ground-truth height with multiplicative log-normal noise."""
    if sigma_log <= 0:
        return true_height
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return true_height * math.exp(gen.normal(0.0, sigma_log))


def recover_coarse_box(K: CameraIntrinsics, polygon: StructuredPolygon, H: float,
                       h_min: float = H_MIN_PIXELS, use_fy: bool = False) -> Box3D:
    """Assemble a coarse 3D box from a structured polygon and object height.

    Both vertices of a vertical edge share that edge's recovered depth (exact
    for zero-pitch boxes, whose vertical edges parallel the camera Y axis).
    With a nonzero tz projection term the height ratio yields the projective
    depth Z + tz; the tz offset is removed before back-projection.

    Raises:
        DegenerateEdgeError: carrying the edge index, if any projected edge is
            shorter than h_min.
    """
    f = K.fy if use_fy else K.fx
    heights = edge_pixel_heights(polygon)
    depths = np.empty(4)
    for j, h_j in enumerate(heights):
        if h_j < h_min:
            raise DegenerateEdgeError(j, float(h_j), h_min)
        depths[j] = f * H / h_j - K.tz
    Z = np.empty(8)
    for j, (a, b) in enumerate(VERTICAL_EDGES):
        Z[a] = Z[b] = depths[j]
    vertices = backproject_points(K, polygon.vertices, Z)
    return cuboid_to_box(Cuboid(vertices))
