"""Per-vertex heatmap decoding, one-hot label rendering, and oracle providers.

Heatmaps are per-object: eight score grids (one per cuboid vertex) plus a
stride relating grid cells to the pixel frame the polygon lives in.  Cell
(r, c) maps to the pixel ((c + 0.5) * stride, (r + 0.5) * stride) -- the cell
center -- so render/decode round trips are unbiased within stride/2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .geometry import Box3D, CameraIntrinsics, StructuredPolygon, project_box

CANONICAL_ORDER = tuple(range(1, 9))


@dataclass(frozen=True)
class Heatmap:
    """Eight score grids for one object, shape (8, H, W)."""

    values: np.ndarray
    stride: float = 4.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != 8:
            raise FormatError(f"expected (8, H, W) grids, got shape {v.shape}")
        if v.shape[1] == 0 or v.shape[2] == 0:
            raise FormatError("empty heatmap grid")
        if self.stride <= 0:
            raise FormatError(f"stride must be positive, got {self.stride}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class PolygonEstimate:
    """A structured polygon plus one confidence per vertex."""

    polygon: StructuredPolygon
    per_vertex_score: np.ndarray = field(default_factory=lambda: np.ones(8))

    def __post_init__(self):
        s = np.asarray(self.per_vertex_score, dtype=float)
        if s.shape != (8,):
            raise ValueError(f"expected 8 scores, got shape {s.shape}")
        object.__setattr__(self, "per_vertex_score", s)


def decode_heatmap(m: Heatmap) -> PolygonEstimate:
    """Argmax-decode each grid to an image-space vertex.

    Ties go to the smallest row, then smallest column (row-major argmax).
    """
    verts = np.empty((8, 2))
    scores = np.empty(8)
    for i, grid in enumerate(m.values):
        flat = int(np.argmax(grid))
        r, c = np.unravel_index(flat, grid.shape)
        verts[i] = ((c + 0.5) * m.stride, (r + 0.5) * m.stride)
        scores[i] = grid[r, c]
    return PolygonEstimate(StructuredPolygon(verts), scores)


def render_target(p: StructuredPolygon, grid_shape: tuple[int, int],
                  stride: float = 4.0) -> tuple[np.ndarray, np.ndarray]:
    """Render one-hot label grids for a polygon.

    Returns (grids, in_bounds): grids has shape (8, H, W) with exactly one
    1.0 per in-bounds vertex; out-of-bounds vertices leave their grid all-zero
    and are flagged False in the (8,) in_bounds mask.
    """
    H, W = grid_shape
    grids = np.zeros((8, H, W))
    in_bounds = np.zeros(8, dtype=bool)
    for i, (u, v) in enumerate(p.vertices):
        c = int(np.floor(u / stride))
        r = int(np.floor(v / stride))
        if 0 <= r < H and 0 <= c < W:
            grids[i, r, c] = 1.0
            in_bounds[i] = True
    return grids, in_bounds


def euclidean_loss(m: np.ndarray, target: np.ndarray) -> float:
    """Sum of squared per-cell differences over all eight grids."""
    a = np.asarray(m, dtype=float)
    b = np.asarray(target, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum((a - b) ** 2))


def oracle_polygon_provider(K: CameraIntrinsics, box: Box3D, sigma: float = 0.0,
                            rng: np.random.Generator | int | None = None) -> PolygonEstimate:
    """Ground-truth polygon with i.i.d. Gaussian pixel noise of std sigma.

    Deterministic given an integer seed or a seeded Generator.
    """
    poly = project_box(K, box)
    verts = poly.vertices
    if sigma > 0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        verts = verts + gen.normal(0.0, sigma, size=(8, 2))
    return PolygonEstimate(StructuredPolygon(verts), np.ones(8))


def save_heatmap(path: str | Path, m: Heatmap,
                 vertex_order: tuple[int, ...] = CANONICAL_ORDER) -> None:
    """Write grids as raw float32 plus a JSON sidecar (<path>.json).

    The sidecar declares dims, stride, dtype, and the vertex-index permutation:
    grid k in the file holds the vertex numbered vertex_order[k].
    """
    path = Path(path)
    values = m.values
    order = list(vertex_order)
    if sorted(order) != list(CANONICAL_ORDER):
        raise FormatError(f"vertex_order must be a permutation of 1..8, got {order}")
    # reorder canonical grids into file order
    file_grids = np.stack([values[i - 1] for i in order]).astype(np.float32)
    path.write_bytes(file_grids.tobytes())
    sidecar = {
        "dims": list(values.shape),
        "stride": m.stride,
        "dtype": "float32",
        "vertex_order": order,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_heatmap(path: str | Path) -> Heatmap:
    """Load a heatmap tensor written by an external predictor.

    Applies the sidecar's vertex-index permutation so the returned grids are
    in canonical order.
    """
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise FormatError(f"missing sidecar header {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    dims = tuple(meta["dims"])
    if len(dims) != 3 or dims[0] != 8:
        raise FormatError(f"sidecar dims must be (8, H, W), got {dims}")
    dtype = np.dtype(meta.get("dtype", "float32"))
    raw = np.frombuffer(path.read_bytes(), dtype=dtype)
    if raw.size != int(np.prod(dims)):
        raise FormatError(f"payload has {raw.size} values, header declares {int(np.prod(dims))}")
    file_grids = raw.reshape(dims).astype(float)
    order = meta.get("vertex_order", list(CANONICAL_ORDER))
    if sorted(order) != list(CANONICAL_ORDER):
        raise FormatError(f"vertex_order must be a permutation of 1..8, got {order}")
    values = np.empty_like(file_grids)
    for k, vertex_no in enumerate(order):
        values[vertex_no - 1] = file_grids[k]
    return Heatmap(values, stride=float(meta["stride"]))
