"""Bird's-eye-view rasterization, 3D-ROI extraction, and residual refinement.

The BEV grid is a top-down raster of a depth-derived point cloud.  Rows index
the depth axis Z with row 0 at the far edge; columns index the lateral axis X
with column 0 at x_min.  Cells hold n_slices binary occupancy channels (one
per vertical slab of Y) plus one max-height channel storing y_max - Y, so
larger values mean taller points (camera Y points down).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, OutOfRangeError
from .geometry import Box3D, CameraIntrinsics, wrap_angle

#: Default crop ranges for the raster, meters.
DEFAULT_X_RANGE = (-25.0, 25.0)
DEFAULT_Y_RANGE = (-1.5, 4.09)
DEFAULT_Z_RANGE = (0.0, 50.0)

#: Fixed 3D-ROI raster size: (rows along Z, columns along X).
ROI_SHAPE = (456, 256)


@dataclass(frozen=True)
class BevGridSpec:
    """Geometry of the BEV raster."""

    x_range: tuple[float, float] = DEFAULT_X_RANGE
    y_range: tuple[float, float] = DEFAULT_Y_RANGE
    z_range: tuple[float, float] = DEFAULT_Z_RANGE
    resolution: float = 0.1
    n_slices: int = 8

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if self.n_slices < 1:
            raise ValueError(f"need at least one slice, got {self.n_slices}")

    @property
    def n_rows(self) -> int:
        return int(round((self.z_range[1] - self.z_range[0]) / self.resolution))

    @property
    def n_cols(self) -> int:
        return int(round((self.x_range[1] - self.x_range[0]) / self.resolution))

    @property
    def n_channels(self) -> int:
        return self.n_slices + 1


@dataclass(frozen=True)
class BevGrid:
    """Rasterized point cloud: cells has shape (n_slices + 1, rows, cols)."""

    spec: BevGridSpec
    cells: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=np.float32)
        expect = (self.spec.n_channels, self.spec.n_rows, self.spec.n_cols)
        if c.shape != expect:
            raise ValueError(f"expected cells of shape {expect}, got {c.shape}")
        object.__setattr__(self, "cells", c)

    @property
    def max_height(self) -> np.ndarray:
        return self.cells[-1]


@dataclass(frozen=True)
class BoxResiduals:
    """Additive per-parameter corrections to a coarse box."""

    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    dl: float = 0.0
    dw: float = 0.0
    dh: float = 0.0
    dtheta: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz, self.dl, self.dw, self.dh, self.dtheta])


def depth_to_points(K: CameraIntrinsics, depth: np.ndarray) -> np.ndarray:
    """Back-project a depth map to an (N, 3) point cloud.

    depth is an (H, W) array of meters; 0 marks invalid pixels, which are
    skipped.  Pixel (u, v) uses its integer coordinates.
    """
    d = np.asarray(depth, dtype=float)
    if d.ndim != 2:
        raise ValueError(f"expected (H, W) depth map, got shape {d.shape}")
    vv, uu = np.nonzero(d > 0)
    if vv.size == 0:
        return np.empty((0, 3))
    Z = d[vv, uu]
    w = Z + K.tz
    X = (uu * w - K.cu * Z - K.tx) / K.fx
    Y = (vv * w - K.cv * Z - K.ty) / K.fy
    return np.stack([X, Y, Z], axis=1)


def rasterize_bev(points: np.ndarray, spec: BevGridSpec = BevGridSpec()) -> BevGrid:
    """Rasterize an (N, 3) point cloud into occupancy slices + max height.

    Points outside the X/Y/Z ranges are dropped.  Output is independent of
    point order (occupancy is a set-bit, height a running max).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    X, Y, Z = pts[:, 0], pts[:, 1], pts[:, 2]
    keep = (
        (X >= spec.x_range[0]) & (X <= spec.x_range[1])
        & (Y >= spec.y_range[0]) & (Y <= spec.y_range[1])
        & (Z >= spec.z_range[0]) & (Z <= spec.z_range[1])
    )
    X, Y, Z = X[keep], Y[keep], Z[keep]
    cells = np.zeros((spec.n_channels, spec.n_rows, spec.n_cols), dtype=np.float32)
    if X.size:
        cols = np.clip(np.floor((X - spec.x_range[0]) / spec.resolution).astype(int),
                       0, spec.n_cols - 1)
        rows = np.clip(np.floor((spec.z_range[1] - Z) / spec.resolution).astype(int),
                       0, spec.n_rows - 1)
        slice_h = (spec.y_range[1] - spec.y_range[0]) / spec.n_slices
        slices = np.clip(np.floor((Y - spec.y_range[0]) / slice_h).astype(int),
                         0, spec.n_slices - 1)
        cells[slices, rows, cols] = 1.0
        heights = (spec.y_range[1] - Y).astype(np.float32)
        np.maximum.at(cells[-1], (rows, cols), heights)
    return BevGrid(spec, cells)


def extract_3d_roi(grid: BevGrid, coarse: Box3D,
                   roi_shape: tuple[int, int] = ROI_SHAPE) -> np.ndarray:
    """Crop a fixed-size BEV window around a coarse box.

    The window is axis-aligned, centered at the box's (x, z), and spans twice
    the box's larger footprint dimension in both X and Z.  Nearest-neighbor
    resampling to (channels, rows, cols) = (C, 456, 256); area outside the
    grid is zero-padded.

    Raises:
        OutOfRangeError: if the box center lies outside the grid ranges.
    """
    spec = grid.spec
    if not (spec.x_range[0] <= coarse.x <= spec.x_range[1]
            and spec.z_range[0] <= coarse.z <= spec.z_range[1]):
        raise OutOfRangeError(
            f"coarse box center ({coarse.x:.2f}, {coarse.z:.2f}) outside grid ranges")
    n_rows, n_cols = roi_shape
    half = max(coarse.l, coarse.w)
    # output pixel centers in world coordinates
    xs = coarse.x - half + (np.arange(n_cols) + 0.5) * (2.0 * half / n_cols)
    zs = coarse.z + half - (np.arange(n_rows) + 0.5) * (2.0 * half / n_rows)
    src_cols = np.floor((xs - spec.x_range[0]) / spec.resolution).astype(int)
    src_rows = np.floor((spec.z_range[1] - zs) / spec.resolution).astype(int)
    col_ok = (src_cols >= 0) & (src_cols < spec.n_cols)
    row_ok = (src_rows >= 0) & (src_rows < spec.n_rows)
    roi = np.zeros((spec.n_channels, n_rows, n_cols), dtype=np.float32)
    rr = src_rows[row_ok]
    cc = src_cols[col_ok]
    if rr.size and cc.size:
        block = grid.cells[:, rr[:, None], cc[None, :]]
        roi[:, np.ix_(row_ok, col_ok)[0], np.ix_(row_ok, col_ok)[1]] = block
    return roi


def apply_residuals(coarse: Box3D, r: BoxResiduals) -> Box3D:
    """Additive refinement of all seven parameters; yaw is re-wrapped.

    Raises:
        ValueError: if a refined dimension becomes non-positive.
    """
    l, w, h = coarse.l + r.dl, coarse.w + r.dw, coarse.h + r.dh
    if l <= 0 or w <= 0 or h <= 0:
        raise ValueError(f"refined dimensions must stay positive, got l={l}, w={w}, h={h}")
    return Box3D(
        x=coarse.x + r.dx, y=coarse.y + r.dy, z=coarse.z + r.dz,
        l=l, w=w, h=h, theta=wrap_angle(coarse.theta + r.dtheta),
    )


def residuals_between(coarse: Box3D, gt: Box3D) -> BoxResiduals:
    """The exact residuals carrying coarse onto gt (yaw difference on the circle)."""
    return BoxResiduals(
        dx=gt.x - coarse.x, dy=gt.y - coarse.y, dz=gt.z - coarse.z,
        dl=gt.l - coarse.l, dw=gt.w - coarse.w, dh=gt.h - coarse.h,
        dtheta=wrap_angle(gt.theta - coarse.theta),
    )


def oracle_residual_provider(coarse: Box3D, gt: Box3D, sigma: float = 0.0,
                             rng: np.random.Generator | int | None = None) -> BoxResiduals:
    """Ground-truth residuals with optional i.i.d. Gaussian noise per parameter."""
    r = residuals_between(coarse, gt).as_array()
    if sigma > 0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        r = r + gen.normal(0.0, sigma, size=7)
    return BoxResiduals(*r)


def save_bev_grid(path: str | Path, grid: BevGrid) -> None:
    """Write cells as flat float32 binary plus a textual header (<path>.hdr)."""
    path = Path(path)
    path.write_bytes(grid.cells.astype(np.float32).tobytes())
    spec = grid.spec
    header = {
        "shape": list(grid.cells.shape),
        "dtype": "float32",
        "x_range": list(spec.x_range),
        "y_range": list(spec.y_range),
        "z_range": list(spec.z_range),
        "resolution": spec.resolution,
        "n_slices": spec.n_slices,
    }
    path.with_suffix(path.suffix + ".hdr").write_text(json.dumps(header, indent=2) + "\n")


def load_bev_grid(path: str | Path) -> BevGrid:
    """Load a grid written by :func:`save_bev_grid`."""
    path = Path(path)
    header_path = path.with_suffix(path.suffix + ".hdr")
    if not header_path.exists():
        raise FormatError(f"missing header {header_path}")
    meta = json.loads(header_path.read_text())
    spec = BevGridSpec(
        x_range=tuple(meta["x_range"]), y_range=tuple(meta["y_range"]),
        z_range=tuple(meta["z_range"]), resolution=float(meta["resolution"]),
        n_slices=int(meta["n_slices"]),
    )
    raw = np.frombuffer(path.read_bytes(), dtype=np.dtype(meta.get("dtype", "float32")))
    shape = tuple(meta["shape"])
    if raw.size != int(np.prod(shape)):
        raise FormatError(f"payload has {raw.size} values, header declares {int(np.prod(shape))}")
    return BevGrid(spec, raw.reshape(shape).copy())
