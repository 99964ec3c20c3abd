"""Synthetic KITTI-style scenes for oracle pipelines and noise benchmarks.

Scenes are sampled from car-like dimension statistics in front of a fixed
camera; every generator is deterministic given a seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import Box3D, CameraIntrinsics, project_box
from .kitti import CalibFile, LabelRecord, write_calib, write_labels


def default_camera() -> CameraIntrinsics:
    """A KITTI-like camera: f = 700 px, principal point (600, 180)."""
    return CameraIntrinsics(fx=700.0, fy=700.0, cu=600.0, cv=180.0)


def random_box(rng: np.random.Generator, z_range: tuple[float, float] = (5.0, 50.0),
               theta_range: tuple[float, float] = (-np.pi, np.pi)) -> Box3D:
    """A plausible car box inside the camera frustum."""
    z = rng.uniform(*z_range)
    # lateral position kept well inside the view cone
    x = rng.uniform(-0.35, 0.35) * z
    y = rng.uniform(1.4, 1.8)
    l = rng.uniform(3.2, 4.6)
    w = rng.uniform(1.5, 1.9)
    h = rng.uniform(1.3, 1.7)
    theta = rng.uniform(*theta_range)
    return Box3D(x=x, y=y, z=z, l=l, w=w, h=h, theta=theta)


def box_to_label(K: CameraIntrinsics, b: Box3D, label: str = "Car") -> LabelRecord:
    """Ground-truth record for a synthetic box; bbox2d from the projected cuboid."""
    verts = project_box(K, b).vertices
    bbox = (float(verts[:, 0].min()), float(verts[:, 1].min()),
            float(verts[:, 0].max()), float(verts[:, 1].max()))
    alpha = b.theta - float(np.arctan2(b.x, b.z))
    return LabelRecord(label=label, truncation=0.0, occlusion=0, alpha=alpha,
                       bbox2d=bbox, h=b.h, w=b.w, l=b.l, x=b.x, y=b.y, z=b.z,
                       rotation_y=b.theta)


def make_frame(rng: np.random.Generator, n_objects: int = 3,
               K: CameraIntrinsics | None = None,
               z_range: tuple[float, float] = (8.0, 45.0)) -> list[Box3D]:
    """Sample boxes whose cuboids are fully in front of the camera."""
    K = K or default_camera()
    boxes = []
    while len(boxes) < n_objects:
        b = random_box(rng, z_range=z_range)
        try:
            project_box(K, b)
        except Exception:
            continue
        boxes.append(b)
    return boxes


def render_depth(K: CameraIntrinsics, boxes: list[Box3D],
                 shape: tuple[int, int] = (96, 320), ground_y: float = 1.65,
                 image_shape: tuple[int, int] = (370, 1224)) -> np.ndarray:
    """A coarse synthetic depth map: ground plane plus box-shaped occluders.

    The raster is a downsampled view of `image_shape`; each box paints its
    projected 2D extent at the box's depth where nearer than what is already
    there.  Good enough to exercise the BEV pipeline, not a renderer.
    """
    H, W = shape
    su = image_shape[1] / W
    sv = image_shape[0] / H
    u = (np.arange(W) + 0.5) * su
    v = (np.arange(H) + 0.5) * sv
    uu, vv = np.meshgrid(u, v)
    depth = np.zeros((H, W))
    # ground plane y = ground_y: Z = fy * ground_y / (v - cv) below the horizon
    below = vv > K.cv + 1e-6
    with np.errstate(divide="ignore"):
        zg = K.fy * ground_y / (vv - K.cv)
    valid = below & (zg > 0.5) & (zg < 80.0)
    depth[valid] = zg[valid]
    for b in boxes:
        verts = project_box(K, b).vertices
        u1, v1 = verts.min(axis=0)
        u2, v2 = verts.max(axis=0)
        mask = (uu >= u1) & (uu <= u2) & (vv >= v1) & (vv <= v2)
        nearer = mask & ((depth == 0) | (depth > b.z))
        depth[nearer] = b.z
    return depth


def depth_raster_camera(K: CameraIntrinsics, shape: tuple[int, int] = (96, 320),
                        image_shape: tuple[int, int] = (370, 1224)) -> CameraIntrinsics:
    """Intrinsics matching a render_depth raster, for exact back-projection."""
    return K.scaled(image_shape[1] / shape[1], image_shape[0] / shape[0])


def write_synthetic_dataset(root: str | Path, n_frames: int, seed: int,
                            n_objects: int = 3,
                            K: CameraIntrinsics | None = None) -> list[str]:
    """Write calib/ and label_2/ trees plus a split file; returns frame ids."""
    root = Path(root)
    (root / "calib").mkdir(parents=True, exist_ok=True)
    (root / "label_2").mkdir(parents=True, exist_ok=True)
    K = K or default_camera()
    P2 = K.as_matrix()
    calib_text = write_calib(CalibFile(matrices={"P2": P2}))
    frame_ids = []
    for i in range(n_frames):
        frame_id = f"{i:06d}"
        rng = np.random.default_rng([seed, i])
        boxes = make_frame(rng, n_objects=n_objects, K=K)
        (root / "calib" / f"{frame_id}.txt").write_text(calib_text)
        labels = write_labels([box_to_label(K, b) for b in boxes])
        (root / "label_2" / f"{frame_id}.txt").write_text(labels)
        frame_ids.append(frame_id)
    (root / "split.txt").write_text("\n".join(frame_ids) + "\n")
    return frame_ids
