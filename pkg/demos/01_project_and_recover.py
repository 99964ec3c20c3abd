"""Project a 3D box to a structured polygon, then recover it from height alone.

Walks the core decoupled pipeline step by step:

    box -> cuboid -> structured polygon -> edge heights -> depths -> box

With exact inputs the recovery is exact; with pixel noise it degrades
gracefully, which the last section shows numerically.
"""

import numpy as np

from mono3d import (
    Box3D,
    CameraIntrinsics,
    box_to_cuboid,
    edge_pixel_heights,
    oracle_polygon_provider,
    project_box,
    recover_coarse_box,
)

K = CameraIntrinsics(fx=700, fy=700, cu=600, cv=180)
box = Box3D(x=2.0, y=1.2, z=18.0, l=4.2, w=1.7, h=1.46, theta=0.35)

print("ground-truth box:", box)

cuboid = box_to_cuboid(box)
print("\ncuboid vertices (X, Y, Z), canonical order P1..P8:")
print(np.round(cuboid.vertices, 3))

poly = project_box(K, box)
print("\nprojected structured polygon (u, v):")
print(np.round(poly.vertices, 2))

heights = edge_pixel_heights(poly)
print("\nvertical edge pixel heights:", np.round(heights, 3))
print("per-edge depths f*H/h:", np.round(K.fx * box.h / heights, 4))

recovered = recover_coarse_box(K, poly, box.h)
print("\nnoiseless recovery:", recovered)

print("\nrecovery under pixel noise (average absolute errors, 200 trials):")
rng = np.random.default_rng(0)
for sigma in (0.25, 0.5, 1.0, 2.0):
    errs = []
    for _ in range(200):
        noisy = oracle_polygon_provider(K, box, sigma=sigma, rng=rng).polygon
        rec = recover_coarse_box(K, noisy, box.h)
        errs.append([abs(rec.x - box.x), abs(rec.z - box.z)])
    ex, ez = np.mean(errs, axis=0)
    print(f"  sigma = {sigma:4.2f} px   |dX| = {ex:.3f} m   |dZ| = {ez:.3f} m")
