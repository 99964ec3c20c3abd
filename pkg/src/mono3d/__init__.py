"""Monocular 3D box recovery from projected cuboid vertices.

The pipeline: estimate the eight projected vertices of an object's cuboid
(the structured polygon), recover per-edge depths from the object height and
the camera focal length, back-project to a coarse 3D box, then optionally
refine it with residuals over a bird's-eye-view raster.  Learned components
are replaced by pluggable estimators (oracles with noise, or prediction
files), and a full KITTI-style evaluation stack is included.
"""

from .bev import (
    BevGrid,
    BevGridSpec,
    BoxResiduals,
    apply_residuals,
    depth_to_points,
    extract_3d_roi,
    load_bev_grid,
    oracle_residual_provider,
    rasterize_bev,
    residuals_between,
    save_bev_grid,
)
from .depth import (
    HeightPrior,
    decode_height,
    depth_from_height,
    edge_pixel_heights,
    encode_height,
    oracle_height,
    recover_coarse_box,
    smooth_l1,
)
from .errors import (
    DegenerateCuboidError,
    DegenerateEdgeError,
    FormatError,
    Mono3dError,
    NonPositiveDepthError,
    OutOfRangeError,
    ParseError,
    UndefinedMetricError,
)
from .evaluation import (
    Detection,
    Difficulty,
    EvalReport,
    GroundTruth,
    average_precision,
    difficulty_of,
    evaluate_detections,
    iou_3d,
    mean_depth_error,
    rotated_iou_bev,
)
from .geometry import (
    Box3D,
    CameraIntrinsics,
    Cuboid,
    StructuredPolygon,
    backproject_vertex,
    box_to_cuboid,
    cuboid_to_box,
    project_box,
    project_vertex,
    wrap_angle,
)
from .heatmap import (
    Heatmap,
    PolygonEstimate,
    decode_heatmap,
    euclidean_loss,
    load_heatmap,
    oracle_polygon_provider,
    render_target,
    save_heatmap,
)
from .kitti import (
    CalibFile,
    LabelRecord,
    load_depth_png,
    parse_calib,
    parse_heights,
    parse_labels,
    parse_polygons,
    parse_residuals,
    save_depth_png,
    write_calib,
    write_heights,
    write_labels,
    write_polygons,
    write_predictions,
    write_residuals,
)

__version__ = "0.1.0"
