"""Confidence-weighted TSDF volumetric mapping."""

from .geometry import CameraIntrinsics, Pose, backproject, project, transform
from .images import ConfidencePointCloud, FeatureImage, ScalarImage
from .stereo import (
    block_match,
    cosine_confidence,
    depth_to_pointcloud,
    disparity_to_depth,
    filter_by_confidence,
    patch_featurize,
    shift_features,
)
from .tsdf import (
    IntegrationConfig,
    IntegrationReport,
    TsdfMap,
    default_omega_max,
    integrate_frame,
    lookup_confidence,
    projective_distance,
    update_voxel,
    weight_confidence,
    weight_constant,
    weight_quadratic,
)
from .meshing import (
    TriangleMesh,
    VoxelCloud,
    confidence_to_color,
    export_ply,
    export_voxel_cloud,
    import_ply,
    marching_cubes,
)
from .scenes import (
    Box,
    Plane,
    Scene,
    Sphere,
    TrajectorySpec,
    make_reference_scenes,
    render_frame,
    sample_trajectory,
)
from .evaluation import (
    RegionWeightStats,
    SurfaceErrorReport,
    convergence_series,
    region_weight_stats,
    surface_error,
)
from .datasets import (
    DatasetManifest,
    EngineConfig,
    FrameEntry,
    load_manifest,
    parse_pose_file,
    read_pfm,
    save_manifest,
    write_pfm,
)

__version__ = "0.1.0"
