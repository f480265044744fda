"""Gaussian clouds, primitives, bounding boxes and spatial queries."""
from .cloud import GaussianCloud, Pose, centroid_world, opacity_binarization_penalty
from .density import curvature_score, rescale_to, trimmed_extents, voxel_downsample
from .obb import (
    GeometryWarning,
    OrientedBoundingBox,
    bottom_vertices_z,
    fit_obb,
    oriented_bounding_box,
    top_height,
)
from .ply import (
    PlyError,
    read_composite_ply,
    read_ply,
    write_composite_ply,
    write_ply,
)
from .primitives import SHAPES, generate_primitive
from .spatial import SpatialIndex, min_pair_distance, nearest_brute_force, nearest_in
from .transforms import canonicalize_rotvec, right_jacobian, rotvec_to_matrix

__all__ = [
    "GaussianCloud", "Pose", "centroid_world", "opacity_binarization_penalty",
    "curvature_score", "rescale_to", "trimmed_extents", "voxel_downsample",
    "GeometryWarning", "OrientedBoundingBox", "bottom_vertices_z", "fit_obb",
    "oriented_bounding_box", "top_height",
    "PlyError", "read_composite_ply", "read_ply", "write_composite_ply", "write_ply",
    "SHAPES", "generate_primitive",
    "SpatialIndex", "min_pair_distance", "nearest_brute_force", "nearest_in",
    "canonicalize_rotvec", "right_jacobian", "rotvec_to_matrix",
]
