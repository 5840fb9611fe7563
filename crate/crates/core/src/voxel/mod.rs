//! Occupancy grids, the depth camera, PCA alignment and the IOU metric.

mod align;
mod camera;
mod grid;
mod metric;
mod transform;

pub use align::{pca_align, principal_alignment, PcaAlignment};
pub use camera::{depth_to_partial_grid, enumerate_rotations, render_depth, rotate_grid, CameraPose, DepthImage, NO_HIT};
pub use grid::{GridKind, VoxelGrid};
pub use metric::{binarize, iou, DEFAULT_THRESHOLD};
pub use transform::{resample, RigidAlignment};
