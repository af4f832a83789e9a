//! Camera projection, point association, entity localization and the
//! pairwise relation function.

mod camera;
mod geometry;
mod relations;

use thiserror::Error;

pub use camera::{CameraError, CameraModel, Intrinsics};
pub use geometry::{
    entity_box3d, entity_center, entity_estimate, points_in_box, PixelGrid, MIN_HALF_EXTENT,
};
pub use relations::{
    compute_relations, direction_sector, distance_bin, edge_sort_key, ground_distance, occludes,
    occludes_boxes, robot_sector, DistanceBin, EdgeKind, Frame, RelationConfig, Sector,
};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum GeometryError {
    #[error("EmptyAssociation: no points fall inside the detection box")]
    EmptyAssociation,
    #[error("CoincidentPositions: reference and target share a ground position")]
    CoincidentPositions,
}
