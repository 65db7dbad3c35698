//! Triangle-mesh geometry: OBJ ingestion, BVH-accelerated signed distance
//! with winding-number sign, Monte-Carlo overlap/contact costs, rigid
//! transforms from axis pairs, and chamfer distance.

mod bvh;
mod chamfer;
mod cost;
mod kdtree;
mod mesh;
mod obj;
mod sample;
mod sdf;
mod transform;
mod winding;

pub use bvh::point_triangle_distance_sq;
pub use chamfer::chamfer;
pub use cost::{joint_cost, overlap_and_contact, CostConfig, CostEvaluator};
pub use kdtree::KdTree;
pub use mesh::{box_mesh, TriMesh};
pub use obj::{parse_obj, write_obj};
pub use sample::{sample_surface, sample_volume};
pub use sdf::SignedDistanceField;
pub use transform::{minimal_rotation, transform_from_axes, Pose, RigidTransform};

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    /// OBJ face with other than three vertices, or an unparseable line.
    #[error("malformed face: {0}")]
    MalformedFace(String),

    #[error("vertex index {index} out of range (have {count})")]
    IndexOutOfRange { index: i64, count: usize },

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("degenerate axis direction")]
    DegenerateDirection,

    #[error("point set is empty")]
    EmptySet,

    #[error("transform is not rigid: {0}")]
    NotRigid(String),
}
