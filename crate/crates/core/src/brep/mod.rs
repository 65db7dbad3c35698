//! B-Rep part graphs: entities (faces and edges), adjacency, per-entity
//! features and joint axes, and the joint sets that label pairs of parts.

mod axes;
mod connectivity;
mod features;
mod schema;

pub use axes::{axes_collinear, derive_axis, expand_equivalents, find_siblings, CollinearTol};
pub use connectivity::{build_connectivity, ConnectivityIndex};
pub use features::{featurize, FeatureMask, FULL_FEATURE_WIDTH};
pub use schema::{parse_joint_set, parse_part_graph, serialize_joint_set, serialize_part_graph};

use nalgebra::{Point3, Unit, Vector3};
use thiserror::Error as ThisError;

use crate::geometry::RigidTransform;

#[derive(Debug, ThisError)]
pub enum Error {
    /// The document is not valid JSON.
    #[error("malformed document: {0}")]
    MalformedDocument(String),

    /// Valid JSON that does not satisfy the schema.
    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// NURBS entities carry no joint axis.
    #[error("entity {index} ({entity_type}) does not support a joint axis")]
    UnsupportedEntity { index: usize, entity_type: String },

    #[error("graph has no vertices")]
    EmptyGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Face,
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SurfaceType {
    Plane,
    Cylinder,
    Cone,
    Sphere,
    Torus,
    EllipticalCylinder,
    EllipticalCone,
    Nurbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CurveType {
    Line,
    Arc,
    Circle,
    Ellipse,
    EllipticalArc,
    Nurbs,
}

/// The surface or curve class of an entity; determines both the feature
/// one-hot slot and how its joint axis is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityType {
    Surface(SurfaceType),
    Curve(CurveType),
}

impl EntityType {
    pub fn kind(&self) -> EntityKind {
        match self {
            EntityType::Surface(_) => EntityKind::Face,
            EntityType::Curve(_) => EntityKind::Edge,
        }
    }

    pub fn is_nurbs(&self) -> bool {
        matches!(
            self,
            EntityType::Surface(SurfaceType::Nurbs) | EntityType::Curve(CurveType::Nurbs)
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            EntityType::Surface(s) => match s {
                SurfaceType::Plane => "Plane",
                SurfaceType::Cylinder => "Cylinder",
                SurfaceType::Cone => "Cone",
                SurfaceType::Sphere => "Sphere",
                SurfaceType::Torus => "Torus",
                SurfaceType::EllipticalCylinder => "EllipticalCylinder",
                SurfaceType::EllipticalCone => "EllipticalCone",
                SurfaceType::Nurbs => "Nurbs",
            },
            EntityType::Curve(c) => match c {
                CurveType::Line => "Line",
                CurveType::Arc => "Arc",
                CurveType::Circle => "Circle",
                CurveType::Ellipse => "Ellipse",
                CurveType::EllipticalArc => "EllipticalArc",
                CurveType::Nurbs => "Nurbs",
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Convexity {
    Convex,
    Concave,
    Smooth,
}

/// One B-Rep entity: a face or an edge, with its stored features and the
/// geometric parameters its joint axis is looked up from.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub entity_type: EntityType,
    pub reversed: bool,
    /// Curve length for edges; 0 for faces.
    pub length: f64,
    /// Surface area for faces; 0 for edges. Stored but inactive by default.
    pub area: f64,
    /// Dihedral angle for edges, radians. Stored but inactive by default.
    pub dihedral: f64,
    pub convexity: Option<Convexity>,
    pub axis_origin: Option<Point3<f64>>,
    pub axis_dir: Option<Unit<Vector3<f64>>>,
    pub radius: Option<f64>,
}

impl Entity {
    pub fn kind(&self) -> EntityKind {
        self.entity_type.kind()
    }
}

/// Joint axis: an origin point and a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub origin: Point3<f64>,
    pub direction: Unit<Vector3<f64>>,
}

impl AxisSpec {
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Result<Self, Error> {
        let norm = direction.norm();
        if norm < 1e-6 || !norm.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "axis direction {direction:?} cannot be normalized"
            )));
        }
        Ok(Self {
            origin,
            direction: Unit::new_normalize(direction),
        })
    }
}

/// Physical properties needed by part hashing: volume and principal moments
/// of inertia (unit density, centroid-local principal axes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalProps {
    pub volume: f64,
    pub moments: [f64; 3],
}

/// One part's B-Rep topology graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PartGraph {
    pub part_id: String,
    pub bbox_min: Point3<f64>,
    pub bbox_max: Point3<f64>,
    /// Mesh file reference (path relative to the dataset root).
    pub mesh: String,
    pub nodes: Vec<Entity>,
    /// Undirected adjacency over node indices; no self-loops.
    pub links: Vec<(usize, usize)>,
    pub physical: Option<PhysicalProps>,
}

impl PartGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        (self.bbox_max - self.bbox_min).norm()
    }

    /// Number of adjacency links touching each node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.nodes.len()];
        for &(s, t) in &self.links {
            deg[s] += 1;
            deg[t] += 1;
        }
        deg
    }

    /// Indices of NURBS entities (kept in the graph, masked from targets).
    pub fn nurbs_indices(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.entity_type.is_nurbs())
            .map(|(i, _)| i)
            .collect()
    }
}

/// One ground-truth joint between two parts: the selected entity on each
/// part, the assembled transform of part 1, and its pose parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub u: usize,
    pub v: usize,
    pub transform: RigidTransform,
    pub offset: f64,
    pub rotation: f64,
    pub flip: bool,
}

/// All known joints between one unordered pair of parts.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSet {
    pub part1: String,
    pub part2: String,
    pub joints: Vec<Joint>,
    /// Whether each part contains a hole (evaluation breakdown flag).
    pub holes: (bool, bool),
}

impl JointSet {
    /// Check entity indices against the actual part graphs.
    pub fn validate_against(&self, g1: &PartGraph, g2: &PartGraph) -> Result<(), Error> {
        for j in &self.joints {
            if j.u >= g1.num_nodes() || j.v >= g2.num_nodes() {
                return Err(Error::SchemaViolation(format!(
                    "joint ({}, {}) out of range for parts with {} and {} entities",
                    j.u,
                    j.v,
                    g1.num_nodes(),
                    g2.num_nodes()
                )));
            }
        }
        Ok(())
    }
}
