//! Per-entity input features. The default active set is the type one-hot,
//! the reversed flag, and the curve length; area, dihedral angle, and
//! convexity are stored in the data model but off by default.

use jf_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use super::{Convexity, CurveType, EntityType, PartGraph, SurfaceType};

pub const NUM_SURFACE_TYPES: usize = 8;
pub const NUM_CURVE_TYPES: usize = 6;
/// Width with every optional feature enabled.
pub const FULL_FEATURE_WIDTH: usize = NUM_SURFACE_TYPES + NUM_CURVE_TYPES + 2 + 2 + 3;

/// Which optional features to append after the always-active set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    #[serde(default)]
    pub area: bool,
    #[serde(default)]
    pub dihedral: bool,
    #[serde(default)]
    pub convexity: bool,
}

impl FeatureMask {
    pub fn width(&self) -> usize {
        NUM_SURFACE_TYPES
            + NUM_CURVE_TYPES
            + 2
            + usize::from(self.area)
            + usize::from(self.dihedral)
            + 3 * usize::from(self.convexity)
    }
}

fn surface_slot(s: SurfaceType) -> usize {
    match s {
        SurfaceType::Plane => 0,
        SurfaceType::Cylinder => 1,
        SurfaceType::Cone => 2,
        SurfaceType::Sphere => 3,
        SurfaceType::Torus => 4,
        SurfaceType::EllipticalCylinder => 5,
        SurfaceType::EllipticalCone => 6,
        SurfaceType::Nurbs => 7,
    }
}

fn curve_slot(c: CurveType) -> usize {
    NUM_SURFACE_TYPES
        + match c {
            CurveType::Line => 0,
            CurveType::Arc => 1,
            CurveType::Circle => 2,
            CurveType::Ellipse => 3,
            CurveType::EllipticalArc => 4,
            CurveType::Nurbs => 5,
        }
}

/// Feature matrix for one part, rows in vertex order. Faces zero the
/// edge-only slots and vice versa.
pub fn featurize(part: &PartGraph, mask: FeatureMask) -> Tensor {
    let width = mask.width();
    let mut data = vec![0.0; part.nodes.len() * width];
    for (i, node) in part.nodes.iter().enumerate() {
        let row = &mut data[i * width..(i + 1) * width];
        let slot = match node.entity_type {
            EntityType::Surface(s) => surface_slot(s),
            EntityType::Curve(c) => curve_slot(c),
        };
        row[slot] = 1.0;
        let base = NUM_SURFACE_TYPES + NUM_CURVE_TYPES;
        row[base] = f64::from(node.reversed);
        row[base + 1] = node.length;
        let mut at = base + 2;
        if mask.area {
            row[at] = node.area;
            at += 1;
        }
        if mask.dihedral {
            row[at] = node.dihedral;
            at += 1;
        }
        if mask.convexity {
            if let Some(c) = node.convexity {
                let offset = match c {
                    Convexity::Convex => 0,
                    Convexity::Concave => 1,
                    Convexity::Smooth => 2,
                };
                row[at + offset] = 1.0;
            }
        }
    }
    Tensor::new(vec![part.nodes.len(), width], data).expect("consistent row width")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brep::parse_part_graph;

    fn two_node_graph() -> PartGraph {
        parse_part_graph(
            r#"{
                "part_id": "p",
                "bbox": [[0,0,0],[1,1,1]],
                "mesh": "p.obj",
                "nodes": [
                    {"id": 0, "kind": "face", "type": "Plane", "reversed": false,
                     "length": 0.0, "area": 2.5, "dihedral": 0.0, "convexity": null,
                     "axis_origin": [0,0,0], "axis_dir": [0,0,1], "radius": null},
                    {"id": 1, "kind": "edge", "type": "Circle", "reversed": true,
                     "length": 6.2832, "area": 0.0, "dihedral": 1.5708, "convexity": "Convex",
                     "axis_origin": [0,0,1], "axis_dir": [0,0,1], "radius": 1.0}
                ],
                "links": [{"s": 0, "t": 1}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn default_width_is_sixteen() {
        assert_eq!(FeatureMask::default().width(), 16);
        let all = FeatureMask {
            area: true,
            dihedral: true,
            convexity: true,
        };
        assert_eq!(all.width(), FULL_FEATURE_WIDTH);
    }

    #[test]
    fn plane_face_row() {
        let f = featurize(&two_node_graph(), FeatureMask::default());
        let row = f.row(0);
        assert_eq!(row[surface_slot(SurfaceType::Plane)], 1.0);
        assert_eq!(row[14], 0.0); // not reversed
        assert_eq!(row[15], 0.0); // faces have zero length
    }

    #[test]
    fn circle_edge_row() {
        let f = featurize(&two_node_graph(), FeatureMask::default());
        let row = f.row(1);
        assert_eq!(row[curve_slot(CurveType::Circle)], 1.0);
        assert_eq!(row[14], 1.0);
        assert_eq!(row[15], 6.2832);
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let f = featurize(&two_node_graph(), FeatureMask::default());
        for i in 0..2 {
            let type_sum: f64 = f.row(i)[..NUM_SURFACE_TYPES + NUM_CURVE_TYPES].iter().sum();
            assert_eq!(type_sum, 1.0);
        }
    }

    #[test]
    fn optional_features_appended_in_order() {
        let mask = FeatureMask {
            area: true,
            dihedral: true,
            convexity: true,
        };
        let f = featurize(&two_node_graph(), mask);
        let face = f.row(0);
        assert_eq!(face[16], 2.5); // area
        assert_eq!(face[17], 0.0); // dihedral
        let edge = f.row(1);
        assert_eq!(edge[17], 1.5708);
        assert_eq!(edge[18], 1.0); // convex one-hot
    }
}
