//! JSON schema for part graphs and joint sets, with validating parse and
//! deterministic serialization.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    Convexity, CurveType, Entity, EntityType, Error, Joint, JointSet, PartGraph, PhysicalProps,
    SurfaceType,
};
use crate::geometry::RigidTransform;

#[derive(Debug, Serialize, Deserialize)]
struct PartDoc {
    part_id: String,
    bbox: [[f64; 3]; 2],
    mesh: String,
    nodes: Vec<NodeDoc>,
    links: Vec<LinkDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    physical: Option<PhysicalDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    id: usize,
    kind: String,
    #[serde(rename = "type")]
    entity_type: String,
    reversed: bool,
    length: f64,
    area: f64,
    dihedral: f64,
    convexity: Option<String>,
    axis_origin: Option<[f64; 3]>,
    axis_dir: Option<[f64; 3]>,
    radius: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkDoc {
    s: usize,
    t: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PhysicalDoc {
    volume: f64,
    moi: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct JointSetDoc {
    parts: [String; 2],
    joints: Vec<JointDoc>,
    holes: [bool; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct JointDoc {
    u: usize,
    v: usize,
    transform: Vec<f64>,
    offset: f64,
    rotation: f64,
    flip: bool,
}

fn json_error(err: serde_json::Error) -> Error {
    match err.classify() {
        serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
            Error::MalformedDocument(err.to_string())
        }
        _ => Error::SchemaViolation(err.to_string()),
    }
}

fn parse_entity_type(kind: &str, name: &str) -> Result<EntityType, Error> {
    let ty = match kind {
        "face" => EntityType::Surface(match name {
            "Plane" => SurfaceType::Plane,
            "Cylinder" => SurfaceType::Cylinder,
            "Cone" => SurfaceType::Cone,
            "Sphere" => SurfaceType::Sphere,
            "Torus" => SurfaceType::Torus,
            "EllipticalCylinder" => SurfaceType::EllipticalCylinder,
            "EllipticalCone" => SurfaceType::EllipticalCone,
            "Nurbs" => SurfaceType::Nurbs,
            _ => {
                return Err(Error::SchemaViolation(format!(
                    "unknown surface type {name:?}"
                )))
            }
        }),
        "edge" => EntityType::Curve(match name {
            "Line" => CurveType::Line,
            "Arc" => CurveType::Arc,
            "Circle" => CurveType::Circle,
            "Ellipse" => CurveType::Ellipse,
            "EllipticalArc" => CurveType::EllipticalArc,
            "Nurbs" => CurveType::Nurbs,
            _ => {
                return Err(Error::SchemaViolation(format!(
                    "unknown curve type {name:?}"
                )))
            }
        }),
        other => {
            return Err(Error::SchemaViolation(format!(
                "unknown entity kind {other:?}"
            )))
        }
    };
    Ok(ty)
}

fn parse_direction(raw: [f64; 3]) -> Result<nalgebra::Unit<Vector3<f64>>, Error> {
    let v = Vector3::new(raw[0], raw[1], raw[2]);
    let norm = v.norm();
    if !norm.is_finite() || norm < 1e-6 {
        return Err(Error::InvalidGeometry(format!(
            "direction {raw:?} cannot be normalized"
        )));
    }
    // Leave already-unit vectors untouched so parse ∘ serialize is exact.
    if (norm - 1.0).abs() <= 1e-12 {
        Ok(nalgebra::Unit::new_unchecked(v))
    } else {
        Ok(nalgebra::Unit::new_normalize(v))
    }
}

pub fn parse_part_graph(text: &str) -> Result<PartGraph, Error> {
    let doc: PartDoc = serde_json::from_str(text).map_err(json_error)?;

    let mut nodes = Vec::with_capacity(doc.nodes.len());
    let mut id_to_index = std::collections::HashMap::new();
    for (index, node) in doc.nodes.iter().enumerate() {
        if id_to_index.insert(node.id, index).is_some() {
            return Err(Error::SchemaViolation(format!(
                "duplicate node id {}",
                node.id
            )));
        }
        let entity_type = parse_entity_type(&node.kind, &node.entity_type)?;
        for (label, value) in [
            ("length", node.length),
            ("area", node.area),
            ("dihedral", node.dihedral),
        ] {
            if !value.is_finite() {
                return Err(Error::InvalidGeometry(format!(
                    "node {}: non-finite {label}",
                    node.id
                )));
            }
        }
        if node.length < 0.0 || node.area < 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "node {}: negative length or area",
                node.id
            )));
        }
        let convexity = match node.convexity.as_deref() {
            None => None,
            Some("Convex") => Some(Convexity::Convex),
            Some("Concave") => Some(Convexity::Concave),
            Some("Smooth") => Some(Convexity::Smooth),
            Some(other) => {
                return Err(Error::SchemaViolation(format!(
                    "unknown convexity {other:?}"
                )))
            }
        };
        let axis_origin = node.axis_origin.map(|o| Point3::new(o[0], o[1], o[2]));
        let axis_dir = node.axis_dir.map(parse_direction).transpose()?;

        if !entity_type.is_nurbs() {
            let needs_dir = !matches!(entity_type, EntityType::Surface(SurfaceType::Sphere));
            if axis_origin.is_none() || (needs_dir && axis_dir.is_none()) {
                return Err(Error::SchemaViolation(format!(
                    "node {} ({}) is missing joint axis parameters",
                    node.id,
                    entity_type.name()
                )));
            }
        }
        nodes.push(Entity {
            entity_type,
            reversed: node.reversed,
            length: node.length,
            area: node.area,
            dihedral: node.dihedral,
            convexity,
            axis_origin,
            axis_dir,
            radius: node.radius,
        });
    }

    let mut links = Vec::with_capacity(doc.links.len());
    for link in &doc.links {
        let (s, t) = (
            *id_to_index.get(&link.s).ok_or_else(|| {
                Error::SchemaViolation(format!("link references unknown node {}", link.s))
            })?,
            *id_to_index.get(&link.t).ok_or_else(|| {
                Error::SchemaViolation(format!("link references unknown node {}", link.t))
            })?,
        );
        if s == t {
            return Err(Error::SchemaViolation(format!(
                "self-loop on node {}",
                link.s
            )));
        }
        links.push((s, t));
    }

    let bbox_min = Point3::new(doc.bbox[0][0], doc.bbox[0][1], doc.bbox[0][2]);
    let bbox_max = Point3::new(doc.bbox[1][0], doc.bbox[1][1], doc.bbox[1][2]);
    if bbox_min.coords.iter().chain(bbox_max.coords.iter()).any(|v| !v.is_finite())
        || (0..3).any(|i| bbox_min[i] > bbox_max[i])
    {
        return Err(Error::InvalidGeometry("invalid bounding box".into()));
    }

    Ok(PartGraph {
        part_id: doc.part_id,
        bbox_min,
        bbox_max,
        mesh: doc.mesh,
        nodes,
        links,
        physical: doc.physical.map(|p| PhysicalProps {
            volume: p.volume,
            moments: p.moi,
        }),
    })
}

pub fn serialize_part_graph(part: &PartGraph) -> String {
    let doc = PartDoc {
        part_id: part.part_id.clone(),
        bbox: [
            [part.bbox_min.x, part.bbox_min.y, part.bbox_min.z],
            [part.bbox_max.x, part.bbox_max.y, part.bbox_max.z],
        ],
        mesh: part.mesh.clone(),
        nodes: part
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| NodeDoc {
                id,
                kind: match n.kind() {
                    super::EntityKind::Face => "face".into(),
                    super::EntityKind::Edge => "edge".into(),
                },
                entity_type: n.entity_type.name().into(),
                reversed: n.reversed,
                length: n.length,
                area: n.area,
                dihedral: n.dihedral,
                convexity: n.convexity.map(|c| {
                    match c {
                        Convexity::Convex => "Convex",
                        Convexity::Concave => "Concave",
                        Convexity::Smooth => "Smooth",
                    }
                    .into()
                }),
                axis_origin: n.axis_origin.map(|o| [o.x, o.y, o.z]),
                axis_dir: n.axis_dir.map(|d| [d.x, d.y, d.z]),
                radius: n.radius,
            })
            .collect(),
        links: part.links.iter().map(|&(s, t)| LinkDoc { s, t }).collect(),
        physical: part.physical.map(|p| PhysicalDoc {
            volume: p.volume,
            moi: p.moments,
        }),
    };
    serde_json::to_string_pretty(&doc).expect("part graph serialization cannot fail")
}

pub fn parse_joint_set(text: &str) -> Result<JointSet, Error> {
    let doc: JointSetDoc = serde_json::from_str(text).map_err(json_error)?;
    if doc.joints.is_empty() {
        return Err(Error::SchemaViolation("joint set has no joints".into()));
    }
    let mut joints = Vec::with_capacity(doc.joints.len());
    for j in &doc.joints {
        let m: [f64; 16] = j.transform.as_slice().try_into().map_err(|_| {
            Error::SchemaViolation(format!(
                "transform has {} entries, expected 16",
                j.transform.len()
            ))
        })?;
        let transform = RigidTransform::from_mat16(&m)
            .map_err(|e| Error::InvalidGeometry(format!("joint ({}, {}): {e}", j.u, j.v)))?;
        joints.push(Joint {
            u: j.u,
            v: j.v,
            transform,
            offset: j.offset,
            rotation: j.rotation,
            flip: j.flip,
        });
    }
    Ok(JointSet {
        part1: doc.parts[0].clone(),
        part2: doc.parts[1].clone(),
        joints,
        holes: (doc.holes[0], doc.holes[1]),
    })
}

pub fn serialize_joint_set(set: &JointSet) -> String {
    let doc = JointSetDoc {
        parts: [set.part1.clone(), set.part2.clone()],
        joints: set
            .joints
            .iter()
            .map(|j| JointDoc {
                u: j.u,
                v: j.v,
                transform: j.transform.to_mat16().to_vec(),
                offset: j.offset,
                rotation: j.rotation,
                flip: j.flip,
            })
            .collect(),
        holes: [set.holes.0, set.holes.1],
    };
    serde_json::to_string_pretty(&doc).expect("joint set serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_doc() -> String {
        r#"{
            "part_id": "p0",
            "bbox": [[0,0,0],[1,1,1]],
            "mesh": "p0.obj",
            "nodes": [
                {"id": 0, "kind": "face", "type": "Plane", "reversed": false,
                 "length": 0.0, "area": 1.0, "dihedral": 0.0, "convexity": null,
                 "axis_origin": [0,0,0], "axis_dir": [0,0,1], "radius": null}
            ],
            "links": []
        }"#
        .to_string()
    }

    #[test]
    fn minimal_single_vertex_graph() {
        let g = parse_part_graph(&minimal_doc()).unwrap();
        assert_eq!(g.num_nodes(), 1);
        assert!(g.links.is_empty());
        assert_eq!(g.nodes[0].entity_type, EntityType::Surface(SurfaceType::Plane));
    }

    #[test]
    fn syntax_error_is_malformed_document() {
        let err = parse_part_graph("{not json").unwrap_err();
        assert!(matches!(err, Error::MalformedDocument(_)), "{err:?}");
    }

    #[test]
    fn missing_field_is_schema_violation() {
        let err = parse_part_graph(r#"{"part_id": "x"}"#).unwrap_err();
        assert!(matches!(err, Error::SchemaViolation(_)), "{err:?}");
    }

    #[test]
    fn bad_enum_is_schema_violation() {
        let doc = minimal_doc().replace("\"Plane\"", "\"Hyperboloid\"");
        let err = parse_part_graph(&doc).unwrap_err();
        assert!(matches!(err, Error::SchemaViolation(_)), "{err:?}");
    }

    #[test]
    fn direction_is_normalized() {
        let doc = minimal_doc().replace("\"axis_dir\": [0,0,1]", "\"axis_dir\": [0,0,2]");
        let g = parse_part_graph(&doc).unwrap();
        let d = g.nodes[0].axis_dir.unwrap();
        assert!((d.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_direction_is_invalid_geometry() {
        let doc = minimal_doc().replace("\"axis_dir\": [0,0,1]", "\"axis_dir\": [0,0,0]");
        let err = parse_part_graph(&doc).unwrap_err();
        assert!(matches!(err, Error::InvalidGeometry(_)), "{err:?}");
    }

    #[test]
    fn self_loop_rejected() {
        let doc = minimal_doc().replace("\"links\": []", "\"links\": [{\"s\":0,\"t\":0}]");
        let err = parse_part_graph(&doc).unwrap_err();
        assert!(matches!(err, Error::SchemaViolation(_)), "{err:?}");
    }

    #[test]
    fn round_trip_is_identity() {
        let doc = minimal_doc();
        let g1 = parse_part_graph(&doc).unwrap();
        let g2 = parse_part_graph(&serialize_part_graph(&g1)).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn joint_set_round_trip_and_rigidity() {
        let set = JointSet {
            part1: "a".into(),
            part2: "b".into(),
            joints: vec![Joint {
                u: 1,
                v: 2,
                transform: RigidTransform::identity(),
                offset: 0.5,
                rotation: -1.25,
                flip: true,
            }],
            holes: (true, false),
        };
        let text = serialize_joint_set(&set);
        let back = parse_joint_set(&text).unwrap();
        assert_eq!(set, back);

        let bad = text.replace("1.0,", "2.0,");
        assert!(parse_joint_set(&bad).is_err());
    }

    #[test]
    fn empty_joint_list_rejected() {
        let err =
            parse_joint_set(r#"{"parts":["a","b"],"joints":[],"holes":[false,false]}"#).unwrap_err();
        assert!(matches!(err, Error::SchemaViolation(_)), "{err:?}");
    }
}
