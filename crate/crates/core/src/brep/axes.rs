//! Joint-axis derivation (pure lookup of stored geometric parameters),
//! collinearity, equivalent-label expansion, and sibling detection.

use std::collections::BTreeSet;

use nalgebra::Vector3;

use super::{AxisSpec, Entity, EntityType, Error, PartGraph, SurfaceType};

/// Joint axis of one entity: planes use (centroid, normal); cylinders,
/// cones, tori, and their elliptical variants use (origin, axis); spheres
/// use (origin, global +Z); lines use (start, direction); closed curves use
/// (center, normal). NURBS entities have no axis.
pub fn derive_axis(part: &PartGraph, index: usize) -> Result<AxisSpec, Error> {
    entity_axis(&part.nodes[index], index)
}

pub(crate) fn entity_axis(entity: &Entity, index: usize) -> Result<AxisSpec, Error> {
    if entity.entity_type.is_nurbs() {
        return Err(Error::UnsupportedEntity {
            index,
            entity_type: entity.entity_type.name().into(),
        });
    }
    let origin = entity.axis_origin.ok_or_else(|| {
        Error::InvalidGeometry(format!("entity {index} has no stored axis origin"))
    })?;
    let direction = if matches!(entity.entity_type, EntityType::Surface(SurfaceType::Sphere)) {
        nalgebra::Unit::new_unchecked(Vector3::z())
    } else {
        entity.axis_dir.ok_or_else(|| {
            Error::InvalidGeometry(format!("entity {index} has no stored axis direction"))
        })?
    };
    Ok(AxisSpec { origin, direction })
}

#[derive(Debug, Clone, Copy)]
pub struct CollinearTol {
    /// Max angle between directions, radians, folded so opposite directions
    /// count as aligned.
    pub angle: f64,
    /// Max perpendicular point-to-line distance, model units, taken as the
    /// worse of the two origins against the other line.
    pub distance: f64,
}

fn point_line_distance(point: nalgebra::Point3<f64>, line: &AxisSpec) -> f64 {
    let rel = point - line.origin;
    (rel - line.direction.into_inner() * rel.dot(&line.direction)).norm()
}

/// Whether two axes describe the same infinite line, direction sign ignored.
pub fn axes_collinear(a: &AxisSpec, b: &AxisSpec, tol: &CollinearTol) -> bool {
    let da = a.direction.into_inner();
    let db = b.direction.into_inner();
    let sin = da.cross(&db).norm();
    let cos = da.dot(&db).abs();
    let angle = sin.atan2(cos);
    if angle > tol.angle {
        return false;
    }
    let dist = point_line_distance(b.origin, a).max(point_line_distance(a.origin, b));
    dist <= tol.distance
}

/// All entities of `part` whose axis is collinear with `entity_index`'s
/// (tolerances: 1e-4 rad, 1e-6 × bbox diagonal). Includes the input.
pub fn expand_equivalents(part: &PartGraph, entity_index: usize) -> Result<BTreeSet<usize>, Error> {
    let axis = derive_axis(part, entity_index)?;
    let tol = CollinearTol {
        angle: 1e-4,
        distance: 1e-6 * part.bbox_diagonal(),
    };
    let mut out = BTreeSet::new();
    out.insert(entity_index);
    for (i, node) in part.nodes.iter().enumerate() {
        if i == entity_index || node.entity_type.is_nurbs() {
            continue;
        }
        if let Ok(other) = entity_axis(node, i) {
            if axes_collinear(&axis, &other, &tol) {
                out.insert(i);
            }
        }
    }
    Ok(out)
}

fn rel_close(a: f64, b: f64, rel_tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel_tol * a.abs().max(b.abs())
}

/// Unlabeled entities that match a labeled one on exact type, area-or-length
/// within 0.1%, and adjacency degree; labeled entities and their equivalents
/// are excluded.
pub fn find_siblings(part: &PartGraph, labeled: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut excluded = labeled.clone();
    for &l in labeled {
        if let Ok(eq) = expand_equivalents(part, l) {
            excluded.extend(eq);
        }
    }
    let degrees = part.degrees();
    let mut out = BTreeSet::new();
    for (i, node) in part.nodes.iter().enumerate() {
        if excluded.contains(&i) {
            continue;
        }
        let matches_some_label = labeled.iter().any(|&l| {
            let label = &part.nodes[l];
            node.entity_type == label.entity_type
                && degrees[i] == degrees[l]
                && size_matches(node, label)
        });
        if matches_some_label {
            out.insert(i);
        }
    }
    out
}

fn size_matches(a: &Entity, b: &Entity) -> bool {
    match a.kind() {
        super::EntityKind::Face => rel_close(a.area, b.area, 1e-3),
        super::EntityKind::Edge => rel_close(a.length, b.length, 1e-3),
    }
}
