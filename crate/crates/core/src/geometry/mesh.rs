use std::collections::BTreeMap;

use nalgebra::Point3;

use super::{Error, RigidTransform};

/// Indexed triangle mesh with precomputed areas and signed volume.
/// `groups` maps B-Rep face ids to the triangle indices tessellating them.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
    groups: BTreeMap<usize, Vec<usize>>,
    tri_areas: Vec<f64>,
    total_area: f64,
    signed_volume: f64,
}

impl TriMesh {
    pub fn new(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[usize; 3]>,
        groups: BTreeMap<usize, Vec<usize>>,
    ) -> Result<Self, Error> {
        for tri in &triangles {
            for &i in tri {
                if i >= vertices.len() {
                    return Err(Error::IndexOutOfRange {
                        index: i as i64,
                        count: vertices.len(),
                    });
                }
            }
        }
        for tris in groups.values() {
            if let Some(&bad) = tris.iter().find(|&&t| t >= triangles.len()) {
                return Err(Error::IndexOutOfRange {
                    index: bad as i64,
                    count: triangles.len(),
                });
            }
        }
        let tri_areas: Vec<f64> = triangles
            .iter()
            .map(|&[a, b, c]| {
                let ab = vertices[b] - vertices[a];
                let ac = vertices[c] - vertices[a];
                0.5 * ab.cross(&ac).norm()
            })
            .collect();
        let total_area: f64 = tri_areas.iter().sum();
        if !(total_area > 0.0) {
            return Err(Error::DegenerateMesh("total surface area is zero".into()));
        }
        // Divergence theorem: sum of signed tetrahedra against the origin.
        let signed_volume: f64 = triangles
            .iter()
            .map(|&[a, b, c]| {
                vertices[a]
                    .coords
                    .dot(&vertices[b].coords.cross(&vertices[c].coords))
                    / 6.0
            })
            .sum();
        Ok(Self {
            vertices,
            triangles,
            groups,
            tri_areas,
            total_area,
            signed_volume,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn groups(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.groups
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, i: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_areas(&self) -> &[f64] {
        &self.tri_areas
    }

    pub fn area(&self) -> f64 {
        self.total_area
    }

    /// Signed enclosed volume; orientation-dependent. Use `volume()` for the
    /// magnitude.
    pub fn signed_volume(&self) -> f64 {
        self.signed_volume
    }

    pub fn volume(&self) -> f64 {
        self.signed_volume.abs()
    }

    pub fn bbox(&self) -> (Point3<f64>, Point3<f64>) {
        let mut min = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut max = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            for i in 0..3 {
                min[i] = min[i].min(v[i]);
                max[i] = max[i].max(v[i]);
            }
        }
        (min, max)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (min, max) = self.bbox();
        (max - min).norm()
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriMesh {
        let vertices = self.vertices.iter().map(|&p| t.apply_point(p)).collect();
        TriMesh::new(vertices, self.triangles.clone(), self.groups.clone())
            .expect("rigid motion preserves mesh validity")
    }
}

/// Axis-aligned box as a watertight, outward-oriented triangle mesh.
pub fn box_mesh(min: Point3<f64>, max: Point3<f64>) -> Result<TriMesh, Error> {
    let mut vertices = Vec::with_capacity(8);
    for z in [min.z, max.z] {
        for y in [min.y, max.y] {
            for x in [min.x, max.x] {
                vertices.push(Point3::new(x, y, z));
            }
        }
    }
    // Quads wound counterclockwise seen from outside; index = x + 2y + 4z.
    let quads: [[usize; 4]; 6] = [
        [0, 2, 3, 1], // z min
        [4, 5, 7, 6], // z max
        [0, 1, 5, 4], // y min
        [2, 6, 7, 3], // y max
        [0, 4, 6, 2], // x min
        [1, 3, 7, 5], // x max
    ];
    let mut triangles = Vec::with_capacity(12);
    for [a, b, c, d] in quads {
        triangles.push([a, b, c]);
        triangles.push([a, c, d]);
    }
    TriMesh::new(vertices, triangles, BTreeMap::new())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn unit_cube_at(center: [f64; 3]) -> TriMesh {
        let c = Point3::new(center[0], center[1], center[2]);
        let half = nalgebra::Vector3::new(0.5, 0.5, 0.5);
        box_mesh(c - half, c + half).unwrap()
    }

    #[test]
    fn cube_area_and_volume() {
        let cube = unit_cube_at([0.0; 3]);
        assert_relative_eq!(cube.area(), 6.0, epsilon = 1e-12);
        // Positive signed volume confirms outward orientation.
        assert_relative_eq!(cube.signed_volume(), 1.0, epsilon = 1e-12);
        let shifted = unit_cube_at([10.0, -3.0, 2.0]);
        assert_relative_eq!(shifted.signed_volume(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn rigid_transform_preserves_area_and_volume() {
        let cube = unit_cube_at([1.0, 2.0, 3.0]);
        let t = RigidTransform {
            rot: nalgebra::Rotation3::from_euler_angles(0.3, -0.8, 1.4),
            trans: nalgebra::Vector3::new(-4.0, 0.5, 2.0),
        };
        let moved = cube.transformed(&t);
        assert_relative_eq!(moved.area(), 6.0, epsilon = 1e-9);
        assert_relative_eq!(moved.volume(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn bad_index_rejected() {
        let vertices = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)];
        let err = TriMesh::new(vertices, vec![[0, 1, 2]], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 2, .. }));
    }

    #[test]
    fn zero_area_mesh_rejected() {
        let vertices = vec![Point3::origin(); 3];
        let err = TriMesh::new(vertices, vec![[0, 1, 2]], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::DegenerateMesh(_)));
    }
}
