//! Signed distance queries against a triangle mesh. Magnitude comes from an
//! exact closest-triangle search, sign from the generalized winding number so
//! that meshes with small holes or duplicated faces still classify sanely.

use nalgebra::Point3;

use super::bvh::Bvh;
use super::winding::WindingTree;
use super::TriMesh;

#[derive(Debug)]
pub struct SignedDistanceField {
    bvh: Bvh,
    winding: WindingTree,
}

impl SignedDistanceField {
    pub fn new(mesh: &TriMesh) -> Self {
        Self {
            bvh: Bvh::build(mesh),
            winding: WindingTree::build(mesh),
        }
    }

    /// Distance to the surface, negative inside.
    pub fn distance(&self, p: Point3<f64>) -> f64 {
        let d = self.bvh.closest(p).0;
        if self.winding.winding_number(p) > 0.5 {
            -d
        } else {
            d
        }
    }

    pub fn unsigned_distance(&self, p: Point3<f64>) -> f64 {
        self.bvh.closest(p).0
    }

    pub fn inside(&self, p: Point3<f64>) -> bool {
        self.winding.winding_number(p) > 0.5
    }

    /// Closest point on the surface.
    pub fn project(&self, p: Point3<f64>) -> Point3<f64> {
        self.bvh.closest(p).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::bvh::point_triangle_distance_sq;
    use crate::geometry::mesh::tests::unit_cube_at;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cube_distances_match_analytic_values() {
        let sdf = SignedDistanceField::new(&unit_cube_at([0.0; 3]));
        assert_eq!(sdf.distance(Point3::origin()), -0.5);
        assert_eq!(sdf.distance(Point3::new(1.5, 0.0, 0.0)), 1.0);
        assert_eq!(sdf.distance(Point3::new(0.25, 0.0, 0.0)), -0.25);
        let corner = sdf.distance(Point3::new(1.5, 1.5, 1.5));
        assert!((corner - f64::sqrt(3.0)).abs() < 1e-12);
    }

    #[test]
    fn magnitude_equals_brute_force_minimum() {
        let cube = unit_cube_at([0.2, -0.1, 0.4]);
        let sdf = SignedDistanceField::new(&cube);
        let tris: Vec<_> = (0..cube.num_triangles()).map(|i| cube.triangle_points(i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = Point3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let brute = tris
                .iter()
                .map(|t| point_triangle_distance_sq(p, t))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            assert_eq!(sdf.distance(p).abs(), brute, "at {p:?}");
        }
    }

    #[test]
    fn sign_flips_exactly_at_the_skin_of_a_shifted_cube() {
        let sdf = SignedDistanceField::new(&unit_cube_at([10.0, 0.0, 0.0]));
        assert!(sdf.inside(Point3::new(10.2, 0.3, -0.3)));
        assert!(!sdf.inside(Point3::new(10.0, 0.0, 0.51)));
        assert!(sdf.distance(Point3::new(10.0, 0.4, 0.0)) < 0.0);
    }
}
