//! Generalized winding number for inside/outside classification, robust to
//! the non-manifold meshes in the wild. Far clusters use a dipole (summed
//! area-vector) approximation; near clusters fall through to the exact
//! per-triangle solid angle.

use nalgebra::{Point3, Vector3};

use super::TriMesh;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;
/// Accuracy knob: clusters farther than `BETA × radius` use the dipole term.
const BETA: f64 = 2.0;
const LEAF_SIZE: usize = 8;

/// Signed solid angle of triangle `abc` seen from `p` (Van Oosterom &
/// Strackee), positive when the triangle faces away from `p`.
fn solid_angle(p: Point3<f64>, a: Point3<f64>, b: Point3<f64>, c: Point3<f64>) -> f64 {
    let av = a - p;
    let bv = b - p;
    let cv = c - p;
    let la = av.norm();
    let lb = bv.norm();
    let lc = cv.norm();
    let num = av.dot(&bv.cross(&cv));
    let den = la * lb * lc + av.dot(&bv) * lc + bv.dot(&cv) * la + cv.dot(&av) * lb;
    2.0 * num.atan2(den)
}

#[derive(Debug)]
enum Kind {
    Leaf { start: usize, count: usize },
    Internal { left: usize, right: usize },
}

#[derive(Debug)]
struct Cluster {
    center: Point3<f64>,
    /// Bounding-sphere radius around `center` over all cluster vertices.
    radius: f64,
    /// Σ area·normal over the cluster, the dipole strength.
    area_normal: Vector3<f64>,
    kind: Kind,
}

#[derive(Debug)]
pub(crate) struct WindingTree {
    clusters: Vec<Cluster>,
    tris: Vec<[Point3<f64>; 3]>,
}

impl WindingTree {
    pub fn build(mesh: &TriMesh) -> Self {
        let mut tris: Vec<[Point3<f64>; 3]> =
            (0..mesh.num_triangles()).map(|i| mesh.triangle_points(i)).collect();
        let mut clusters = Vec::new();
        let count = tris.len();
        build_cluster(&mut tris, 0, count, &mut clusters);
        Self { clusters, tris }
    }

    /// Generalized winding number of `p`: ≈1 inside a closed
    /// outward-oriented surface, ≈0 outside.
    pub fn winding_number(&self, p: Point3<f64>) -> f64 {
        self.eval(self.clusters.len() - 1, p)
    }

    #[cfg(test)]
    pub fn winding_number_exact(&self, p: Point3<f64>) -> f64 {
        self.tris
            .iter()
            .map(|t| solid_angle(p, t[0], t[1], t[2]))
            .sum::<f64>()
            / FOUR_PI
    }

    fn eval(&self, id: usize, p: Point3<f64>) -> f64 {
        let cl = &self.clusters[id];
        let rel = cl.center - p;
        let dist = rel.norm();
        if dist > BETA * cl.radius && dist > 0.0 {
            return cl.area_normal.dot(&rel) / (FOUR_PI * dist * dist * dist);
        }
        match cl.kind {
            Kind::Leaf { start, count } => self.tris[start..start + count]
                .iter()
                .map(|t| solid_angle(p, t[0], t[1], t[2]))
                .sum::<f64>()
                / FOUR_PI,
            Kind::Internal { left, right } => self.eval(left, p) + self.eval(right, p),
        }
    }
}

fn tri_area_normal(t: &[Point3<f64>; 3]) -> Vector3<f64> {
    0.5 * (t[1] - t[0]).cross(&(t[2] - t[0]))
}

fn build_cluster(
    tris: &mut [[Point3<f64>; 3]],
    start: usize,
    count: usize,
    clusters: &mut Vec<Cluster>,
) -> usize {
    let slice = &tris[start..start + count];
    let mut area_normal = Vector3::zeros();
    let mut weighted = Vector3::zeros();
    let mut total_area = 0.0;
    let mut mean = Vector3::zeros();
    for t in slice {
        let an = tri_area_normal(t);
        let area = an.norm();
        let centroid = (t[0].coords + t[1].coords + t[2].coords) / 3.0;
        area_normal += an;
        weighted += area * centroid;
        total_area += area;
        mean += centroid;
    }
    let center = Point3::from(if total_area > 0.0 {
        weighted / total_area
    } else {
        mean / count as f64
    });
    let radius = slice
        .iter()
        .flat_map(|t| t.iter())
        .map(|v| (v - center).norm())
        .fold(0.0f64, f64::max);

    if count <= LEAF_SIZE {
        clusters.push(Cluster {
            center,
            radius,
            area_normal,
            kind: Kind::Leaf { start, count },
        });
        return clusters.len() - 1;
    }
    // Median split on the longest axis of the centroid spread.
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for t in &tris[start..start + count] {
        let c = (t[0].coords + t[1].coords + t[2].coords) / 3.0;
        for i in 0..3 {
            lo[i] = lo[i].min(c[i]);
            hi[i] = hi[i].max(c[i]);
        }
    }
    let extent = hi - lo;
    let axis = (0..3)
        .max_by(|&a, &b| extent[a].partial_cmp(&extent[b]).expect("finite extents"))
        .expect("three axes");
    if extent[axis] <= 0.0 {
        clusters.push(Cluster {
            center,
            radius,
            area_normal,
            kind: Kind::Leaf { start, count },
        });
        return clusters.len() - 1;
    }
    let mid = count / 2;
    tris[start..start + count].select_nth_unstable_by(mid, |a, b| {
        let ca = a[0][axis] + a[1][axis] + a[2][axis];
        let cb = b[0][axis] + b[1][axis] + b[2][axis];
        ca.partial_cmp(&cb).expect("finite centroids")
    });
    let left = build_cluster(tris, start, mid, clusters);
    let right = build_cluster(tris, start + mid, count - mid, clusters);
    clusters.push(Cluster {
        center,
        radius,
        area_normal,
        kind: Kind::Internal { left, right },
    });
    clusters.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::tests::unit_cube_at;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cube_inside_and_outside() {
        let cube = unit_cube_at([0.0; 3]);
        let tree = WindingTree::build(&cube);
        assert!((tree.winding_number(Point3::origin()) - 1.0).abs() < 1e-9);
        assert!(tree.winding_number(Point3::new(2.0, 0.0, 0.0)).abs() < 1e-9);
        assert!((tree.winding_number(Point3::new(0.4, -0.4, 0.49)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn approximation_tracks_exact_sum() {
        let cube = unit_cube_at([0.3, 0.7, -0.2]);
        let tree = WindingTree::build(&cube);
        let bvh = crate::geometry::bvh::Bvh::build(&cube);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let p = Point3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let fast = tree.winding_number(p);
            let exact = tree.winding_number_exact(p);
            assert!(
                (fast - exact).abs() < 0.01,
                "at {p:?}: fast {fast} vs exact {exact}"
            );
            // Classification at the 0.5 threshold must agree away from the skin.
            if bvh.closest(p).0 > 1e-3 {
                assert_eq!(fast > 0.5, exact > 0.5, "at {p:?}");
            }
        }
    }
}
