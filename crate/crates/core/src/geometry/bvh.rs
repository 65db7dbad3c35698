//! Bounding-volume hierarchy for exact closest-point queries on triangle
//! soups. Distances are exact: leaves evaluate the same point-triangle
//! arithmetic a brute-force scan would, and internal nodes only prune.

use nalgebra::{Point3, Vector3};

use super::TriMesh;

/// Closest point on a triangle (Ericson's region method); degenerate
/// triangles fall back to their edges.
pub fn closest_point_on_triangle(
    p: Point3<f64>,
    a: Point3<f64>,
    b: Point3<f64>,
    c: Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    if ab.cross(&ac).norm_squared() <= f64::MIN_POSITIVE {
        return [(a, b), (a, c), (b, c)]
            .into_iter()
            .map(|(s, e)| closest_point_on_segment(p, s, e))
            .min_by(|x, y| {
                (p - x)
                    .norm_squared()
                    .partial_cmp(&(p - y).norm_squared())
                    .expect("finite distances")
            })
            .expect("three segments");
    }
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

fn closest_point_on_segment(p: Point3<f64>, a: Point3<f64>, b: Point3<f64>) -> Point3<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= f64::MIN_POSITIVE {
        return a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Squared distance from `p` to triangle `tri`.
pub fn point_triangle_distance_sq(p: Point3<f64>, tri: &[Point3<f64>; 3]) -> f64 {
    (p - closest_point_on_triangle(p, tri[0], tri[1], tri[2])).norm_squared()
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Point3<f64>,
    max: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: Point3<f64>) {
        for i in 0..3 {
            self.min[i] = self.min[i].min(p[i]);
            self.max[i] = self.max[i].max(p[i]);
        }
    }

    fn dist_sq(&self, p: Point3<f64>) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let d = (self.min[i] - p[i]).max(0.0).max(p[i] - self.max[i]);
            d2 += d * d;
        }
        d2
    }
}

#[derive(Debug)]
enum BvhNode {
    Leaf {
        bounds: Aabb,
        start: usize,
        count: usize,
    },
    Internal {
        bounds: Aabb,
        left: usize,
        right: usize,
    },
}

impl BvhNode {
    fn bounds(&self) -> &Aabb {
        match self {
            BvhNode::Leaf { bounds, .. } | BvhNode::Internal { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

#[derive(Debug)]
pub(crate) struct Bvh {
    nodes: Vec<BvhNode>,
    tris: Vec<[Point3<f64>; 3]>,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let mut tris: Vec<[Point3<f64>; 3]> =
            (0..mesh.num_triangles()).map(|i| mesh.triangle_points(i)).collect();
        let mut nodes = Vec::new();
        let count = tris.len();
        build_node(&mut tris, 0, count, &mut nodes);
        Self { nodes, tris }
    }

    /// Exact unsigned distance and the realizing closest point.
    pub fn closest(&self, p: Point3<f64>) -> (f64, Point3<f64>) {
        let mut best_d2 = f64::INFINITY;
        let mut best_pt = Point3::origin();
        self.visit(self.nodes.len() - 1, p, &mut best_d2, &mut best_pt);
        (best_d2.sqrt(), best_pt)
    }

    fn visit(&self, node: usize, p: Point3<f64>, best_d2: &mut f64, best_pt: &mut Point3<f64>) {
        match &self.nodes[node] {
            BvhNode::Leaf { start, count, .. } => {
                for tri in &self.tris[*start..start + count] {
                    let q = closest_point_on_triangle(p, tri[0], tri[1], tri[2]);
                    let d2 = (p - q).norm_squared();
                    if d2 < *best_d2 {
                        *best_d2 = d2;
                        *best_pt = q;
                    }
                }
            }
            BvhNode::Internal { left, right, .. } => {
                let dl = self.nodes[*left].bounds().dist_sq(p);
                let dr = self.nodes[*right].bounds().dist_sq(p);
                let (first, d_first, second, d_second) = if dl <= dr {
                    (*left, dl, *right, dr)
                } else {
                    (*right, dr, *left, dl)
                };
                if d_first < *best_d2 {
                    self.visit(first, p, best_d2, best_pt);
                }
                if d_second < *best_d2 {
                    self.visit(second, p, best_d2, best_pt);
                }
            }
        }
    }
}

/// Builds the subtree over `tris[start..start+count]`, returns its node id.
fn build_node(
    tris: &mut [[Point3<f64>; 3]],
    start: usize,
    count: usize,
    nodes: &mut Vec<BvhNode>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut centroid_bounds = Aabb::empty();
    for tri in &tris[start..start + count] {
        for &v in tri {
            bounds.grow(v);
        }
        centroid_bounds.grow(Point3::from(
            (tri[0].coords + tri[1].coords + tri[2].coords) / 3.0,
        ));
    }
    let extent: Vector3<f64> = centroid_bounds.max - centroid_bounds.min;
    let axis = (0..3)
        .max_by(|&a, &b| extent[a].partial_cmp(&extent[b]).expect("finite extents"))
        .expect("three axes");
    if count <= LEAF_SIZE || extent[axis] <= 0.0 {
        nodes.push(BvhNode::Leaf {
            bounds,
            start,
            count,
        });
        return nodes.len() - 1;
    }
    let mid = count / 2;
    tris[start..start + count].select_nth_unstable_by(mid, |a, b| {
        let ca = (a[0][axis] + a[1][axis] + a[2][axis]) / 3.0;
        let cb = (b[0][axis] + b[1][axis] + b[2][axis]) / 3.0;
        ca.partial_cmp(&cb).expect("finite centroids")
    });
    let left = build_node(tris, start, mid, nodes);
    let right = build_node(tris, start + mid, count - mid, nodes);
    nodes.push(BvhNode::Internal {
        bounds,
        left,
        right,
    });
    nodes.len() - 1
}
