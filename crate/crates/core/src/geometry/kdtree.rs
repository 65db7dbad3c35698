//! Balanced 3D kd-tree for nearest-neighbor queries over point clouds.

use nalgebra::Point3;

use super::Error;

/// Points are reordered in place during the build; each range's median holds
/// the node for that range, with its split axis recorded alongside.
#[derive(Debug, Clone)]
pub struct KdTree {
    pts: Vec<Point3<f64>>,
    axes: Vec<u8>,
}

impl KdTree {
    pub fn new(mut pts: Vec<Point3<f64>>) -> Result<Self, Error> {
        if pts.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut axes = vec![0u8; pts.len()];
        let len = pts.len();
        build(&mut pts, &mut axes, 0, len);
        Ok(Self { pts, axes })
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// Squared distance to the closest stored point.
    pub fn nearest_sq(&self, p: Point3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        let mut best_pt = self.pts[0];
        self.search(0, self.pts.len(), p, &mut best, &mut best_pt);
        best
    }

    /// Distance and the closest stored point.
    pub fn nearest(&self, p: Point3<f64>) -> (f64, Point3<f64>) {
        let mut best = f64::INFINITY;
        let mut best_pt = self.pts[0];
        self.search(0, self.pts.len(), p, &mut best, &mut best_pt);
        (best.sqrt(), best_pt)
    }

    fn search(
        &self,
        lo: usize,
        hi: usize,
        p: Point3<f64>,
        best: &mut f64,
        best_pt: &mut Point3<f64>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let node = self.pts[mid];
        let d2 = (p - node).norm_squared();
        if d2 < *best {
            *best = d2;
            *best_pt = node;
        }
        if hi - lo == 1 {
            return;
        }
        let axis = self.axes[mid] as usize;
        let delta = p[axis] - node[axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, p, best, best_pt);
        if delta * delta < *best {
            self.search(far.0, far.1, p, best, best_pt);
        }
    }
}

fn build(pts: &mut [Point3<f64>], axes: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= 1 {
        return;
    }
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in &pts[lo..hi] {
        for i in 0..3 {
            min[i] = min[i].min(p[i]);
            max[i] = max[i].max(p[i]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| {
            (max[a] - min[a])
                .partial_cmp(&(max[b] - min[b]))
                .expect("finite coordinates")
        })
        .expect("three axes");
    let mid = lo + (hi - lo) / 2;
    pts[lo..hi].select_nth_unstable_by(mid - lo, |a, b| {
        a[axis].partial_cmp(&b[axis]).expect("finite coordinates")
    });
    axes[mid] = axis as u8;
    build(pts, axes, lo, mid);
    build(pts, axes, mid + 1, hi);
}
