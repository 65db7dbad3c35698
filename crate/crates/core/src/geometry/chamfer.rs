//! Symmetric chamfer distance between point clouds.

use nalgebra::Point3;

use super::kdtree::KdTree;
use super::Error;

/// Mean squared nearest-neighbor distance from each cloud to the other,
/// summed. Zero iff every point has an exact counterpart.
pub fn chamfer(pc1: &[Point3<f64>], pc2: &[Point3<f64>]) -> Result<f64, Error> {
    if pc1.is_empty() || pc2.is_empty() {
        return Err(Error::EmptySet);
    }
    let t1 = KdTree::new(pc1.to_vec())?;
    let t2 = KdTree::new(pc2.to_vec())?;
    let fwd: f64 = pc1.iter().map(|&p| t2.nearest_sq(p)).sum::<f64>() / pc1.len() as f64;
    let back: f64 = pc2.iter().map(|&p| t1.nearest_sq(p)).sum::<f64>() / pc2.len() as f64;
    Ok(fwd + back)
}
