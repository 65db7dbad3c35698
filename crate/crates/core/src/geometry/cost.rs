//! Monte-Carlo overlap and contact estimators and the combined joint cost.
//!
//! Overlap is the penetration volume of part 1 into part 2 as a fraction of
//! the smaller volume; contact is the shared surface area as a fraction of
//! the smaller surface area. Well-placed joints touch a lot and penetrate
//! little, so contact is rewarded only while overlap stays small.

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sample::{sample_surface_with, sample_volume_with};
use super::sdf::SignedDistanceField;
use super::{Error, RigidTransform, TriMesh};

#[derive(Debug, Clone)]
pub struct CostConfig {
    pub surface_samples: usize,
    pub volume_samples: usize,
    /// Absolute contact tolerance; `None` derives 1e-3 × pair bbox diagonal.
    pub contact_tol: Option<f64>,
    pub seed: u64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            surface_samples: 4096,
            volume_samples: 4096,
            contact_tol: None,
            seed: 0,
        }
    }
}

/// Combines the two criteria: contact counts in favor only while the parts
/// barely interpenetrate, otherwise the cost is the overlap alone.
pub fn joint_cost(c_overlap: f64, c_contact: f64) -> f64 {
    let lambda = if c_overlap < 0.1 { -10.0 } else { 0.0 };
    c_overlap + lambda * c_contact
}

/// One-shot estimate for two meshes already posed in a common frame.
pub fn overlap_and_contact(
    mesh1: &TriMesh,
    mesh2: &TriMesh,
    samples: usize,
    seed: u64,
    contact_tol: f64,
) -> Result<(f64, f64), Error> {
    let cfg = CostConfig {
        surface_samples: samples,
        volume_samples: samples,
        contact_tol: Some(contact_tol),
        seed,
    };
    let eval = CostEvaluator::new(mesh1, std::slice::from_ref(mesh2), &cfg)?;
    let est = eval.evaluate(&RigidTransform::identity());
    Ok((est.c_overlap, est.c_contact))
}

#[derive(Debug, Clone, Copy)]
pub struct CostEstimate {
    pub c_overlap: f64,
    pub c_contact: f64,
    pub c_joint: f64,
}

/// Reusable estimator for repeated pose evaluations of the same part pair.
///
/// Part 1 is sampled once in its rest frame; each `evaluate` call moves those
/// fixed samples by the candidate transform and queries the precomputed
/// distance fields of the (already posed) target meshes. The targets may be
/// several parts of a partial assembly; distances take the minimum over them.
pub struct CostEvaluator {
    surface_pts: Vec<Point3<f64>>,
    volume_pts: Vec<Point3<f64>>,
    area1: f64,
    volume1: f64,
    area2: f64,
    volume2: f64,
    targets: Vec<SignedDistanceField>,
    contact_tol: f64,
}

impl CostEvaluator {
    pub fn new(part1: &TriMesh, targets: &[TriMesh], cfg: &CostConfig) -> Result<Self, Error> {
        if targets.is_empty() {
            return Err(Error::EmptySet);
        }
        let contact_tol = cfg
            .contact_tol
            .unwrap_or_else(|| 1e-3 * pair_bbox_diagonal(part1, targets));
        let sdf1 = SignedDistanceField::new(part1);
        let mut surf_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut vol_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
        let surface_pts = sample_surface_with(part1, cfg.surface_samples, &mut surf_rng)
            .into_iter()
            .map(|(p, _)| p)
            .collect();
        let (volume_pts, _) = sample_volume_with(part1, &sdf1, cfg.volume_samples, &mut vol_rng)?;
        Ok(Self {
            surface_pts,
            volume_pts,
            area1: part1.area(),
            volume1: part1.volume(),
            area2: targets.iter().map(TriMesh::area).sum(),
            volume2: targets.iter().map(TriMesh::volume).sum(),
            targets: targets.iter().map(SignedDistanceField::new).collect(),
            contact_tol,
        })
    }

    pub fn contact_tol(&self) -> f64 {
        self.contact_tol
    }

    fn target_distance(&self, p: Point3<f64>) -> f64 {
        self.targets
            .iter()
            .map(|s| s.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn evaluate(&self, pose: &RigidTransform) -> CostEstimate {
        let touching = self
            .surface_pts
            .iter()
            .filter(|&&p| self.target_distance(pose.apply_point(p)).abs() <= self.contact_tol)
            .count();
        let p_a = touching as f64 / self.surface_pts.len().max(1) as f64;
        let shared_area = p_a * self.area1;
        let c_contact = shared_area / self.area1.min(self.area2);

        let penetrating = self
            .volume_pts
            .iter()
            .filter(|&&p| self.target_distance(pose.apply_point(p)) < 0.0)
            .count();
        let p_v = penetrating as f64 / self.volume_pts.len().max(1) as f64;
        let shared_volume = p_v * self.volume1;
        let c_overlap = shared_volume / self.volume1.min(self.volume2);

        CostEstimate {
            c_overlap,
            c_contact,
            c_joint: joint_cost(c_overlap, c_contact),
        }
    }
}

fn pair_bbox_diagonal(part1: &TriMesh, targets: &[TriMesh]) -> f64 {
    let (mut lo, mut hi) = part1.bbox();
    for t in targets {
        let (tlo, thi) = t.bbox();
        for i in 0..3 {
            lo[i] = lo[i].min(tlo[i]);
            hi[i] = hi[i].max(thi[i]);
        }
    }
    (hi - lo).norm()
}
