//! Prediction metrics: axis collinearity hits, top-k accuracy with
//! equivalent labels expanded, hole/no-hole breakdowns, and chamfer
//! distance between predicted and ground-truth assemblies.

use std::collections::BTreeSet;

use nalgebra::Point3;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::brep::{derive_axis, expand_equivalents, AxisSpec, PartGraph};
use crate::geometry::{chamfer, sample_surface, RigidTransform, TriMesh};
use crate::scores::ScoreMatrix;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no samples to evaluate")]
    EmptyDataset,
    #[error("sample has no ground-truth joints")]
    MissingGroundTruth,
    #[error(transparent)]
    Brep(#[from] crate::brep::Error),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::Error),
}

/// Hit thresholds in normalized units: directions within `angle` (either
/// orientation) and axis lines within `distance` after the pair is scaled
/// to the -1..1 range.
#[derive(Debug, Clone, Copy)]
pub struct HitTol {
    pub angle: f64,
    pub distance: f64,
}

impl Default for HitTol {
    fn default() -> Self {
        Self {
            angle: 10f64.to_radians(),
            distance: 0.1,
        }
    }
}

/// Scale mapping the part pair into the -1..1 cube: 2 over the largest
/// bounding-box extent of either part.
pub fn pair_scale(g1: &PartGraph, g2: &PartGraph) -> f64 {
    let mut largest = 0.0f64;
    for g in [g1, g2] {
        let extent = g.bbox_max - g.bbox_min;
        for i in 0..3 {
            largest = largest.max(extent[i]);
        }
    }
    if largest > 0.0 {
        2.0 / largest
    } else {
        1.0
    }
}

/// Perpendicular distance between the two infinite axis lines: closest
/// approach for skew lines, offset for parallel ones.
fn line_distance(a: &AxisSpec, b: &AxisSpec) -> f64 {
    let d1 = a.direction.into_inner();
    let d2 = b.direction.into_inner();
    let w = b.origin - a.origin;
    let cross = d1.cross(&d2);
    let n = cross.norm();
    if n < 1e-9 {
        (w - w.dot(&d1) * d1).norm()
    } else {
        w.dot(&cross).abs() / n
    }
}

/// True when the axes agree in direction up to sign and their lines nearly
/// coincide. `scale` converts raw distance into normalized units.
pub fn collinear_hit(pred: &AxisSpec, gt: &AxisSpec, scale: f64, tol: &HitTol) -> bool {
    let cos = pred.direction.dot(&gt.direction).abs().min(1.0);
    cos.acos() <= tol.angle && line_distance(pred, gt) * scale <= tol.distance
}

/// Whether a predicted (u, v) cell's axes land on a ground-truth cell's
/// axes on both parts.
pub fn cell_hit(
    g1: &PartGraph,
    g2: &PartGraph,
    pred: (usize, usize),
    gt: (usize, usize),
    tol: &HitTol,
) -> Result<bool, Error> {
    let scale = pair_scale(g1, g2);
    let hit1 = collinear_hit(
        &derive_axis(g1, pred.0)?,
        &derive_axis(g1, gt.0)?,
        scale,
        tol,
    );
    let hit2 = collinear_hit(
        &derive_axis(g2, pred.1)?,
        &derive_axis(g2, gt.1)?,
        scale,
        tol,
    );
    Ok(hit1 && hit2)
}

/// All (u, v) cells counted correct for the given labels: the cross product
/// of each label's equivalent sets on both parts.
pub fn expanded_label_cells(
    g1: &PartGraph,
    g2: &PartGraph,
    labels: &[(usize, usize)],
) -> Result<BTreeSet<(usize, usize)>, Error> {
    let mut cells = BTreeSet::new();
    for &(u, v) in labels {
        let eu = expand_equivalents(g1, u)?;
        let ev = expand_equivalents(g2, v)?;
        for &a in &eu {
            for &b in &ev {
                cells.insert((a, b));
            }
        }
    }
    Ok(cells)
}

/// Hit counter; serializes with its derived fraction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ratio {
    pub hits: usize,
    pub total: usize,
}

impl Ratio {
    pub fn fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }

    fn add(&mut self, hit: bool) {
        self.hits += hit as usize;
        self.total += 1;
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Ratio", 3)?;
        s.serialize_field("hits", &self.hits)?;
        s.serialize_field("total", &self.total)?;
        s.serialize_field("fraction", &self.fraction())?;
        s.end()
    }
}

/// Running mean; serializes with its derived mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mean {
    pub sum: f64,
    pub count: usize,
}

impl Mean {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    fn add(&mut self, value: f64) {
        self.sum += value;
        self.count += 1;
    }
}

impl Serialize for Mean {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Mean", 2)?;
        s.serialize_field("count", &self.count)?;
        s.serialize_field("mean", &self.mean())?;
        s.end()
    }
}

/// One scored sample: a pair, its score matrix, raw labels, and hole flags.
pub struct EvalSample<'a> {
    pub g1: &'a PartGraph,
    pub g2: &'a PartGraph,
    pub scores: &'a ScoreMatrix,
    pub labels: &'a [(usize, usize)],
    pub holes: (bool, bool),
}

impl EvalSample<'_> {
    fn has_hole(&self) -> bool {
        self.holes.0 || self.holes.1
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct AccuracyReport {
    pub all: Ratio,
    pub hole: Ratio,
    pub no_hole: Ratio,
}

/// Top-k accuracy: a sample is a hit when any of the k best-scoring cells
/// lies in the equivalent-expanded label set. Samples where either part has
/// a hole go to the hole bucket.
pub fn axis_accuracy(samples: &[EvalSample], k: usize) -> Result<AccuracyReport, Error> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut report = AccuracyReport::default();
    for sample in samples {
        let cells = expanded_label_cells(sample.g1, sample.g2, sample.labels)?;
        let hit = sample
            .scores
            .top_k(k)
            .iter()
            .any(|&(u, v, _)| cells.contains(&(u, v)));
        report.all.add(hit);
        if sample.has_hole() {
            report.hole.add(hit);
        } else {
            report.no_hole.add(hit);
        }
    }
    Ok(report)
}

/// One posed sample: meshes at rest, the predicted part-1 transform, and
/// every acceptable ground-truth transform.
pub struct PoseEvalSample<'a> {
    pub mesh1: &'a TriMesh,
    pub mesh2: &'a TriMesh,
    pub predicted: RigidTransform,
    pub ground_truth: &'a [RigidTransform],
    pub holes: (bool, bool),
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PoseReport {
    pub all: Mean,
    pub hole: Mean,
    pub no_hole: Mean,
}

fn apply_all(points: &[Point3<f64>], t: &RigidTransform) -> Vec<Point3<f64>> {
    points.iter().map(|&p| t.apply_point(p)).collect()
}

/// Map a cloud into the -1..1 cube of the given bounding box.
fn normalize_cloud(
    points: &[Point3<f64>],
    center: Point3<f64>,
    scale: f64,
) -> Vec<Point3<f64>> {
    points
        .iter()
        .map(|&p| Point3::from((p - center) * scale))
        .collect()
}

fn cloud_frame(points: &[Point3<f64>]) -> (Point3<f64>, f64) {
    let mut min = points[0];
    let mut max = points[0];
    for p in points {
        for i in 0..3 {
            min[i] = min[i].min(p[i]);
            max[i] = max[i].max(p[i]);
        }
    }
    let extent = (max - min).amax();
    let center = Point3::from((min.coords + max.coords) / 2.0);
    let scale = if extent > 0.0 { 2.0 / extent } else { 1.0 };
    (center, scale)
}

/// Mean chamfer distance between predicted and ground-truth assemblies,
/// each sampled with `points_per_part` surface points and normalized to the
/// ground-truth assembly's -1..1 frame. Multiple ground-truth joints score
/// by the minimum.
pub fn pose_eval(
    samples: &[PoseEvalSample],
    points_per_part: usize,
    seed: u64,
) -> Result<PoseReport, Error> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut report = PoseReport::default();
    for sample in samples {
        if sample.ground_truth.is_empty() {
            return Err(Error::MissingGroundTruth);
        }
        let cloud1: Vec<Point3<f64>> = sample_surface(sample.mesh1, points_per_part, seed)
            .into_iter()
            .map(|(p, _)| p)
            .collect();
        let cloud2: Vec<Point3<f64>> =
            sample_surface(sample.mesh2, points_per_part, seed ^ 0x9E37_79B9_7F4A_7C15)
                .into_iter()
                .map(|(p, _)| p)
                .collect();
        let mut predicted = apply_all(&cloud1, &sample.predicted);
        predicted.extend_from_slice(&cloud2);

        let mut best = f64::INFINITY;
        for gt in sample.ground_truth {
            let mut truth = apply_all(&cloud1, gt);
            truth.extend_from_slice(&cloud2);
            let (center, scale) = cloud_frame(&truth);
            let cd = chamfer(
                &normalize_cloud(&predicted, center, scale),
                &normalize_cloud(&truth, center, scale),
            )?;
            best = best.min(cd);
        }
        report.all.add(best);
        if sample.holes.0 || sample.holes.1 {
            report.hole.add(best);
        } else {
            report.no_hole.add(best);
        }
    }
    Ok(report)
}

/// Aggregated metrics plus run metadata, rendered as JSON or text with the
/// same numbers.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub split: Option<String>,
    pub k: usize,
    pub seed: u64,
    pub num_samples: usize,
    pub axis: AccuracyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseReport>,
}

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => "n/a".into(),
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let split = self.split.as_deref().unwrap_or("all");
        out.push_str(&format!(
            "split {split}: {} samples, top-{}, seed {}\n",
            self.num_samples, self.k, self.seed
        ));
        let a = &self.axis;
        out.push_str(&format!(
            "axis accuracy  all {} ({}/{})  holes {} ({}/{})  no holes {} ({}/{})\n",
            fmt_opt(a.all.fraction()),
            a.all.hits,
            a.all.total,
            fmt_opt(a.hole.fraction()),
            a.hole.hits,
            a.hole.total,
            fmt_opt(a.no_hole.fraction()),
            a.no_hole.hits,
            a.no_hole.total,
        ));
        if let Some(p) = &self.pose {
            out.push_str(&format!(
                "pose chamfer   all {}  holes {}  no holes {}\n",
                fmt_opt(p.all.mean()),
                fmt_opt(p.hole.mean()),
                fmt_opt(p.no_hole.mean()),
            ));
        }
        out
    }
}
