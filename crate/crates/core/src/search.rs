//! Neurally guided pose search: for each top-k axis prediction and both
//! flips, Nelder-Mead minimizes the assembly cost over (offset, rotation)
//! along the candidate axes; the cheapest configuration wins. Also drives
//! the sequential multi-part assembly demo.

use rayon::prelude::*;

use crate::brep::{derive_axis, AxisSpec, PartGraph};
use crate::geometry::{
    transform_from_axes, CostConfig, CostEvaluator, Pose, RigidTransform, TriMesh,
};
use crate::scores::ScoreMatrix;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("no prediction resolves to a searchable axis pair")]
    NoValidPrediction,
    #[error(transparent)]
    Brep(#[from] crate::brep::Error),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::Error),
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// How many axis predictions to search (each with both flips).
    pub k: usize,
    pub surface_samples: usize,
    pub volume_samples: usize,
    pub max_iters: usize,
    /// Stop when the simplex diameter falls below this.
    pub spread_tol: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Max cost spread over quarter-turn rotations below which part 1 is
    /// treated as rotationally symmetric about the candidate axis.
    pub symmetry_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k: 50,
            surface_samples: 4096,
            volume_samples: 4096,
            max_iters: 200,
            spread_tol: 1e-4,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            symmetry_tol: 1e-3,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.surface_samples == 0 || self.volume_samples == 0 {
            return bad("sample counts must be positive".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(self.spread_tol > 0.0) || !(self.symmetry_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(self.reflection > 0.0) {
            return bad(format!("reflection {} must be > 0", self.reflection));
        }
        if !(self.expansion > 1.0) {
            return bad(format!("expansion {} must be > 1", self.expansion));
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return bad(format!("contraction {} must be in (0, 1)", self.contraction));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad(format!("shrink {} must be in (0, 1)", self.shrink));
        }
        Ok(())
    }

    fn cost_config(&self, seed: u64) -> CostConfig {
        CostConfig {
            surface_samples: self.surface_samples,
            volume_samples: self.volume_samples,
            contact_tol: None,
            seed,
        }
    }
}

/// Derivative-free simplex minimization. The initial simplex is `x0` plus
/// one `steps[i]` perturbation per dimension; iteration stops on the
/// spread tolerance or the iteration cap, returning the best point ever
/// evaluated.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    cfg: &SearchConfig,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    assert_eq!(d, steps.len());
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let mut best = (x0.to_vec(), f(x0));
    simplex.push(best.clone());
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let fx = f(&x);
        if fx < best.1 {
            best = (x.clone(), fx);
        }
        simplex.push((x, fx));
    }
    let eval = |x: Vec<f64>, f: &mut dyn FnMut(&[f64]) -> f64,
                best: &mut (Vec<f64>, f64)| {
        let fx = f(&x);
        if fx < best.1 {
            *best = (x.clone(), fx);
        }
        (x, fx)
    };

    for _ in 0..cfg.max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[1..]
            .iter()
            .flat_map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
            })
            .fold(0.0, f64::max);
        if spread < cfg.spread_tol {
            break;
        }

        let worst = simplex[d].clone();
        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for i in 0..d {
                centroid[i] += x[i] / d as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            (0..d)
                .map(|i| centroid[i] + t * (centroid[i] - worst.0[i]))
                .collect()
        };

        let reflected = eval(along(cfg.reflection), &mut f, &mut best);
        if reflected.1 < simplex[0].1 {
            let expanded = eval(along(cfg.expansion), &mut f, &mut best);
            simplex[d] = if expanded.1 < reflected.1 {
                expanded
            } else {
                reflected
            };
            continue;
        }
        if reflected.1 < simplex[d - 1].1 {
            simplex[d] = reflected;
            continue;
        }
        let contracted = if reflected.1 < worst.1 {
            eval(along(cfg.reflection * cfg.contraction), &mut f, &mut best)
        } else {
            eval(along(-cfg.contraction), &mut f, &mut best)
        };
        if contracted.1 < worst.1.min(reflected.1) {
            simplex[d] = contracted;
            continue;
        }
        for j in 1..=d {
            let x: Vec<f64> = (0..d)
                .map(|i| simplex[0].0[i] + cfg.shrink * (simplex[j].0[i] - simplex[0].0[i]))
                .collect();
            simplex[j] = eval(x, &mut f, &mut best);
        }
    }
    best
}

/// One optimization run's outcome.
#[derive(Debug, Clone, Copy)]
pub struct RunLog {
    pub rank: usize,
    pub u: usize,
    pub v: usize,
    pub flip: bool,
    /// Rotation was skipped because quarter turns left the cost unchanged.
    pub symmetric: bool,
    pub pose: Pose,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub rank: usize,
    pub u: usize,
    pub v: usize,
    pub pose: Pose,
    pub transform: RigidTransform,
    pub cost: f64,
    pub runs: Vec<RunLog>,
}

struct Candidate {
    rank: usize,
    u: usize,
    v: usize,
    axis1: AxisSpec,
    axis2: AxisSpec,
}

/// Cost assigned outside the offset search domain.
const DOMAIN_PENALTY: f64 = 1e3;

fn run_one(
    eval: &CostEvaluator,
    cand: &Candidate,
    flip: bool,
    offset_bound: f64,
    offset_step: f64,
    cfg: &SearchConfig,
) -> Result<RunLog, Error> {
    let pose_cost = |pose: Pose| -> Result<f64, Error> {
        let t = transform_from_axes(&cand.axis1, &cand.axis2, pose)?;
        Ok(eval.evaluate(&t).c_joint)
    };

    // Quarter-turn probe: rotation can be dropped when the cost is blind
    // to it.
    let mut probe = [0.0; 4];
    for (i, p) in probe.iter_mut().enumerate() {
        *p = pose_cost(Pose {
            offset: 0.0,
            rotation: i as f64 * std::f64::consts::FRAC_PI_2,
            flip,
        })?;
    }
    let spread = probe.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - probe.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let symmetric = spread < cfg.symmetry_tol;

    let objective = |x: &[f64]| -> f64 {
        if x[0].abs() > offset_bound {
            return DOMAIN_PENALTY;
        }
        let pose = Pose {
            offset: x[0],
            rotation: if symmetric { 0.0 } else { x[1] },
            flip,
        };
        pose_cost(pose).unwrap_or(DOMAIN_PENALTY)
    };

    let (x0, steps): (Vec<f64>, Vec<f64>) = if symmetric {
        (vec![0.0], vec![offset_step])
    } else {
        (
            vec![0.0, 0.0],
            vec![offset_step, std::f64::consts::FRAC_PI_8],
        )
    };
    let (x, cost) = nelder_mead(objective, &x0, &steps, cfg);
    let pose = Pose {
        offset: x[0],
        rotation: if symmetric { 0.0 } else { x[1] },
        flip,
    };
    Ok(RunLog {
        rank: cand.rank,
        u: cand.u,
        v: cand.v,
        flip,
        symmetric,
        pose,
        cost,
    })
}

fn search_pose_in_frame(
    g1: &PartGraph,
    g2: &PartGraph,
    mesh1: &TriMesh,
    targets: &[TriMesh],
    g2_frame: &RigidTransform,
    predictions: &[(usize, usize, f64)],
    cfg: &SearchConfig,
    seed: u64,
) -> Result<SearchResult, Error> {
    cfg.validate()?;
    let mut candidates = Vec::new();
    for (rank, &(u, v, _)) in predictions.iter().enumerate() {
        let axis1 = match derive_axis(g1, u) {
            Ok(a) => a,
            Err(crate::brep::Error::UnsupportedEntity { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let axis2 = match derive_axis(g2, v) {
            Ok(a) => a,
            Err(crate::brep::Error::UnsupportedEntity { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        candidates.push(Candidate {
            rank,
            u,
            v,
            axis1,
            axis2: g2_frame.apply_axis(&axis2),
        });
    }
    if candidates.is_empty() {
        return Err(Error::NoValidPrediction);
    }

    let eval = CostEvaluator::new(mesh1, targets, &cfg.cost_config(seed))?;
    let reach = mesh1.bbox_diagonal()
        + targets
            .iter()
            .map(TriMesh::bbox_diagonal)
            .fold(0.0, f64::max);
    let offset_bound = 1.5 * reach;
    let offset_step = 0.05 * reach;

    let eval = &eval;
    let runs: Vec<RunLog> = candidates
        .par_iter()
        .flat_map_iter(|cand| {
            [false, true]
                .into_iter()
                .map(move |flip| run_one(eval, cand, flip, offset_bound, offset_step, cfg))
        })
        .collect::<Result<_, _>>()?;

    let best = runs
        .iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("at least one run");
    // Strict ordering on (cost, rank, flip) makes ties deterministic:
    // lower rank first, then flip=false.
    let best = runs
        .iter()
        .filter(|r| r.cost == best.cost)
        .min_by_key(|r| (r.rank, r.flip))
        .expect("at least one run");
    let cand = candidates
        .iter()
        .find(|c| c.rank == best.rank)
        .expect("run refers to a candidate");
    let transform = transform_from_axes(&cand.axis1, &cand.axis2, best.pose)?;
    Ok(SearchResult {
        rank: best.rank,
        u: best.u,
        v: best.v,
        pose: best.pose,
        transform,
        cost: best.cost,
        runs,
    })
}

/// Search the pose for one part pair. `targets` are the meshes part 1 must
/// assemble against, already posed in the common frame (for a plain pair,
/// just part 2 at rest).
pub fn search_pose(
    g1: &PartGraph,
    g2: &PartGraph,
    mesh1: &TriMesh,
    targets: &[TriMesh],
    predictions: &[(usize, usize, f64)],
    cfg: &SearchConfig,
    seed: u64,
) -> Result<SearchResult, Error> {
    search_pose_in_frame(
        g1,
        g2,
        mesh1,
        targets,
        &RigidTransform::identity(),
        predictions,
        cfg,
        seed,
    )
}

/// Place parts one at a time: part 0 is anchored at identity, and each
/// sequence step (new, against) predicts joints between the new part and
/// its designated placed part, then searches the pose against the point
/// samples of everything already placed. Returns one placement per part.
pub fn assemble_sequence(
    parts: &[(&PartGraph, &TriMesh)],
    sequence: &[(usize, usize)],
    mut predict: impl FnMut(&PartGraph, &PartGraph) -> ScoreMatrix,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<Vec<RigidTransform>, Error> {
    if parts.is_empty() {
        return Ok(Vec::new());
    }
    let mut placements = vec![RigidTransform::identity(); parts.len()];
    let mut placed = vec![false; parts.len()];
    placed[0] = true;
    for (step, &(new, against)) in sequence.iter().enumerate() {
        if new >= parts.len() || against >= parts.len() {
            return Err(Error::InvalidConfig(format!(
                "step {step}: part index out of range"
            )));
        }
        if placed[new] || !placed[against] {
            return Err(Error::InvalidConfig(format!(
                "step {step}: part {new} must be new and part {against} already placed"
            )));
        }
        let (g_new, mesh_new) = parts[new];
        let (g_against, _) = parts[against];
        let scores = predict(g_new, g_against);
        let predictions = scores.top_k(cfg.k);
        let targets: Vec<TriMesh> = placed
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p)
            .map(|(i, _)| parts[i].1.transformed(&placements[i]))
            .collect();
        let result = search_pose_in_frame(
            g_new,
            g_against,
            mesh_new,
            &targets,
            &placements[against],
            &predictions,
            cfg,
            seed.wrapping_add(step as u64),
        )?;
        placements[new] = result.transform;
        placed[new] = true;
    }
    Ok(placements)
}
