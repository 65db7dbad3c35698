//! Training loop: per-sample gradient steps with Adam, validation tracking,
//! plateau-based learning-rate halving, and checkpointing.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jf_autodiff::{Adam, AdamConfig, Tape};

use crate::brep::PartGraph;

use super::loss::{loss_ce_var, loss_sym_var, Labels};
use super::model::{Model, NetworkConfig};
use super::Error;

const MASK_LOGIT: f64 = -1e30;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Samples with n + m above this are skipped, not failed.
    pub skip_threshold: usize,
    pub network: NetworkConfig,
    pub use_ce: bool,
    pub use_sym: bool,
    /// Halve the learning rate after this many epochs without validation
    /// improvement.
    pub plateau_patience: usize,
    /// Where to write `best.ckpt.json` and `final.ckpt.json`; `None` skips.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 100,
            seed: 0,
            skip_threshold: 950,
            network: NetworkConfig::default(),
            use_ce: true,
            use_sym: true,
            plateau_patience: 10,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub g1: PartGraph,
    pub g2: PartGraph,
    pub labels: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_top1: f64,
    pub lr: f64,
    pub skipped: usize,
}

fn sample_labels(s: &TrainSample) -> Result<Labels, Error> {
    Labels::new(s.g1.num_nodes(), s.g2.num_nodes(), s.labels.clone())
}

/// Adds the NURBS mask to raw logits so masked cells drown in every softmax.
fn masked_logits(
    tape: &mut Tape,
    logits: jf_autodiff::Var,
    g1: &PartGraph,
    g2: &PartGraph,
) -> Result<jf_autodiff::Var, Error> {
    let (n, m) = (g1.num_nodes(), g2.num_nodes());
    let bad1 = g1.nurbs_indices();
    let bad2 = g2.nurbs_indices();
    if bad1.is_empty() && bad2.is_empty() {
        return Ok(logits);
    }
    let mut mask = vec![0.0; n * m];
    for u in 0..n {
        for v in 0..m {
            if bad1.contains(&u) || bad2.contains(&v) {
                mask[u * m + v] = MASK_LOGIT;
            }
        }
    }
    let mask = tape.leaf(jf_autodiff::Tensor::new(vec![n, m], mask)?);
    Ok(tape.add(logits, mask)?)
}

pub(super) fn forward_loss(model: &Model, sample: &TrainSample, cfg: &TrainConfig) -> Result<(Tape, jf_autodiff::Var, Vec<jf_autodiff::Var>), Error> {
    let labels = sample_labels(sample)?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let h1 = model.encode(&mut tape, &bound, &sample.g1)?;
    let h2 = model.encode(&mut tape, &bound, &sample.g2)?;
    let raw = model.predict_logits(
        &mut tape,
        &bound,
        h1,
        h2,
        sample.g1.num_nodes(),
        sample.g2.num_nodes(),
    )?;
    let logits = masked_logits(&mut tape, raw, &sample.g1, &sample.g2)?;
    let mut terms = Vec::new();
    if cfg.use_ce {
        terms.push(loss_ce_var(&mut tape, logits, &labels)?);
    }
    if cfg.use_sym {
        terms.push(loss_sym_var(&mut tape, logits, &labels)?);
    }
    let mut total = *terms.first().expect("at least one loss term enabled");
    for t in &terms[1..] {
        total = tape.add(total, *t)?;
    }
    Ok((tape, total, bound.vars))
}

/// Fraction of samples whose argmax cell is one of its labeled cells.
fn top1_accuracy(model: &Model, samples: &[TrainSample]) -> Result<f64, Error> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0usize;
    for s in samples {
        let scores = model.predict(&s.g1, &s.g2)?;
        if let Some(best) = scores.argmax() {
            if s.labels.contains(&best) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

pub fn train(
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<(Model, Vec<EpochLog>), Error> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !cfg.use_ce && !cfg.use_sym {
        return Err(Error::NoLossTerms);
    }
    for s in train_set.iter().chain(val_set) {
        sample_labels(s)?;
    }

    let mut model = Model::new(cfg.network.clone());
    let sizes: Vec<usize> = model.params.named().iter().map(|(_, t)| t.numel()).collect();
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..Default::default() }, &sizes);

    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::INFINITY;
    let mut stale_epochs = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E3779B97F4A7C15));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut stepped = 0usize;
        let mut skipped = 0usize;
        for &i in &order {
            let s = &train_set[i];
            if s.g1.num_nodes() + s.g2.num_nodes() > cfg.skip_threshold {
                skipped += 1;
                continue;
            }
            let (mut tape, total, param_vars) = forward_loss(&model, s, cfg)?;
            epoch_loss += tape.value(total).item().map_err(Error::from)?;
            tape.backward(total)?;
            let grads: Vec<Option<&[f64]>> = param_vars.iter().map(|&v| tape.grad(v)).collect();
            let mut named = model.params.named_mut();
            let mut params: Vec<&mut jf_autodiff::Tensor> =
                named.iter_mut().map(|(_, t)| &mut **t).collect();
            adam.step(&mut params, &grads)?;
            stepped += 1;
        }
        let train_loss = if stepped > 0 { epoch_loss / stepped as f64 } else { f64::NAN };

        let mut val_loss = f64::NAN;
        if !val_set.is_empty() {
            let mut total = 0.0;
            let mut counted = 0usize;
            for s in val_set {
                let (tape, loss, _) = forward_loss(&model, s, cfg)?;
                total += tape.value(loss).item().map_err(Error::from)?;
                counted += 1;
            }
            val_loss = total / counted as f64;
        }
        let val_top1 = top1_accuracy(&model, val_set)?;

        // Plateau rule tracks validation loss when present, else training.
        let tracked = if val_loss.is_nan() { train_loss } else { val_loss };
        if tracked + 1e-12 < best_val {
            best_val = tracked;
            stale_epochs = 0;
            if let Some(dir) = &cfg.checkpoint_dir {
                model.save(
                    &dir.join("best.ckpt.json"),
                    serde_json::json!({"epoch": epoch, "val_loss": tracked}),
                )?;
            }
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.plateau_patience {
                adam.set_lr(adam.lr() * 0.5);
                stale_epochs = 0;
            }
        }

        logs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_top1,
            lr: adam.lr(),
            skipped,
        });
    }

    if let Some(dir) = &cfg.checkpoint_dir {
        model.save(
            &dir.join("final.ckpt.json"),
            serde_json::json!({"epochs": cfg.epochs}),
        )?;
    }
    Ok((model, logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brep::parse_part_graph;

    fn graph(nodes: &str, links: &str) -> PartGraph {
        parse_part_graph(&format!(
            r#"{{
                "part_id": "t",
                "bbox": [[0,0,0],[1,1,1]],
                "mesh": "t.obj",
                "nodes": [{nodes}],
                "links": [{links}]
            }}"#
        ))
        .unwrap()
    }

    fn face(id: usize, ty: &str, area: f64, radius: Option<f64>) -> String {
        let r = radius.map_or("null".to_string(), |r| r.to_string());
        format!(
            r#"{{"id":{id},"kind":"face","type":"{ty}","reversed":false,"length":0,
                "area":{area},"dihedral":0,"convexity":null,
                "axis_origin":[0,0,0],"axis_dir":[0,0,1],"radius":{r}}}"#
        )
    }

    fn edge(id: usize, ty: &str, length: f64) -> String {
        format!(
            r#"{{"id":{id},"kind":"edge","type":"{ty}","reversed":false,"length":{length},
                "area":0,"dihedral":0,"convexity":null,
                "axis_origin":[0,0,0],"axis_dir":[0,0,1],"radius":null}}"#
        )
    }

    /// Path graphs whose vertices all have distinct neighborhoods, so the
    /// attention layers can tell them apart.
    fn toy_sample(flip_label: bool) -> TrainSample {
        let g1 = graph(
            &format!(
                "{},{},{}",
                face(0, "Cylinder", 6.0, Some(1.0)),
                face(1, "Plane", 4.0, None),
                edge(2, "Line", 2.0)
            ),
            r#"{"s":0,"t":1},{"s":1,"t":2}"#,
        );
        let g2 = graph(
            &format!(
                "{},{},{}",
                face(0, "Plane", 9.0, None),
                face(1, "Cylinder", 6.1, Some(1.0)),
                edge(2, "Circle", 6.3)
            ),
            r#"{"s":0,"t":1},{"s":1,"t":2}"#,
        );
        let labels = if flip_label { vec![(1, 0)] } else { vec![(0, 1)] };
        TrainSample { g1, g2, labels }
    }

    fn fast_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            lr: 1e-2,
            epochs,
            seed: 3,
            network: NetworkConfig { width: 16, seed: 3, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn single_sample_overfits() {
        let sample = toy_sample(false);
        let cfg = fast_cfg(60);
        let (model, logs) = train(std::slice::from_ref(&sample), &[], &cfg).unwrap();
        let first = logs.first().unwrap().train_loss;
        let last = logs.last().unwrap().train_loss;
        assert!(last < first, "loss must fall: {first} → {last}");
        let scores = model.predict(&sample.g1, &sample.g2).unwrap();
        assert_eq!(scores.argmax(), Some((0, 1)));
    }

    #[test]
    fn oversized_samples_are_skipped_not_fatal() {
        let sample = toy_sample(false);
        let cfg = TrainConfig { skip_threshold: 5, ..fast_cfg(2) };
        let (_, logs) = train(std::slice::from_ref(&sample), &[], &cfg).unwrap();
        assert_eq!(logs[0].skipped, 1);
        assert!(logs[0].train_loss.is_nan());
    }

    #[test]
    fn fixed_seed_reproduces_the_loss_curve() {
        let samples = vec![toy_sample(false), toy_sample(true)];
        let cfg = fast_cfg(8);
        let (_, a) = train(&samples, &[], &cfg).unwrap();
        let (_, b) = train(&samples, &[], &cfg).unwrap();
        let la: Vec<f64> = a.iter().map(|l| l.train_loss).collect();
        let lb: Vec<f64> = b.iter().map(|l| l.train_loss).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn checkpoints_are_written_and_loadable() {
        let dir = tempfile::tempdir().unwrap();
        let sample = toy_sample(false);
        let cfg = TrainConfig {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..fast_cfg(4)
        };
        let (model, _) = train(std::slice::from_ref(&sample), std::slice::from_ref(&sample), &cfg).unwrap();
        let final_model = Model::load(&dir.path().join("final.ckpt.json")).unwrap();
        assert!(dir.path().join("best.ckpt.json").exists());
        let a = model.predict(&sample.g1, &sample.g2).unwrap();
        let b = final_model.predict(&sample.g1, &sample.g2).unwrap();
        assert_eq!(a.get(0, 0), b.get(0, 0));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(train(&[], &[], &fast_cfg(1)), Err(Error::EmptyDataset)));
    }

    #[test]
    fn validation_metrics_are_logged() {
        let train_set = vec![toy_sample(false)];
        let val_set = vec![toy_sample(false)];
        let (_, logs) = train(&train_set, &val_set, &fast_cfg(30)).unwrap();
        let last = logs.last().unwrap();
        assert!(last.val_loss.is_finite());
        assert_eq!(last.val_top1, 1.0);
    }
}
