//! Temporary measurement harness; deleted once the numbers are frozen.

use std::time::Instant;

use joint_forge_core::brep::derive_axis;
use joint_forge_core::dataset::{gen_synthetic, SynthConfig, SynthSample};
use joint_forge_core::eval::{axis_accuracy, pair_scale, collinear_hit, EvalSample, HitTol};
use joint_forge_core::heuristic::{fit_prior, heuristic_scores, random_scores, LabeledPair};
use joint_forge_core::network::{train, NetworkConfig, TrainConfig, TrainSample};
use joint_forge_core::scores::ScoreMatrix;
use joint_forge_core::search::{nelder_mead, search_pose, SearchConfig};

fn to_train(samples: &[SynthSample]) -> Vec<TrainSample> {
    samples
        .iter()
        .map(|s| TrainSample {
            g1: s.part1.clone(),
            g2: s.part2.clone(),
            labels: s.labels(),
        })
        .collect()
}

fn accuracy(samples: &[SynthSample], matrices: &[ScoreMatrix], k: usize) -> f64 {
    let labels: Vec<Vec<(usize, usize)>> = samples.iter().map(|s| s.labels()).collect();
    let evals: Vec<EvalSample> = samples
        .iter()
        .zip(matrices)
        .zip(&labels)
        .map(|((s, m), l)| EvalSample {
            g1: &s.part1,
            g2: &s.part2,
            scores: m,
            labels: l,
            holes: s.set.holes,
        })
        .collect();
    axis_accuracy(&evals, k).unwrap().all.fraction().unwrap()
}

#[test]
#[ignore]
fn measure_overfit() {
    let train_synth = gen_synthetic(&SynthConfig {
        num_samples: 50,
        seed: 100,
        ..SynthConfig::default()
    })
    .unwrap();
    let held_synth = gen_synthetic(&SynthConfig {
        num_samples: 50,
        seed: 200,
        ..SynthConfig::default()
    })
    .unwrap();
    let train_set = to_train(&train_synth);
    let held_set = to_train(&held_synth);

    for (width, lr, epochs) in [(128usize, 3e-3, 150usize)] {
        let t0 = Instant::now();
        let cfg = TrainConfig {
            lr,
            epochs,
            seed: 7,
            network: NetworkConfig { width, seed: 7, ..Default::default() },
            ..Default::default()
        };
        let (model, logs) = train(&train_set, &held_set, &cfg).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        for l in logs.iter().step_by(10) {
            println!(
                "w{width} lr{lr} ep{:3}  train_loss {:.4}  val_loss {:.4}  val_top1 {:.3}",
                l.epoch, l.train_loss, l.val_loss, l.val_top1
            );
        }
        let train_scores: Vec<ScoreMatrix> = train_synth
            .iter()
            .map(|s| model.predict(&s.part1, &s.part2).unwrap())
            .collect();
        let held_scores: Vec<ScoreMatrix> = held_synth
            .iter()
            .map(|s| model.predict(&s.part1, &s.part2).unwrap())
            .collect();
        println!(
            "w{width} lr{lr} ep{epochs}: {secs:.1}s  train_acc {:.3}  held_acc {:.3}",
            accuracy(&train_synth, &train_scores, 1),
            accuracy(&held_synth, &held_scores, 1),
        );
    }
}

#[test]
#[ignore]
fn measure_baselines() {
    let mut pool = gen_synthetic(&SynthConfig {
        num_samples: 50,
        seed: 100,
        ..SynthConfig::default()
    })
    .unwrap();
    pool.extend(
        gen_synthetic(&SynthConfig {
            num_samples: 50,
            seed: 200,
            ..SynthConfig::default()
        })
        .unwrap(),
    );
    let labels: Vec<Vec<(usize, usize)>> = pool.iter().map(|s| s.labels()).collect();
    let pairs: Vec<LabeledPair> = pool
        .iter()
        .zip(&labels)
        .map(|(s, l)| LabeledPair { g1: &s.part1, g2: &s.part2, labels: l })
        .collect();
    let prior = fit_prior(&pairs).unwrap();
    let heur: Vec<ScoreMatrix> = pool
        .iter()
        .map(|s| heuristic_scores(&s.part1, &s.part2, &prior))
        .collect();
    println!("heuristic top1 {:.3}", accuracy(&pool, &heur, 1));

    let mut mean = 0.0;
    for seed in 0..20u64 {
        let rand: Vec<ScoreMatrix> = pool
            .iter()
            .enumerate()
            .map(|(i, s)| random_scores(&s.part1, &s.part2, seed.wrapping_mul(1000) + i as u64))
            .collect();
        mean += accuracy(&pool, &rand, 1);
    }
    println!("random top1 (20 seeds) {:.4}", mean / 20.0);

    // Analytic expectation.
    let mut expect = 0.0;
    for (s, l) in pool.iter().zip(&labels) {
        let cells =
            joint_forge_core::eval::expanded_label_cells(&s.part1, &s.part2, l).unwrap();
        let m = ScoreMatrix::from_parts(&s.part1, &s.part2, vec![0.0; s.part1.num_nodes() * s.part2.num_nodes()]);
        let p = cells.iter().filter(|&&(u, v)| m.is_valid(u, v)).count();
        expect += p as f64 / m.num_valid() as f64;
    }
    println!("analytic expectation {:.4}", expect / pool.len() as f64);
}

#[test]
#[ignore]
fn measure_search() {
    let train_synth = gen_synthetic(&SynthConfig {
        num_samples: 50,
        seed: 100,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        lr: 3e-3,
        epochs: 150,
        seed: 7,
        network: NetworkConfig { width: 128, seed: 7, ..Default::default() },
        ..Default::default()
    };
    let (model, _) = train(&to_train(&train_synth), &[], &cfg).unwrap();

    let pegs = gen_synthetic(&SynthConfig {
        num_samples: 10,
        seed: 300,
        peg_plate_weight: 1.0,
        cube_pair_weight: 0.0,
        plate_pair_weight: 0.0,
        sibling_fraction: 0.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let scfg = SearchConfig::default();
    let tol = HitTol::default();
    let mut hits = 0;
    let t0 = Instant::now();
    for (i, s) in pegs.iter().enumerate() {
        let preds = model.predict(&s.part1, &s.part2).unwrap().top_k(scfg.k);
        let t1 = Instant::now();
        let res = search_pose(
            &s.part1,
            &s.part2,
            &s.mesh1,
            std::slice::from_ref(&s.mesh2),
            &preds,
            &scfg,
            42 + i as u64,
        )
        .unwrap();
        let secs = t1.elapsed().as_secs_f64();
        let scale = pair_scale(&s.part1, &s.part2);
        let hit = s.set.joints.iter().any(|j| {
            let a1 = derive_axis(&s.part1, j.u).unwrap();
            let gt_axis = derive_axis(&s.part2, j.v).unwrap();
            collinear_hit(&res.transform.apply_axis(&a1), &gt_axis, scale, &tol)
        });
        hits += hit as usize;
        println!(
            "sample {i}: {secs:.2}s hit={hit} cost {:.3} rank {} cell ({}, {})",
            res.cost, res.rank, res.u, res.v
        );
    }
    println!(
        "hits {hits}/10, total {:.1}s (mean {:.2}s)",
        t0.elapsed().as_secs_f64(),
        t0.elapsed().as_secs_f64() / 10.0
    );
}

#[test]
#[ignore]
fn measure_rosenbrock() {
    let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    for (step, tol) in [(0.1, 1e-8), (0.5, 1e-8), (0.1, 1e-10)] {
        let cfg = SearchConfig {
            max_iters: 200,
            spread_tol: tol,
            ..SearchConfig::default()
        };
        let (x, f) = nelder_mead(rosen, &[-1.2, 1.0], &[step, step], &cfg);
        println!("step {step} tol {tol:e}: f {f:.3e} at ({:.4}, {:.4})", x[0], x[1]);
    }
}
