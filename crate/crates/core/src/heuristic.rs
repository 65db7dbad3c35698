//! Non-learned baselines: a type-frequency heuristic and uniform-random
//! scoring, both over the same n × m prediction space as the network.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::brep::{CurveType, Entity, EntityKind, EntityType, PartGraph, SurfaceType};
use crate::scores::ScoreMatrix;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("no joint sets to fit the prior on")]
    EmptyDataset,
}

/// Relative frequency of ground-truth entity-type pairings, unordered:
/// (Cylinder, Circle) and (Circle, Cylinder) share one bucket.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PairTypePrior {
    freq: HashMap<String, f64>,
}

fn pair_key(a: EntityType, b: EntityType) -> String {
    let (x, y) = if a.name() <= b.name() { (a, b) } else { (b, a) };
    format!("{}|{}", x.name(), y.name())
}

impl PairTypePrior {
    pub fn get(&self, a: EntityType, b: EntityType) -> f64 {
        self.freq.get(&pair_key(a, b)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }
}

/// Labeled joints paired with the graphs they index into, the minimum the
/// prior needs to resolve entity types.
pub struct LabeledPair<'a> {
    pub g1: &'a PartGraph,
    pub g2: &'a PartGraph,
    pub labels: &'a [(usize, usize)],
}

pub fn fit_prior(pairs: &[LabeledPair<'_>]) -> Result<PairTypePrior, Error> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut total = 0u64;
    for pair in pairs {
        for &(u, v) in pair.labels {
            let a = pair.g1.nodes[u].entity_type;
            let b = pair.g2.nodes[v].entity_type;
            *counts.entry(pair_key(a, b)).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let freq = counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect();
    Ok(PairTypePrior { freq })
}

const SIZE_REL_TOL: f64 = 0.05;

fn rel_within(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Same kind and comparable size: areas for faces, lengths for edges,
/// both within 5% relative.
fn similar(a: &Entity, b: &Entity) -> bool {
    if a.kind() != b.kind() {
        return false;
    }
    match a.kind() {
        EntityKind::Face => rel_within(a.area, b.area, SIZE_REL_TOL),
        EntityKind::Edge => rel_within(a.length, b.length, SIZE_REL_TOL),
    }
}

fn is_round(e: &Entity) -> bool {
    matches!(
        e.entity_type,
        EntityType::Surface(SurfaceType::Cylinder) | EntityType::Curve(CurveType::Circle)
    )
}

/// Both entities are circular (circle edges or cylinder faces) with radii
/// within 5% relative.
fn radii_match(a: &Entity, b: &Entity) -> bool {
    if !is_round(a) || !is_round(b) {
        return false;
    }
    match (a.radius, b.radius) {
        (Some(ra), Some(rb)) => rel_within(ra, rb, SIZE_REL_TOL),
        _ => false,
    }
}

/// Type-prior score plus unit bonuses for size similarity and radius match.
pub fn heuristic_scores(g1: &PartGraph, g2: &PartGraph, prior: &PairTypePrior) -> ScoreMatrix {
    let (n, m) = (g1.num_nodes(), g2.num_nodes());
    let mut scores = vec![0.0; n * m];
    for (u, a) in g1.nodes.iter().enumerate() {
        for (v, b) in g2.nodes.iter().enumerate() {
            let mut s = prior.get(a.entity_type, b.entity_type);
            if similar(a, b) {
                s += 1.0;
            }
            if radii_match(a, b) {
                s += 1.0;
            }
            scores[u * m + v] = s;
        }
    }
    ScoreMatrix::from_parts(g1, g2, scores)
}

/// Uniform i.i.d. scores, deterministic per seed.
pub fn random_scores(g1: &PartGraph, g2: &PartGraph, seed: u64) -> ScoreMatrix {
    let (n, m) = (g1.num_nodes(), g2.num_nodes());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..n * m).map(|_| rng.gen::<f64>()).collect();
    ScoreMatrix::from_parts(g1, g2, scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brep::parse_part_graph;

    fn tiny_graph(nodes: &str) -> PartGraph {
        let doc = format!(
            r#"{{
                "part_id": "t",
                "bbox": [[0,0,0],[1,1,1]],
                "mesh": "t.obj",
                "nodes": [{nodes}],
                "links": []
            }}"#
        );
        parse_part_graph(&doc).unwrap()
    }

    fn cyl(id: usize, area: f64, radius: f64) -> String {
        format!(
            r#"{{"id":{id},"kind":"face","type":"Cylinder","reversed":false,"length":0,
                "area":{area},"dihedral":0,"convexity":null,
                "axis_origin":[0,0,0],"axis_dir":[0,0,1],"radius":{radius}}}"#
        )
    }

    fn plane(id: usize, area: f64) -> String {
        format!(
            r#"{{"id":{id},"kind":"face","type":"Plane","reversed":false,"length":0,
                "area":{area},"dihedral":0,"convexity":null,
                "axis_origin":[0,0,0],"axis_dir":[0,0,1],"radius":null}}"#
        )
    }

    fn circle(id: usize, length: f64, radius: f64) -> String {
        format!(
            r#"{{"id":{id},"kind":"edge","type":"Circle","reversed":false,"length":{length},
                "area":0,"dihedral":0,"convexity":null,
                "axis_origin":[0,0,0],"axis_dir":[0,0,1],"radius":{radius}}}"#
        )
    }

    #[test]
    fn prior_concentrates_on_observed_pairs() {
        let g1 = tiny_graph(&cyl(0, 10.0, 3.0));
        let g2 = tiny_graph(&circle(0, 18.8, 3.0));
        let labels = [(0usize, 0usize)];
        let prior = fit_prior(&[LabeledPair { g1: &g1, g2: &g2, labels: &labels }]).unwrap();
        assert_eq!(
            prior.get(
                EntityType::Surface(SurfaceType::Cylinder),
                EntityType::Curve(CurveType::Circle)
            ),
            1.0
        );
        // Unordered: querying with the arguments swapped hits the same bucket.
        assert_eq!(
            prior.get(
                EntityType::Curve(CurveType::Circle),
                EntityType::Surface(SurfaceType::Cylinder)
            ),
            1.0
        );
        assert_eq!(
            prior.get(
                EntityType::Surface(SurfaceType::Plane),
                EntityType::Surface(SurfaceType::Plane)
            ),
            0.0
        );
    }

    #[test]
    fn equal_counts_split_evenly() {
        let g1 = tiny_graph(&format!("{},{}", cyl(0, 10.0, 3.0), plane(1, 4.0)));
        let g2 = tiny_graph(&format!("{},{}", circle(0, 18.8, 3.0), plane(1, 4.0)));
        let labels = [(0, 0), (1, 1)];
        let prior = fit_prior(&[LabeledPair { g1: &g1, g2: &g2, labels: &labels }]).unwrap();
        assert_eq!(
            prior.get(
                EntityType::Surface(SurfaceType::Cylinder),
                EntityType::Curve(CurveType::Circle)
            ),
            0.5
        );
        assert_eq!(
            prior.get(
                EntityType::Surface(SurfaceType::Plane),
                EntityType::Surface(SurfaceType::Plane)
            ),
            0.5
        );
    }

    #[test]
    fn empty_labels_cannot_fit() {
        let g1 = tiny_graph(&plane(0, 1.0));
        let labels: [(usize, usize); 0] = [];
        let err = fit_prior(&[LabeledPair { g1: &g1, g2: &g1, labels: &labels }]).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
    }

    #[test]
    fn radius_tolerance_is_five_percent() {
        let a = tiny_graph(&cyl(0, 10.0, 3.0));
        let close = tiny_graph(&cyl(0, 50.0, 3.05));
        let far = tiny_graph(&cyl(0, 50.0, 4.0));
        assert!(radii_match(&a.nodes[0], &close.nodes[0]));
        assert!(!radii_match(&a.nodes[0], &far.nodes[0]));
    }

    #[test]
    fn radius_matched_pair_outranks_prior_only_pairs() {
        // Part 1: one cylinder r=3 and one plane. Part 2: two cylinders, only
        // one radius-matched. Prior favors cylinder pairs but under 1.0, so
        // the radmatch bonus decides.
        let g1 = tiny_graph(&format!("{},{}", cyl(0, 10.0, 3.0), plane(1, 10.0)));
        let g2 = tiny_graph(&format!("{},{}", cyl(0, 50.0, 2.97), plane(1, 50.0)));
        let labels = [(0, 0), (1, 1)];
        let prior = fit_prior(&[LabeledPair { g1: &g1, g2: &g2, labels: &labels }]).unwrap();
        let scores = heuristic_scores(&g1, &g2, &prior);
        assert_eq!(scores.argmax(), Some((0, 0)));
        // Prior alone on (0,0): 0.5; radmatch lifts it to 1.5.
        assert_eq!(scores.get(0, 0), 1.5);
    }

    #[test]
    fn swapping_parts_transposes_the_scores() {
        let g1 = tiny_graph(&format!("{},{}", cyl(0, 10.0, 3.0), plane(1, 12.0)));
        let g2 = tiny_graph(&format!(
            "{},{},{}",
            cyl(0, 10.4, 3.01),
            plane(1, 11.9),
            circle(2, 6.28, 1.0)
        ));
        let prior = PairTypePrior::default();
        let fwd = heuristic_scores(&g1, &g2, &prior);
        let rev = heuristic_scores(&g2, &g1, &prior);
        for u in 0..2 {
            for v in 0..3 {
                assert_eq!(fwd.get(u, v), rev.get(v, u));
            }
        }
    }

    #[test]
    fn random_scores_are_seed_deterministic() {
        let g1 = tiny_graph(&format!("{},{}", cyl(0, 10.0, 3.0), plane(1, 12.0)));
        let g2 = tiny_graph(&plane(0, 5.0));
        let a = random_scores(&g1, &g2, 99);
        let b = random_scores(&g1, &g2, 99);
        let c = random_scores(&g1, &g2, 100);
        for u in 0..2 {
            assert_eq!(a.get(u, 0), b.get(u, 0));
        }
        assert!((0..2).any(|u| a.get(u, 0) != c.get(u, 0)));
    }

    #[test]
    fn random_argmax_is_uniform_over_cells() {
        let g1 = tiny_graph(&format!("{},{}", cyl(0, 10.0, 3.0), plane(1, 12.0)));
        let g2 = tiny_graph(&format!("{},{}", plane(0, 5.0), circle(1, 3.0, 0.5)));
        let cells = 4;
        let draws = 10_000usize;
        let mut counts = vec![0u64; cells];
        for seed in 0..draws as u64 {
            let (u, v) = random_scores(&g1, &g2, seed).argmax().unwrap();
            counts[u * 2 + v] += 1;
        }
        let expected = draws as f64 / cells as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 3 degrees of freedom: chi-square critical value at p=0.01 is 11.34.
        assert!(chi2 < 11.34, "chi-square {chi2}, counts {counts:?}");
    }

    #[test]
    fn scale_invariance_of_the_argmax() {
        let g1 = tiny_graph(&format!("{},{}", cyl(0, 10.0, 3.0), plane(1, 8.0)));
        let g2 = tiny_graph(&format!("{},{}", cyl(0, 40.0, 3.02), plane(1, 8.1)));
        let prior = PairTypePrior::default();
        let base = heuristic_scores(&g1, &g2, &prior).argmax();

        let scale = |src: &PartGraph, f: f64| {
            let mut g = src.clone();
            for e in &mut g.nodes {
                e.area *= f * f;
                e.length *= f;
                if let Some(r) = &mut e.radius {
                    *r *= f;
                }
            }
            g
        };
        let s1 = scale(&g1, 12.5);
        let s2 = scale(&g2, 12.5);
        assert_eq!(heuristic_scores(&s1, &s2, &prior).argmax(), base);
    }
}
