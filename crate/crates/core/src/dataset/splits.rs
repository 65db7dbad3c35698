//! Deterministic assignment of joint sets to train/val/test splits, with
//! optional exclusion of samples that contain sibling entities.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Error};
use crate::brep::find_siblings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    /// Holds samples barred from the clean test set.
    TestOriginal,
}

pub const DEFAULT_RATIOS: [f64; 4] = [0.7, 0.1, 0.1, 0.1];

/// Stored beside the corpus so any split is reproducible from its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub ratios: [f64; 4],
    pub seed: u64,
    pub exclude_siblings: bool,
    pub assignment: BTreeMap<String, Split>,
}

/// Largest-remainder apportionment of `total` items into four buckets.
/// Sizes always sum to `total` and each is within one of `ratio * total`.
fn bucket_sizes(total: usize, ratios: [f64; 4]) -> [usize; 4] {
    let mut sizes = [0usize; 4];
    let mut fractions: Vec<(f64, usize)> = Vec::with_capacity(4);
    for (i, &r) in ratios.iter().enumerate() {
        let exact = r * total as f64;
        sizes[i] = exact.floor() as usize;
        fractions.push((exact - exact.floor(), i));
    }
    let assigned: usize = sizes.iter().sum();
    fractions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for k in 0..total - assigned {
        sizes[fractions[k].1] += 1;
    }
    sizes
}

/// Shuffle `(name, has_siblings)` items with the seed and cut the shuffled
/// order into train/val/test/test-original slices sized by largest-remainder
/// apportionment of the ratios. With `exclude_siblings` on, sibling-carrying
/// samples that landed in val or test are rerouted to test-original, so the
/// clean evaluation splits never contain ambiguous samples. Results are
/// returned in input order.
pub fn assign_splits(
    items: &[(String, bool)],
    ratios: [f64; 4],
    seed: u64,
    exclude_siblings: bool,
) -> Result<Vec<(String, Split)>, Error> {
    if ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
        return Err(Error::InvalidConfig(format!(
            "split ratios must lie in [0, 1], got {ratios:?}"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split ratios must sum to 1, got {sum}"
        )));
    }

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let sizes = bucket_sizes(items.len(), ratios);

    let mut assigned = vec![Split::Train; items.len()];
    let mut cursor = 0usize;
    for (bucket, &size) in sizes.iter().enumerate() {
        let split = [Split::Train, Split::Val, Split::Test, Split::TestOriginal][bucket];
        for &item in &order[cursor..cursor + size] {
            assigned[item] = split;
        }
        cursor += size;
    }

    Ok(items
        .iter()
        .zip(assigned)
        .map(|((name, has_siblings), mut split)| {
            if exclude_siblings
                && *has_siblings
                && matches!(split, Split::Val | Split::Test)
            {
                split = Split::TestOriginal;
            }
            (name.clone(), split)
        })
        .collect())
}

/// A sample is ambiguous when either part has unlabeled entities that look
/// like its labeled ones.
fn set_has_siblings(corpus: &Corpus, set: &crate::brep::JointSet) -> Result<bool, Error> {
    let g1 = corpus.part(&set.part1)?;
    let g2 = corpus.part(&set.part2)?;
    let labeled1 = set.joints.iter().map(|j| j.u).collect();
    let labeled2 = set.joints.iter().map(|j| j.v).collect();
    Ok(!find_siblings(g1, &labeled1).is_empty() || !find_siblings(g2, &labeled2).is_empty())
}

/// Assign every joint set in the corpus, detecting sibling entities from
/// the part graphs.
pub fn make_splits(
    corpus: &Corpus,
    ratios: [f64; 4],
    seed: u64,
    exclude_siblings: bool,
) -> Result<SplitManifest, Error> {
    let mut items = Vec::with_capacity(corpus.sets.len());
    for (name, set) in &corpus.sets {
        items.push((name.clone(), set_has_siblings(corpus, set)?));
    }
    let assignment = assign_splits(&items, ratios, seed, exclude_siblings)?
        .into_iter()
        .collect();
    Ok(SplitManifest {
        ratios,
        seed,
        exclude_siblings,
        assignment,
    })
}
