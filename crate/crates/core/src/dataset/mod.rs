//! Dataset tooling: content hashing of parts, consolidation of raw joints
//! into per-pair joint sets, split assignment, corpus IO, and a synthetic
//! generator for desk-scale training data.

mod consolidate;
mod hash;
mod io;
mod splits;
mod synth;

pub use consolidate::{consolidate, flatten_sets, JointRecord, TRANSFORM_DEDUP_TOL};
pub use hash::part_hash;
pub use io::{atomic_write, load_corpus, load_splits, save_corpus, save_splits, Corpus};
pub use splits::{assign_splits, make_splits, Split, SplitManifest, DEFAULT_RATIOS};
pub use synth::{
    gen_stack, gen_synthetic, synth_corpus, StackSample, SynthConfig, SynthSample, Template,
};

use std::path::PathBuf;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    /// Hashing needs volume and moments of inertia.
    #[error("part {0:?} has no physical properties")]
    MissingPhysicalProps(String),

    #[error("unknown part {0:?}")]
    UnknownPart(String),

    #[error("part {0:?} has no mesh")]
    MissingMesh(String),

    #[error("duplicate part id {0:?}")]
    DuplicatePart(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Brep(#[from] crate::brep::Error),

    #[error(transparent)]
    Geometry(#[from] crate::geometry::Error),
}
