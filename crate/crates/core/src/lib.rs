//! Joint prediction for CAD assemblies.
//!
//! Pipeline: part graphs parsed from JSON ([`brep`]) are scored by a graph
//! attention network ([`network`]) or by baselines ([`heuristic`]); the
//! top-ranked entity pairs define candidate joint axes, and a derivative-free
//! search over (offset, rotation, flip) minimizes a Monte-Carlo
//! overlap/contact cost on triangle meshes ([`geometry`], [`search`]).
//! [`dataset`] provides consolidation, splits, and a synthetic generator;
//! [`eval`] the accuracy and chamfer metrics.

pub mod brep;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod heuristic;
pub mod network;
pub mod scores;
pub mod search;
