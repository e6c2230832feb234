//! Detection of taxis with illegal driver substitution from GPS traces and
//! taximeter records.
//!
//! The pipeline models two per-day driver behaviors (sleeping time and
//! location, encoded as Fisher vectors; pick-up patterns, encoded as LDA
//! topic proportions), turns day-to-day changes into multi-scale pooled
//! self-similarity features, and classifies taxis with a noise-or boosted
//! multiple-component multiple-instance learner.

pub mod artifact;
pub mod cart;
pub mod config;
pub mod error;
pub mod eval;
pub mod fisher;
pub mod geo;
pub mod gmm;
pub mod ingest;
pub mod kmeans;
pub mod lda;
pub mod logistic;
pub mod mcmil;
pub mod numeric;
pub mod pipeline;
pub mod pu;
pub mod rng;
pub mod ssmsp;
pub mod stl;
pub mod synth;

pub use error::{Error, Result};
