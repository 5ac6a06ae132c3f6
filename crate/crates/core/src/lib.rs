//! Personalized class-incremental food classification.
//!
//! - [`personalizer`]: per-user meal frequency, time and location state that
//!   re-weights classifier probabilities and learns from confirmed meals.
//! - [`pdsn`]: cosine-classifier head with per-session supporters and a
//!   learned gate, trained by SGD over backbone features.
//! - [`features`]: synthetic feature clusters and the `emb/1` embedding file.
//! - [`simulator`]: simulated eating patterns and meal streams.
//! - [`harness`]: online evaluation, breakdowns and factor ablations.

pub mod error;
pub mod features;
pub mod harness;
pub mod json;
pub mod linalg;
pub mod pdsn;
pub mod personalizer;
pub mod rng;
pub mod simulator;

pub use error::{Error, ParseErrorKind, Result};
