//! Sleep activity recognition from passively sensed smartphone signals.
//!
//! The pipeline turns raw sensor records into 144-slot day vectors
//! ([`preprocessing`]), fits a heterogeneous HMM with optional silent states
//! ([`hhmm`]), picks a state count ([`model_selection`]), decodes sleep and
//! derives daily and weekly sleep indicators ([`indicators`]), and scores the
//! result against reference labels and simple baselines ([`evaluation`]).
//! [`synthdata`] produces subjects with known ground truth.

pub mod cluster;
pub mod error;
pub mod evaluation;
pub mod hhmm;
pub mod indicators;
pub mod model_selection;
pub mod preprocessing;
pub mod synthdata;

pub use error::{Error, Result};
