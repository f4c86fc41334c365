//! Classification metrics, indicator errors, baselines and reference labels.
//!
//! Asleep is the positive class throughout.

mod baselines;
mod metrics;
mod reference;
mod report;

pub use baselines::{dummy_classifier, BinaryImpute, DummyStrategy, FeatureImputer, GmmClassifier, KMeansClassifier};
pub use metrics::{classification_metrics, indicator_errors, ClassificationMetrics, ErrorStats, MeanStd};
pub use reference::{
    episodes_to_grid, read_reference_csv, read_reference_jsonl, reference_from_episodes, write_reference_csv,
    write_reference_jsonl, DayKey, ReferenceDay, ReferenceEpisode, ReferenceSet,
};
pub use report::{EvalReport, MethodReport, Predictions, ScoringRules, SequenceScore};
