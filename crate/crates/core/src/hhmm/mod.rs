//! Heterogeneous hidden Markov model: Gaussian continuous channels and
//! categorical discrete channels emitted jointly by each hidden state.

mod emission;
mod fit;
mod impute;
mod inference;
mod init;
mod io;
mod observation;
pub(crate) mod params;
mod sample;

pub use emission::emission_loglik;
pub use fit::{fit_baum_welch, total_loglik, FitConfig, FitOutcome, DEGENERATE_MASS};
pub use impute::impute;
pub use inference::{
    log_backward, log_forward, log_sum_exp, path_log_score, posteriors, viterbi, viterbi_with_score,
    PosteriorTables,
};
pub use init::{initialize, Supervision};
pub(crate) use init::clip_eigenvalues;
pub use io::{ChannelNames, ModelFile, MODEL_SCHEMA_VERSION};
pub use observation::{default_window_start, ObservationSequence, SLOT_MINUTES};
pub use params::{FullyMissingRule, HhmmParams, STOCHASTIC_TOL};
pub use sample::{sample, sample_many, Sampler};
