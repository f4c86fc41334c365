//! Information criteria and sweeps over state counts and supervision
//! configurations.

use std::io::Write;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hhmm::{fit_baum_welch, initialize, FitConfig, FitOutcome, ObservationSequence, Supervision};

/// `k·ln(n) − 2·loglik`.
pub fn bic(loglik: f64, k: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("BIC needs at least one observation"));
    }
    Ok(bic_from_log_n(loglik, k, (n as f64).ln()))
}

fn bic_from_log_n(loglik: f64, k: usize, log_n: f64) -> f64 {
    k as f64 * log_n - 2.0 * loglik
}

/// `2k − 2·loglik`.
pub fn aic(loglik: f64, k: usize) -> f64 {
    2.0 * k as f64 - 2.0 * loglik
}

/// One fitted cell of a sweep. Numeric fields are empty when the fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_states: usize,
    pub config_label: Supervision,
    pub loglik: Option<f64>,
    pub n_free_params: Option<usize>,
    pub bic: Option<f64>,
    pub aic: Option<f64>,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Total time slots across the sequences; the `n` of BIC.
    pub n_observations: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    fn argmin(&self, config: Option<Supervision>, key: impl Fn(&SweepRow) -> Option<f64>) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| config.is_none_or(|c| r.config_label == c))
            .filter_map(|r| key(r).map(|v| (v, r)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, r)| r)
    }

    /// Row with the lowest BIC, optionally within one configuration.
    pub fn best_by_bic(&self, config: Option<Supervision>) -> Option<&SweepRow> {
        self.argmin(config, |r| r.bic)
    }

    pub fn best_by_aic(&self, config: Option<Supervision>) -> Option<&SweepRow> {
        self.argmin(config, |r| r.aic)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n_states", "config_label", "loglik", "n_free_params", "bic", "aic", "seed", "error"])?;
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                r.n_states.to_string(),
                r.config_label.to_string(),
                opt(r.loglik),
                r.n_free_params.map(|k| k.to_string()).unwrap_or_default(),
                opt(r.bic),
                opt(r.aic),
                r.seed.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits one (state count, configuration) cell with `restarts` seeded
/// initialisations and keeps the best final log-likelihood.
///
/// Restart `r` uses seed `base_seed + r`. A restart that fails (for example
/// with a degenerate state) is skipped; the error is returned only when every
/// restart fails.
pub fn fit_cell(
    seqs: &[ObservationSequence],
    n_states: usize,
    supervision: Supervision,
    fit: &FitConfig,
    restarts: usize,
) -> std::result::Result<(FitOutcome, u64), (Error, u64)> {
    let mut best: Option<(FitOutcome, u64)> = None;
    let mut last_err = None;
    for r in 0..restarts.max(1) as u64 {
        let seed = fit.seed.wrapping_add(r);
        let attempt = initialize(seqs, n_states, supervision, fit.cov_floor, seed)
            .and_then(|init| fit_baum_welch(&init, seqs, &FitConfig { seed, ..*fit }));
        match attempt {
            Ok(out) => {
                if best.as_ref().is_none_or(|(b, _)| out.final_loglik() > b.final_loglik()) {
                    best = Some((out, seed));
                }
            }
            Err(e) => last_err = Some((e, seed)),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one restart ran"))
}

/// Fits every (configuration, state count) pair; rows are ordered by
/// configuration, then state count. Per-cell failures are recorded, not
/// propagated.
pub fn sweep(
    seqs: &[ObservationSequence],
    states: RangeInclusive<usize>,
    configs: &[Supervision],
    fit: &FitConfig,
    restarts: usize,
) -> Result<SweepReport> {
    if seqs.is_empty() {
        return Err(Error::invalid("no sequences to sweep over"));
    }
    if states.is_empty() || configs.is_empty() {
        return Err(Error::invalid("empty state range or configuration list"));
    }
    fit.validate()?;
    let n_obs: usize = seqs.iter().map(ObservationSequence::len).sum();
    let cells: Vec<(Supervision, usize)> = configs
        .iter()
        .flat_map(|&c| states.clone().map(move |n| (c, n)))
        .collect();

    let run = |&(config, n): &(Supervision, usize)| -> SweepRow {
        match fit_cell(seqs, n, config, fit, restarts) {
            Ok((out, seed)) => {
                let ll = out.final_loglik();
                let k = out.params.n_free_params();
                SweepRow {
                    n_states: n,
                    config_label: config,
                    loglik: Some(ll),
                    n_free_params: Some(k),
                    bic: bic(ll, k, n_obs).ok(),
                    aic: Some(aic(ll, k)),
                    seed,
                    error: None,
                }
            }
            Err((e, seed)) => SweepRow {
                n_states: n,
                config_label: config,
                loglik: None,
                n_free_params: None,
                bic: None,
                aic: None,
                seed,
                error: Some(e.to_string()),
            },
        }
    };

    #[cfg(feature = "parallel")]
    let rows = {
        use rayon::prelude::*;
        cells.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows = cells.iter().map(run).collect();

    Ok(SweepReport {
        n_observations: n_obs,
        rows,
    })
}
