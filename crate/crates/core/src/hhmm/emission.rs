//! Per-slot emission log-likelihoods under missing data.
//!
//! Continuous channels are scored with the Gaussian marginal over whichever
//! channels are observed in the slot. When none are observed the state mean is
//! substituted (or the channels are integrated out, see
//! [`FullyMissingRule`]). A missing discrete cell is scored with the state's
//! most likely symbol.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::observation::ObservationSequence;
use super::params::{FullyMissingRule, HhmmParams};
use crate::error::{Error, Result};

/// Factorisation of one state's Gaussian for one observed-channel pattern.
#[derive(Debug, Clone)]
pub(crate) struct PatternFactor {
    pub observed: Vec<usize>,
    pub missing: Vec<usize>,
    /// Inverse of the observed block, row-major.
    pub inv_oo: Vec<f64>,
    /// Log normaliser of the observed marginal, or the whole score when
    /// nothing is observed.
    pub log_norm: f64,
    /// `Σ_mo Σ_oo⁻¹`, `missing × observed`.
    pub gain: Vec<f64>,
    /// `Σ_mm − Σ_mo Σ_oo⁻¹ Σ_om`, `missing × missing`.
    pub cond_cov: Vec<f64>,
}

impl PatternFactor {
    fn build(params: &HhmmParams, state: usize, pattern: u64) -> Result<Self> {
        let mc = params.n_continuous();
        let cov = &params.covariances[state];
        let observed: Vec<usize> = (0..mc).filter(|m| pattern & (1 << m) != 0).collect();
        let missing: Vec<usize> = (0..mc).filter(|m| pattern & (1 << m) == 0).collect();
        let (no, nm) = (observed.len(), missing.len());

        if no == 0 {
            let log_norm = match params.fully_missing {
                FullyMissingRule::Marginalize => 0.0,
                FullyMissingRule::MeanSubstitution if mc == 0 => 0.0,
                FullyMissingRule::MeanSubstitution => {
                    let full = DMatrix::from_fn(mc, mc, |a, b| cov[a][b]);
                    let chol = full.cholesky().ok_or_else(|| {
                        Error::numerical(Some(state), "covariance is not positive definite")
                    })?;
                    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                    -0.5 * (mc as f64 * (2.0 * PI).ln() + logdet)
                }
            };
            return Ok(Self {
                observed,
                missing,
                inv_oo: Vec::new(),
                log_norm,
                gain: Vec::new(),
                cond_cov: flatten(&DMatrix::from_fn(nm, nm, |a, b| cov[a][b])),
            });
        }

        let soo = DMatrix::from_fn(no, no, |a, b| cov[observed[a]][observed[b]]);
        let chol = soo.cholesky().ok_or_else(|| {
            Error::numerical(Some(state), "observed covariance block is not positive definite")
        })?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let inv = chol.inverse();
        let smo = DMatrix::from_fn(nm, no, |a, b| cov[missing[a]][observed[b]]);
        let smm = DMatrix::from_fn(nm, nm, |a, b| cov[missing[a]][missing[b]]);
        let gain = &smo * &inv;
        let cond = &smm - &gain * smo.transpose();
        Ok(Self {
            log_norm: -0.5 * (no as f64 * (2.0 * PI).ln() + logdet),
            inv_oo: flatten(&inv),
            gain: flatten(&gain),
            cond_cov: flatten(&cond),
            observed,
            missing,
        })
    }

    /// Log-density of the observed part of `row` given the state `mean`.
    fn log_density(&self, row: &[f64], mean: &[f64]) -> f64 {
        let no = self.observed.len();
        if no == 0 {
            return self.log_norm;
        }
        let mut quad = 0.0;
        for a in 0..no {
            let da = row[self.observed[a]] - mean[self.observed[a]];
            for b in 0..no {
                let db = row[self.observed[b]] - mean[self.observed[b]];
                quad += da * self.inv_oo[a * no + b] * db;
            }
        }
        self.log_norm - 0.5 * quad
    }

    /// Conditional mean of the missing channels given the observed ones,
    /// written into a full-length vector (observed entries copied from `row`).
    pub fn complete_row(&self, row: &[f64], mean: &[f64]) -> Vec<f64> {
        let mut out = row.to_vec();
        let no = self.observed.len();
        for (a, &m) in self.missing.iter().enumerate() {
            let mut v = mean[m];
            for b in 0..no {
                let o = self.observed[b];
                v += self.gain[a * no + b] * (row[o] - mean[o]);
            }
            out[m] = v;
        }
        out
    }
}

fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Emission evaluator prepared for a fixed parameter set and a fixed set of
/// observed-channel patterns.
#[derive(Debug, Clone)]
pub(crate) struct EmissionModel<'a> {
    pub params: &'a HhmmParams,
    /// pattern → per-state factors
    factors: BTreeMap<u64, Vec<PatternFactor>>,
    /// `[channel][state][symbol]`
    disc_log: Vec<Vec<Vec<f64>>>,
    /// `[channel][state]`: most likely symbol (lowest index on ties).
    ml_symbol: Vec<Vec<usize>>,
}

impl<'a> EmissionModel<'a> {
    pub fn new<'s>(
        params: &'a HhmmParams,
        seqs: impl IntoIterator<Item = &'s ObservationSequence>,
    ) -> Result<Self> {
        let mut patterns = std::collections::BTreeSet::new();
        for seq in seqs {
            check_shape(params, seq)?;
            for t in 0..seq.len() {
                patterns.insert(seq.observed_pattern(t));
            }
        }
        Self::for_patterns(params, patterns)
    }

    pub fn for_patterns(params: &'a HhmmParams, patterns: impl IntoIterator<Item = u64>) -> Result<Self> {
        let n = params.n_states();
        let mut factors = BTreeMap::new();
        for p in patterns {
            let per_state = (0..n)
                .map(|i| PatternFactor::build(params, i, p))
                .collect::<Result<Vec<_>>>()?;
            factors.insert(p, per_state);
        }
        let disc_log = params
            .disc_probs
            .iter()
            .map(|ch| ch.iter().map(|row| row.iter().map(|p| p.ln()).collect()).collect())
            .collect();
        let ml_symbol = params
            .disc_probs
            .iter()
            .map(|ch| ch.iter().map(|row| argmax_first(row)).collect())
            .collect();
        Ok(Self {
            params,
            factors,
            disc_log,
            ml_symbol,
        })
    }

    pub fn factor(&self, pattern: u64, state: usize) -> &PatternFactor {
        &self.factors[&pattern][state]
    }

    pub fn ml_symbol(&self, channel: usize, state: usize) -> usize {
        self.ml_symbol[channel][state]
    }

    pub fn slot(&self, seq: &ObservationSequence, t: usize, state: usize) -> f64 {
        let pattern = seq.observed_pattern(t);
        let mut ll = self.factor(pattern, state).log_density(seq.continuous_row(t), &self.params.means[state]);
        let row = seq.discrete_row(t);
        let mask = seq.discrete_mask(t);
        for m in 0..self.disc_log.len() {
            let sym = if mask[m] { row[m] as usize } else { self.ml_symbol[m][state] };
            ll += self.disc_log[m][state][sym];
        }
        ll
    }

    /// `T × I` table of emission log-likelihoods, row-major.
    pub fn table(&self, seq: &ObservationSequence) -> Vec<f64> {
        let n = self.params.n_states();
        let mut out = Vec::with_capacity(seq.len() * n);
        for t in 0..seq.len() {
            for i in 0..n {
                out.push(self.slot(seq, t, i));
            }
        }
        out
    }
}

pub(crate) fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn check_shape(params: &HhmmParams, seq: &ObservationSequence) -> Result<()> {
    if seq.n_continuous() != params.n_continuous() || seq.n_discrete() != params.n_discrete() {
        return Err(Error::invalid(format!(
            "sequence has {}+{} channels, model expects {}+{}",
            seq.n_continuous(),
            seq.n_discrete(),
            params.n_continuous(),
            params.n_discrete()
        )));
    }
    let symbols = params.n_symbols();
    for t in 0..seq.len() {
        let row = seq.discrete_row(t);
        let mask = seq.discrete_mask(t);
        for m in 0..row.len() {
            if mask[m] && row[m] as usize >= symbols[m] {
                return Err(Error::invalid(format!(
                    "slot {t}: symbol {} outside alphabet of channel {m}",
                    row[m]
                )));
            }
        }
    }
    Ok(())
}

/// `log p(y_t, l_t | s_t = state)` for a single slot of `seq`.
pub fn emission_loglik(params: &HhmmParams, state: usize, seq: &ObservationSequence, t: usize) -> Result<f64> {
    if state >= params.n_states() {
        return Err(Error::invalid(format!("state {state} out of range")));
    }
    if t >= seq.len() {
        return Err(Error::invalid(format!("slot {t} out of range")));
    }
    check_shape(params, seq)?;
    let model = EmissionModel::for_patterns(params, [seq.observed_pattern(t)])?;
    Ok(model.slot(seq, t, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hhmm::params::fixtures::params;
    use approx::assert_abs_diff_eq;

    #[test]
    fn standard_normal_at_mode() {
        let p = params(vec![1.0], vec![vec![1.0]], vec![vec![0.0]], vec![vec![vec![1.0]]], vec![]);
        let seq = ObservationSequence::complete(&[vec![0.0]], &[]).unwrap();
        let ll = emission_loglik(&p, 0, &seq, 0).unwrap();
        assert_abs_diff_eq!(ll, -0.918_938_533_204_672_7, epsilon = 1e-12);
    }

    #[test]
    fn observed_symbol_plus_mean_substitution() {
        // Variance 0.25 → density at the mean is 1/sqrt(2π·0.25).
        let p = params(
            vec![1.0],
            vec![vec![1.0]],
            vec![vec![3.0]],
            vec![vec![vec![0.25]]],
            vec![vec![vec![0.8, 0.2]]],
        );
        let seq = ObservationSequence::from_rows(1, 1, &[vec![None]], &[vec![Some(0)]]).unwrap();
        let expected = 0.8f64.ln() + (1.0 / (2.0 * PI * 0.25).sqrt()).ln();
        assert_abs_diff_eq!(emission_loglik(&p, 0, &seq, 0).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn all_missing_uses_most_likely_symbol() {
        let mut p = params(
            vec![1.0],
            vec![vec![1.0]],
            vec![vec![0.0]],
            vec![vec![vec![1.0]]],
            vec![vec![vec![0.3, 0.7]]],
        );
        p.fully_missing = FullyMissingRule::Marginalize;
        let seq = ObservationSequence::from_rows(1, 1, &[vec![None]], &[vec![None]]).unwrap();
        assert_abs_diff_eq!(emission_loglik(&p, 0, &seq, 0).unwrap(), 0.7f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn partial_missing_uses_observed_marginal() {
        let cov = vec![vec![2.0, 0.9], vec![0.9, 1.0]];
        let p = params(vec![1.0], vec![vec![1.0]], vec![vec![1.0, -1.0]], vec![cov], vec![]);
        let seq = ObservationSequence::from_rows(2, 0, &[vec![None, Some(0.5)]], &[]).unwrap();
        // Marginal of channel 1 is N(-1, 1).
        let expected = -0.5 * (2.0 * PI).ln() - 0.5 * 1.5f64.powi(2);
        assert_abs_diff_eq!(emission_loglik(&p, 0, &seq, 0).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = params(vec![1.0], vec![vec![1.0]], vec![vec![0.0]], vec![vec![vec![1.0]]], vec![]);
        let seq = ObservationSequence::complete(&[vec![0.0, 1.0]], &[]).unwrap();
        assert!(matches!(emission_loglik(&p, 0, &seq, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn indefinite_covariance_names_state() {
        let p = params(
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5]; 2],
            vec![vec![0.0]; 2],
            vec![vec![vec![1.0]], vec![vec![-1.0]]],
            vec![],
        );
        let seq = ObservationSequence::complete(&[vec![0.0]], &[]).unwrap();
        match emission_loglik(&p, 1, &seq, 0) {
            Err(Error::Numerical { state, .. }) => assert_eq!(state, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
