//! Baum-Welch over many sequences with frozen discrete entries and missing
//! cells.
//!
//! Missing cells enter the M-step through per-state imputations: a partially
//! observed continuous row uses the conditional Gaussian mean (plus its
//! conditional covariance in the scatter), a fully missing row uses the state
//! mean, and a missing discrete cell counts as the state's most likely symbol.
//! Each of these is a lower bound on the corresponding emission term that is
//! tight at the current parameters, so the log-likelihood never decreases.
//! Covariances are projected onto `Σ ⪰ cov_floor·I`, which keeps the update
//! inside a feasible set that contains the previous iterate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::emission::EmissionModel;
use super::inference::{backward_table, forward_table, log_matrix};
use super::init::{clip_eigenvalues, to_nested};
use super::observation::ObservationSequence;
use super::params::{FullyMissingRule, HhmmParams};
use crate::error::{Error, Result};

/// Total posterior mass below which a state is considered unused.
pub const DEGENERATE_MASS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Stop once the relative log-likelihood improvement drops below this.
    pub rel_tol: f64,
    /// Smallest eigenvalue allowed in any covariance matrix.
    pub cov_floor: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-6,
            cov_floor: 1e-6,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.rel_tol > 0.0) || !(self.cov_floor > 0.0) {
            return Err(Error::invalid("rel_tol and cov_floor must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: HhmmParams,
    /// Log-likelihood of every parameter set visited, starting with the
    /// initial one.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

impl FitOutcome {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }
}

/// Sufficient statistics of one E-step.
#[derive(Debug, Clone)]
struct Stats {
    loglik: f64,
    gamma0: Vec<f64>,
    gamma_sum: Vec<f64>,
    xi_sum: Vec<f64>,
    /// `Σ γ (E[x] − μ_old)` per state
    first: Vec<f64>,
    /// `Σ γ E[(x − μ_old)(x − μ_old)ᵀ]` per state
    second: Vec<f64>,
    /// `[channel][state * J + symbol]`
    counts: Vec<Vec<f64>>,
}

impl Stats {
    fn zeros(n: usize, mc: usize, symbols: &[usize]) -> Self {
        Self {
            loglik: 0.0,
            gamma0: vec![0.0; n],
            gamma_sum: vec![0.0; n],
            xi_sum: vec![0.0; n * n],
            first: vec![0.0; n * mc],
            second: vec![0.0; n * mc * mc],
            counts: symbols.iter().map(|&j| vec![0.0; n * j]).collect(),
        }
    }

    fn add(&mut self, o: &Stats) {
        fn acc(a: &mut [f64], b: &[f64]) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.loglik += o.loglik;
        acc(&mut self.gamma0, &o.gamma0);
        acc(&mut self.gamma_sum, &o.gamma_sum);
        acc(&mut self.xi_sum, &o.xi_sum);
        acc(&mut self.first, &o.first);
        acc(&mut self.second, &o.second);
        for (a, b) in self.counts.iter_mut().zip(&o.counts) {
            acc(a, b);
        }
    }
}

fn e_step(model: &EmissionModel<'_>, log_a: &[f64], seq: &ObservationSequence) -> Result<Stats> {
    let params = model.params;
    let n = params.n_states();
    let mc = params.n_continuous();
    let symbols = params.n_symbols();
    let len = seq.len();
    let emis = model.table(seq);
    let (alpha, ll) = forward_table(&params.pi, log_a, &emis, len);
    if !ll.is_finite() {
        return Err(Error::numerical(None, "sequence has zero or undefined likelihood"));
    }
    let beta = backward_table(log_a, &emis, len, n);
    let mut st = Stats::zeros(n, mc, &symbols);
    st.loglik = ll;

    for t in 0..len.saturating_sub(1) {
        for i in 0..n {
            let a = alpha[t * n + i];
            if a == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..n {
                st.xi_sum[i * n + j] +=
                    (a + log_a[i * n + j] + emis[(t + 1) * n + j] + beta[(t + 1) * n + j] - ll).exp();
            }
        }
    }

    let mut dev = vec![0.0; mc];
    for t in 0..len {
        let pattern = seq.observed_pattern(t);
        let row = seq.continuous_row(t);
        let drow = seq.discrete_row(t);
        let dmask = seq.discrete_mask(t);
        for i in 0..n {
            let g = (alpha[t * n + i] + beta[t * n + i] - ll).exp();
            if g == 0.0 {
                continue;
            }
            st.gamma_sum[i] += g;
            if t == 0 {
                st.gamma0[i] += g;
            }
            if mc > 0 {
                let f = model.factor(pattern, i);
                let mean = &params.means[i];
                let fully_missing = f.observed.is_empty();
                if fully_missing {
                    dev.iter_mut().for_each(|d| *d = 0.0);
                } else {
                    let x = f.complete_row(row, mean);
                    dev.iter_mut().zip(x.iter().zip(mean)).for_each(|(d, (x, m))| *d = x - m);
                }
                let first = &mut st.first[i * mc..(i + 1) * mc];
                first.iter_mut().zip(&dev).for_each(|(a, d)| *a += g * d);
                let second = &mut st.second[i * mc * mc..(i + 1) * mc * mc];
                for a in 0..mc {
                    for b in 0..mc {
                        second[a * mc + b] += g * dev[a] * dev[b];
                    }
                }
                let add_cond = !f.missing.is_empty()
                    && !(fully_missing && params.fully_missing == FullyMissingRule::MeanSubstitution);
                if add_cond {
                    let nm = f.missing.len();
                    for (a, &ma) in f.missing.iter().enumerate() {
                        for (b, &mb) in f.missing.iter().enumerate() {
                            second[ma * mc + mb] += g * f.cond_cov[a * nm + b];
                        }
                    }
                }
            }
            for m in 0..symbols.len() {
                let sym = if dmask[m] { drow[m] as usize } else { model.ml_symbol(m, i) };
                st.counts[m][i * symbols[m] + sym] += g;
            }
        }
    }
    Ok(st)
}

fn expectation(params: &HhmmParams, seqs: &[ObservationSequence]) -> Result<Stats> {
    let model = EmissionModel::new(params, seqs)?;
    let log_a = log_matrix(&params.transitions);
    #[cfg(feature = "parallel")]
    let per_seq: Vec<Result<Stats>> = {
        use rayon::prelude::*;
        seqs.par_iter().map(|s| e_step(&model, &log_a, s)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_seq: Vec<Result<Stats>> = seqs.iter().map(|s| e_step(&model, &log_a, s)).collect();

    // fixed-order reduction
    let mut total = Stats::zeros(params.n_states(), params.n_continuous(), &params.n_symbols());
    for s in per_seq {
        total.add(&s?);
    }
    Ok(total)
}

fn maximization(params: &HhmmParams, st: &Stats, cov_floor: f64) -> Result<HhmmParams> {
    let n = params.n_states();
    let mc = params.n_continuous();
    for (i, &w) in st.gamma_sum.iter().enumerate() {
        if !(w > DEGENERATE_MASS) {
            return Err(Error::DegenerateState { state: i });
        }
    }
    let mut next = params.clone();

    let g0: f64 = st.gamma0.iter().sum();
    next.pi = st.gamma0.iter().map(|g| g / g0).collect();

    for i in 0..n {
        let row = &st.xi_sum[i * n..(i + 1) * n];
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            next.transitions[i] = row.iter().map(|x| x / total).collect();
        }
    }

    for i in 0..n {
        if mc == 0 {
            break;
        }
        let w = st.gamma_sum[i];
        let shift: Vec<f64> = st.first[i * mc..(i + 1) * mc].iter().map(|s| s / w).collect();
        next.means[i] = params.means[i].iter().zip(&shift).map(|(m, d)| m + d).collect();
        let second = &st.second[i * mc * mc..(i + 1) * mc * mc];
        let scatter = DMatrix::from_fn(mc, mc, |a, b| second[a * mc + b] / w - shift[a] * shift[b]);
        let cov = clip_eigenvalues(&scatter, cov_floor);
        next.covariances[i] = to_nested(&cov);
    }

    let symbols = params.n_symbols();
    for (m, &j) in symbols.iter().enumerate() {
        for i in 0..n {
            let counts = &st.counts[m][i * j..(i + 1) * j];
            let frozen = &params.frozen[m][i];
            let old = &params.disc_probs[m][i];
            let frozen_mass: f64 = (0..j).filter(|&k| frozen[k]).map(|k| old[k]).sum();
            let free_count: f64 = (0..j).filter(|&k| !frozen[k]).map(|k| counts[k]).sum();
            if free_count <= 0.0 || frozen.iter().all(|&f| f) {
                continue;
            }
            let free_mass = (1.0 - frozen_mass).max(0.0);
            let row = &mut next.disc_probs[m][i];
            for k in 0..j {
                if !frozen[k] {
                    row[k] = free_mass * counts[k] / free_count;
                }
            }
        }
    }
    Ok(next)
}

/// Baum-Welch from `init` until the relative improvement falls below
/// `config.rel_tol` or `config.max_iters` M-steps have run.
pub fn fit_baum_welch(init: &HhmmParams, seqs: &[ObservationSequence], config: &FitConfig) -> Result<FitOutcome> {
    if seqs.is_empty() {
        return Err(Error::invalid("no training sequences"));
    }
    if seqs.iter().any(ObservationSequence::is_empty) {
        return Err(Error::invalid("training sequence with no slots"));
    }
    config.validate()?;
    init.validate()?;

    let mut params = init.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut stats = expectation(&params, seqs)?;
    trace.push(stats.loglik);
    for _ in 0..config.max_iters {
        params = maximization(&params, &stats, config.cov_floor)?;
        stats = expectation(&params, seqs)?;
        let prev = trace[trace.len() - 1];
        trace.push(stats.loglik);
        let denom = if prev == 0.0 { 1.0 } else { prev.abs() };
        if (stats.loglik - prev) / denom < config.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(FitOutcome {
        params,
        loglik_trace: trace,
        converged,
    })
}

/// Total log-likelihood of a set of sequences.
pub fn total_loglik(params: &HhmmParams, seqs: &[ObservationSequence]) -> Result<f64> {
    params.validate()?;
    let model = EmissionModel::new(params, seqs)?;
    let log_a = log_matrix(&params.transitions);
    let mut total = 0.0;
    for s in seqs {
        if s.is_empty() {
            return Err(Error::invalid("sequence with no slots"));
        }
        let emis = model.table(s);
        total += forward_table(&params.pi, &log_a, &emis, s.len()).1;
    }
    Ok(total)
}
