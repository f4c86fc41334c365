use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on probability-vector sums.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// How a slot whose continuous channels are all missing is scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FullyMissingRule {
    /// Substitute the state mean, i.e. score the state's density at its mode.
    #[default]
    MeanSubstitution,
    /// Integrate the missing channels out; they contribute nothing.
    Marginalize,
}

/// Parameters of a heterogeneous HMM with Gaussian continuous channels and
/// categorical discrete channels.
///
/// Layouts: `transitions[i][j] = p(s_{t+1}=j | s_t=i)`, `means[i][m]`,
/// `covariances[i][m][n]`, `disc_probs[channel][i][symbol]` and a matching
/// `frozen[channel][i][symbol]` mask of entries that training never touches.
#[derive(Debug, Clone, PartialEq)]
pub struct HhmmParams {
    pub pi: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub disc_probs: Vec<Vec<Vec<f64>>>,
    pub frozen: Vec<Vec<Vec<bool>>>,
    pub fully_missing: FullyMissingRule,
}

impl HhmmParams {
    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn n_continuous(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn n_discrete(&self) -> usize {
        self.disc_probs.len()
    }

    /// Alphabet size of each discrete channel.
    pub fn n_symbols(&self) -> Vec<usize> {
        self.disc_probs
            .iter()
            .map(|ch| ch.first().map_or(0, Vec::len))
            .collect()
    }

    /// An all-false frozen mask shaped like `disc_probs`.
    pub fn unfrozen_mask(disc_probs: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<bool>>> {
        disc_probs
            .iter()
            .map(|ch| ch.iter().map(|row| vec![false; row.len()]).collect())
            .collect()
    }

    /// Freezes state `state` so that every nonzero symbol of every discrete
    /// channel has probability zero, making it a silent state.
    pub fn freeze_silent_state(&mut self, state: usize) {
        for (probs, frozen) in self.disc_probs.iter_mut().zip(self.frozen.iter_mut()) {
            let row = &mut probs[state];
            row.iter_mut().enumerate().for_each(|(j, p)| *p = if j == 0 { 1.0 } else { 0.0 });
            frozen[state].iter_mut().for_each(|f| *f = true);
        }
    }

    /// States whose discrete rows are entirely frozen on every channel.
    pub fn fully_frozen_states(&self) -> Vec<usize> {
        if self.frozen.is_empty() {
            return Vec::new();
        }
        (0..self.n_states())
            .filter(|&i| self.frozen.iter().all(|ch| ch[i].iter().all(|&f| f)))
            .collect()
    }

    /// Checks shapes, stochasticity and covariance symmetry.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        if n == 0 {
            return Err(Error::invalid("model needs at least one state"));
        }
        check_distribution("pi", &self.pi)?;
        if self.transitions.len() != n {
            return Err(Error::invalid("transition matrix must have one row per state"));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("transition row {i} has wrong length")));
            }
            check_distribution(&format!("transition row {i}"), row)?;
        }
        let mc = self.n_continuous();
        if mc > 64 {
            return Err(Error::invalid("at most 64 continuous channels are supported"));
        }
        if self.means.len() != n || self.covariances.len() != n {
            return Err(Error::invalid("means and covariances need one entry per state"));
        }
        for i in 0..n {
            if self.means[i].len() != mc || self.means[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("bad mean vector for state {i}")));
            }
            let cov = &self.covariances[i];
            if cov.len() != mc || cov.iter().any(|r| r.len() != mc) {
                return Err(Error::invalid(format!("bad covariance shape for state {i}")));
            }
            for a in 0..mc {
                for b in 0..mc {
                    let (x, y) = (cov[a][b], cov[b][a]);
                    if !x.is_finite() || (x - y).abs() > 1e-12 * (1.0 + x.abs()) {
                        return Err(Error::invalid(format!(
                            "covariance of state {i} is not symmetric and finite"
                        )));
                    }
                }
            }
        }
        if self.frozen.len() != self.disc_probs.len() {
            return Err(Error::invalid("frozen mask must cover every discrete channel"));
        }
        for (m, (probs, frozen)) in self.disc_probs.iter().zip(&self.frozen).enumerate() {
            if probs.len() != n || frozen.len() != n {
                return Err(Error::invalid(format!("discrete channel {m} needs one row per state")));
            }
            let j = probs[0].len();
            if !(1..=256).contains(&j) {
                return Err(Error::invalid(format!("discrete channel {m} alphabet size {j}")));
            }
            for i in 0..n {
                if probs[i].len() != j || frozen[i].len() != j {
                    return Err(Error::invalid(format!(
                        "discrete channel {m}, state {i}: inconsistent alphabet"
                    )));
                }
                check_distribution(&format!("discrete channel {m}, state {i}"), &probs[i])?;
            }
        }
        Ok(())
    }

    /// Number of free parameters, as used by BIC/AIC.
    ///
    /// A discrete row contributes one less than its number of unfrozen
    /// entries (never below zero), so a fully frozen binary row is free of
    /// parameters.
    pub fn n_free_params(&self) -> usize {
        let i = self.n_states();
        let mc = self.n_continuous();
        let mut k = (i - 1) + i * (i - 1) + i * mc + i * mc * (mc + 1) / 2;
        for frozen in &self.frozen {
            for row in frozen {
                let free = row.iter().filter(|&&f| !f).count();
                let any_frozen = free < row.len();
                k += if any_frozen { free.saturating_sub(1) } else { row.len() - 1 };
            }
        }
        k
    }
}

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid(format!("{name} is empty")));
    }
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x) || x.is_nan()) {
        return Err(Error::invalid(format!("{name} has entries outside [0, 1]")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::invalid(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}
