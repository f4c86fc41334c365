//! Log-space forward-backward and Viterbi decoding.

use serde::{Deserialize, Serialize};

use super::emission::EmissionModel;
use super::observation::ObservationSequence;
use super::params::HhmmParams;
use crate::error::{Error, Result};

/// Numerically stable `ln Σ exp(x)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Forward-backward output for one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTables {
    pub log_alpha: Vec<Vec<f64>>,
    pub log_beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    /// `xi[t][i][j] = p(s_t = i, s_{t+1} = j | Y, L)` for `t < T-1`.
    pub xi: Vec<Vec<Vec<f64>>>,
    pub loglik: f64,
}

pub(crate) fn log_matrix(m: &[Vec<f64>]) -> Vec<f64> {
    m.iter().flat_map(|r| r.iter().map(|p| p.ln())).collect()
}

fn prepare<'a>(params: &'a HhmmParams, seq: &ObservationSequence) -> Result<EmissionModel<'a>> {
    if seq.is_empty() {
        return Err(Error::invalid("observation sequence is empty"));
    }
    params.validate()?;
    EmissionModel::new(params, [seq])
}

/// Forward pass over a precomputed `T × I` emission table.
pub(crate) fn forward_table(pi: &[f64], log_a: &[f64], emis: &[f64], len: usize) -> (Vec<f64>, f64) {
    let n = pi.len();
    let mut alpha = vec![0.0; len * n];
    for i in 0..n {
        alpha[i] = pi[i].ln() + emis[i];
    }
    let mut buf = vec![0.0; n];
    for t in 1..len {
        let (prev, cur) = alpha.split_at_mut(t * n);
        let prev = &prev[(t - 1) * n..];
        for j in 0..n {
            for i in 0..n {
                buf[i] = prev[i] + log_a[i * n + j];
            }
            cur[j] = log_sum_exp(&buf) + emis[t * n + j];
        }
    }
    let ll = log_sum_exp(&alpha[(len - 1) * n..]);
    (alpha, ll)
}

pub(crate) fn backward_table(log_a: &[f64], emis: &[f64], len: usize, n: usize) -> Vec<f64> {
    let mut beta = vec![0.0; len * n];
    let mut buf = vec![0.0; n];
    for t in (0..len.saturating_sub(1)).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * n);
        let cur = &mut cur[t * n..];
        for i in 0..n {
            for j in 0..n {
                buf[j] = log_a[i * n + j] + emis[(t + 1) * n + j] + next[j];
            }
            cur[i] = log_sum_exp(&buf);
        }
    }
    beta
}

fn unflatten(v: &[f64], n: usize) -> Vec<Vec<f64>> {
    v.chunks(n).map(<[f64]>::to_vec).collect()
}

fn check_loglik(ll: f64) -> Result<()> {
    if ll.is_nan() {
        return Err(Error::numerical(None, "log-likelihood is NaN"));
    }
    if ll == f64::NEG_INFINITY {
        return Err(Error::numerical(None, "observation sequence has zero probability under the model"));
    }
    Ok(())
}

/// `log α` table and `log p(Y, L | θ)`.
pub fn log_forward(params: &HhmmParams, seq: &ObservationSequence) -> Result<(Vec<Vec<f64>>, f64)> {
    let model = prepare(params, seq)?;
    let emis = model.table(seq);
    let (alpha, ll) = forward_table(&params.pi, &log_matrix(&params.transitions), &emis, seq.len());
    check_loglik(ll)?;
    Ok((unflatten(&alpha, params.n_states()), ll))
}

/// `log β` table; the last row is all zeros.
pub fn log_backward(params: &HhmmParams, seq: &ObservationSequence) -> Result<Vec<Vec<f64>>> {
    let model = prepare(params, seq)?;
    let emis = model.table(seq);
    let n = params.n_states();
    let beta = backward_table(&log_matrix(&params.transitions), &emis, seq.len(), n);
    Ok(unflatten(&beta, n))
}

/// Full posterior tables for one sequence.
pub fn posteriors(params: &HhmmParams, seq: &ObservationSequence) -> Result<PosteriorTables> {
    let model = prepare(params, seq)?;
    let emis = model.table(seq);
    let n = params.n_states();
    let len = seq.len();
    let log_a = log_matrix(&params.transitions);
    let (alpha, ll) = forward_table(&params.pi, &log_a, &emis, len);
    check_loglik(ll)?;
    let beta = backward_table(&log_a, &emis, len, n);

    let gamma = (0..len)
        .map(|t| (0..n).map(|i| (alpha[t * n + i] + beta[t * n + i] - ll).exp()).collect())
        .collect();
    let xi = (0..len.saturating_sub(1))
        .map(|t| {
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            (alpha[t * n + i] + log_a[i * n + j] + emis[(t + 1) * n + j] + beta[(t + 1) * n + j]
                                - ll)
                                .exp()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(PosteriorTables {
        log_alpha: unflatten(&alpha, n),
        log_beta: unflatten(&beta, n),
        gamma,
        xi,
        loglik: ll,
    })
}

pub(crate) fn viterbi_table(pi: &[f64], log_a: &[f64], emis: &[f64], len: usize) -> (Vec<usize>, f64) {
    let n = pi.len();
    let mut delta: Vec<f64> = (0..n).map(|i| pi[i].ln() + emis[i]).collect();
    let mut next = vec![0.0; n];
    let mut back = vec![0usize; len * n];
    for t in 1..len {
        for j in 0..n {
            let mut best = 0;
            let mut best_score = delta[0] + log_a[j];
            for i in 1..n {
                let s = delta[i] + log_a[i * n + j];
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            back[t * n + j] = best;
            next[j] = best_score + emis[t * n + j];
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    for i in 1..n {
        if delta[i] > delta[last] {
            last = i;
        }
    }
    let score = delta[last];
    let mut path = vec![0usize; len];
    path[len - 1] = last;
    for t in (1..len).rev() {
        path[t - 1] = back[t * n + path[t]];
    }
    (path, score)
}

/// Most probable state path and its joint log-probability. Ties resolve to
/// the lowest state index.
pub fn viterbi_with_score(params: &HhmmParams, seq: &ObservationSequence) -> Result<(Vec<usize>, f64)> {
    let model = prepare(params, seq)?;
    let emis = model.table(seq);
    let (path, score) = viterbi_table(&params.pi, &log_matrix(&params.transitions), &emis, seq.len());
    check_loglik(score)?;
    Ok((path, score))
}

pub fn viterbi(params: &HhmmParams, seq: &ObservationSequence) -> Result<Vec<usize>> {
    viterbi_with_score(params, seq).map(|(p, _)| p)
}

/// Joint log-probability `log p(S, Y, L | θ)` of a given state path.
pub fn path_log_score(params: &HhmmParams, seq: &ObservationSequence, path: &[usize]) -> Result<f64> {
    if path.len() != seq.len() {
        return Err(Error::invalid("path length differs from sequence length"));
    }
    let model = prepare(params, seq)?;
    let n = params.n_states();
    if path.iter().any(|&s| s >= n) {
        return Err(Error::invalid("path visits a state outside the model"));
    }
    let mut score = params.pi[path[0]].ln() + model.slot(seq, 0, path[0]);
    for t in 1..path.len() {
        score += params.transitions[path[t - 1]][path[t]].ln() + model.slot(seq, t, path[t]);
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hhmm::emission::emission_loglik;
    use crate::hhmm::params::fixtures::params;
    use approx::assert_abs_diff_eq;

    fn one_state() -> HhmmParams {
        params(
            vec![1.0],
            vec![vec![1.0]],
            vec![vec![0.2]],
            vec![vec![vec![0.5]]],
            vec![vec![vec![0.6, 0.4]]],
        )
    }

    fn short_seq() -> ObservationSequence {
        ObservationSequence::from_rows(
            1,
            1,
            &[vec![Some(0.1)], vec![None], vec![Some(0.9)], vec![Some(-0.3)]],
            &[vec![Some(1)], vec![Some(0)], vec![None], vec![Some(1)]],
        )
        .unwrap()
    }

    #[test]
    fn single_state_forward_is_sum_of_emissions() {
        let p = one_state();
        let seq = short_seq();
        let (_, ll) = log_forward(&p, &seq).unwrap();
        let total: f64 = (0..seq.len()).map(|t| emission_loglik(&p, 0, &seq, t).unwrap()).sum();
        assert_abs_diff_eq!(ll, total, epsilon = 1e-12);
    }

    #[test]
    fn single_state_backward_is_suffix_sum() {
        let p = one_state();
        let seq = short_seq();
        let beta = log_backward(&p, &seq).unwrap();
        for t in 0..seq.len() {
            let tail: f64 = (t + 1..seq.len()).map(|u| emission_loglik(&p, 0, &seq, u).unwrap()).sum();
            assert_abs_diff_eq!(beta[t][0], tail, epsilon = 1e-12);
        }
        assert_eq!(beta[seq.len() - 1], vec![0.0]);
    }

    #[test]
    fn single_state_gamma_is_one_and_path_zero() {
        let p = one_state();
        let seq = short_seq();
        let post = posteriors(&p, &seq).unwrap();
        for row in &post.gamma {
            assert_abs_diff_eq!(row[0], 1.0, epsilon = 1e-12);
        }
        assert_eq!(viterbi(&p, &seq).unwrap(), vec![0; 4]);
    }

    #[test]
    fn symmetric_states_split_evenly() {
        let p = params(
            vec![0.5, 0.5],
            vec![vec![0.7, 0.3], vec![0.3, 0.7]],
            vec![vec![0.0], vec![0.0]],
            vec![vec![vec![1.0]], vec![vec![1.0]]],
            vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
        );
        let post = posteriors(&p, &short_seq()).unwrap();
        for row in &post.gamma {
            assert_abs_diff_eq!(row[0], 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(row[1], 0.5, epsilon = 1e-12);
        }
        // identical states: tie-break picks state 0 everywhere
        assert_eq!(viterbi(&p, &short_seq()).unwrap(), vec![0; 4]);
    }

    #[test]
    fn empty_sequence_is_invalid() {
        let seq = ObservationSequence::empty(0, 1, 1);
        assert!(matches!(log_forward(&one_state(), &seq), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn log_sum_exp_handles_neg_infinity() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_abs_diff_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
        assert_abs_diff_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-9);
    }
}
