//! Test-only reference implementations. Nothing here calls into the
//! recursions under test; emission densities are written out by hand.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sleep_hhmm::hhmm::{FullyMissingRule, HhmmParams, ObservationSequence};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dirichlet_ish(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn random_cov(mc: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    match mc {
        0 => vec![],
        1 => vec![vec![0.2 + 1.8 * rng.random::<f64>()]],
        2 => {
            let a = 0.2 + 1.8 * rng.random::<f64>();
            let b = 0.2 + 1.8 * rng.random::<f64>();
            let r = -0.8 + 1.6 * rng.random::<f64>();
            let c = r * (a * b).sqrt();
            vec![vec![a, c], vec![c, b]]
        }
        _ => unimplemented!("oracle handles at most two continuous channels"),
    }
}

/// Random valid parameters with `mc` Gaussian channels and one binary channel.
pub fn random_params(n: usize, mc: usize, rng: &mut ChaCha8Rng) -> HhmmParams {
    let disc_probs = vec![(0..n).map(|_| dirichlet_ish(2, rng)).collect::<Vec<_>>()];
    HhmmParams {
        pi: dirichlet_ish(n, rng),
        transitions: (0..n).map(|_| dirichlet_ish(n, rng)).collect(),
        means: (0..n).map(|_| (0..mc).map(|_| -2.0 + 4.0 * rng.random::<f64>()).collect()).collect(),
        covariances: (0..n).map(|_| random_cov(mc, rng)).collect(),
        frozen: HhmmParams::unfrozen_mask(&disc_probs),
        disc_probs,
        fully_missing: FullyMissingRule::MeanSubstitution,
    }
}

/// Random sequence with cellwise missingness probability `p_missing`.
pub fn random_sequence(len: usize, mc: usize, p_missing: f64, rng: &mut ChaCha8Rng) -> ObservationSequence {
    let cont: Vec<Vec<Option<f64>>> = (0..len)
        .map(|_| {
            (0..mc)
                .map(|_| (rng.random::<f64>() >= p_missing).then(|| -3.0 + 6.0 * rng.random::<f64>()))
                .collect()
        })
        .collect();
    let disc: Vec<Vec<Option<u8>>> = (0..len)
        .map(|_| vec![(rng.random::<f64>() >= p_missing).then(|| rng.random_range(0..2u8))])
        .collect();
    ObservationSequence::from_rows(mc, 1, &cont, &disc).unwrap()
}

/// Hand-written emission density (linear scale) for up to two channels.
pub fn emission(p: &HhmmParams, state: usize, seq: &ObservationSequence, t: usize) -> f64 {
    let mc = p.n_continuous();
    let mu = &p.means[state];
    let s = &p.covariances[state];
    let obs: Vec<usize> = (0..mc).filter(|&m| seq.continuous_value(t, m).is_some()).collect();
    let two_pi = 2.0 * std::f64::consts::PI;
    let cont = match (mc, obs.len()) {
        (0, _) => 1.0,
        (_, 0) => match p.fully_missing {
            FullyMissingRule::Marginalize => 1.0,
            FullyMissingRule::MeanSubstitution => {
                let det = if mc == 1 { s[0][0] } else { s[0][0] * s[1][1] - s[0][1] * s[1][0] };
                (two_pi.powi(mc as i32) * det).powf(-0.5)
            }
        },
        (_, 1) => {
            let m = obs[0];
            let x = seq.continuous_value(t, m).unwrap();
            let v = s[m][m];
            (-(x - mu[m]).powi(2) / (2.0 * v)).exp() / (two_pi * v).sqrt()
        }
        (2, 2) => {
            let dx = seq.continuous_value(t, 0).unwrap() - mu[0];
            let dy = seq.continuous_value(t, 1).unwrap() - mu[1];
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let q = (s[1][1] * dx * dx - 2.0 * s[0][1] * dx * dy + s[0][0] * dy * dy) / det;
            (-0.5 * q).exp() / (two_pi * det.sqrt())
        }
        _ => unreachable!(),
    };
    let mut disc = 1.0;
    for (m, probs) in p.disc_probs.iter().enumerate() {
        let row = &probs[state];
        disc *= match seq.discrete_value(t, m) {
            Some(sym) => row[sym as usize],
            None => row.iter().copied().fold(0.0, f64::max),
        };
    }
    cont * disc
}

/// Every state path of length `len` over `n` states.
pub fn all_paths(n: usize, len: usize) -> Vec<Vec<usize>> {
    let total = n.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let mut path = vec![0; len];
            for slot in path.iter_mut().rev() {
                *slot = code % n;
                code /= n;
            }
            path
        })
        .collect()
}

/// Joint probability of one path (linear scale).
pub fn path_probability(p: &HhmmParams, seq: &ObservationSequence, path: &[usize]) -> f64 {
    let mut prob = p.pi[path[0]] * emission(p, path[0], seq, 0);
    for t in 1..path.len() {
        prob *= p.transitions[path[t - 1]][path[t]] * emission(p, path[t], seq, t);
    }
    prob
}

pub struct Enumeration {
    pub likelihood: f64,
    /// `gamma[t][i]`
    pub gamma: Vec<Vec<f64>>,
    pub best_path: Vec<usize>,
    pub best_prob: f64,
}

pub fn enumerate(p: &HhmmParams, seq: &ObservationSequence) -> Enumeration {
    let n = p.n_states();
    let len = seq.len();
    let mut likelihood = 0.0;
    let mut gamma = vec![vec![0.0; n]; len];
    let mut best_path = vec![0; len];
    let mut best_prob = -1.0;
    for path in all_paths(n, len) {
        let prob = path_probability(p, seq, &path);
        likelihood += prob;
        for (t, &s) in path.iter().enumerate() {
            gamma[t][s] += prob;
        }
        if prob > best_prob {
            best_prob = prob;
            best_path = path;
        }
    }
    for row in &mut gamma {
        row.iter_mut().for_each(|g| *g /= likelihood);
    }
    Enumeration {
        likelihood,
        gamma,
        best_path,
        best_prob,
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()) || (a - b).abs() < 1e-14
}
