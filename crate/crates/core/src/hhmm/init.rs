use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::observation::ObservationSequence;
use super::params::{FullyMissingRule, HhmmParams};
use crate::cluster::kmeans;
use crate::error::{Error, Result};

/// Which discrete emission rows are fixed before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Supervision {
    Unsupervised,
    /// The first `silent_states` states get `p(symbol ≠ 0) = 0` on every
    /// discrete channel.
    SemiSupervised { silent_states: usize },
}

impl Supervision {
    pub fn silent_states(self) -> usize {
        match self {
            Supervision::Unsupervised => 0,
            Supervision::SemiSupervised { silent_states } => silent_states,
        }
    }
}

impl fmt::Display for Supervision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Supervision::Unsupervised => f.write_str("unsupervised"),
            Supervision::SemiSupervised { silent_states } => write!(f, "semi-{silent_states}"),
        }
    }
}

impl FromStr for Supervision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unsupervised" | "un" => Ok(Supervision::Unsupervised),
            _ => s
                .strip_prefix("semi-")
                .and_then(|k| k.parse().ok())
                .filter(|&k: &usize| k > 0)
                .map(|silent_states| Supervision::SemiSupervised { silent_states })
                .ok_or_else(|| Error::invalid(format!("unknown supervision config {s:?}"))),
        }
    }
}

impl TryFrom<String> for Supervision {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Supervision> for String {
    fn from(s: Supervision) -> Self {
        s.to_string()
    }
}

const JITTER: f64 = 0.1;

fn jittered_uniform<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 1.0 + JITTER * rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Projects a symmetric matrix onto `{Σ : Σ ⪰ floor·I}` by clipping
/// eigenvalues.
pub(crate) fn clip_eigenvalues(cov: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    (&out + out.transpose()) * 0.5
}

pub(crate) fn to_nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

/// Seeded starting point for Baum-Welch.
///
/// Means come from k-means++ on the pooled fully observed continuous rows,
/// sorted by the first channel so that silent states start on the quietest
/// clusters. All states share the pooled covariance. `pi`, `A` and free
/// discrete rows are uniform with a small seeded jitter.
pub fn initialize(
    seqs: &[ObservationSequence],
    n_states: usize,
    supervision: Supervision,
    cov_floor: f64,
    seed: u64,
) -> Result<HhmmParams> {
    if seqs.is_empty() {
        return Err(Error::invalid("no training sequences"));
    }
    if n_states == 0 {
        return Err(Error::invalid("n_states must be positive"));
    }
    if supervision.silent_states() > n_states {
        return Err(Error::invalid("more silent states than states"));
    }
    let mc = seqs[0].n_continuous();
    let md = seqs[0].n_discrete();
    if seqs.iter().any(|s| s.n_continuous() != mc || s.n_discrete() != md) {
        return Err(Error::invalid("training sequences disagree on channel counts"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let rows: Vec<Vec<f64>> = seqs
        .iter()
        .flat_map(|s| (0..s.len()).filter(|&t| s.continuous_mask(t).iter().all(|&o| o)).map(|t| s.continuous_row(t).to_vec()))
        .collect();
    let (means, cov) = if mc == 0 {
        (vec![Vec::new(); n_states], DMatrix::zeros(0, 0))
    } else {
        if rows.is_empty() {
            return Err(Error::invalid("no fully observed continuous rows to initialise from"));
        }
        let mut centroids = kmeans(&rows, n_states, 100, &mut rng);
        centroids.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let n = rows.len() as f64;
        let mu: Vec<f64> = (0..mc).map(|m| rows.iter().map(|r| r[m]).sum::<f64>() / n).collect();
        let pooled = DMatrix::from_fn(mc, mc, |a, b| {
            rows.iter().map(|r| (r[a] - mu[a]) * (r[b] - mu[b])).sum::<f64>() / n
        });
        (centroids, clip_eigenvalues(&pooled, cov_floor))
    };

    let mut symbols = vec![2usize; md];
    for s in seqs {
        for t in 0..s.len() {
            for (m, (&v, &o)) in s.discrete_row(t).iter().zip(s.discrete_mask(t)).enumerate() {
                if o {
                    symbols[m] = symbols[m].max(v as usize + 1);
                }
            }
        }
    }

    let pi = jittered_uniform(n_states, &mut rng);
    let transitions = (0..n_states).map(|_| jittered_uniform(n_states, &mut rng)).collect();
    let disc_probs: Vec<Vec<Vec<f64>>> = symbols
        .iter()
        .map(|&j| (0..n_states).map(|_| jittered_uniform(j, &mut rng)).collect())
        .collect();
    let frozen = HhmmParams::unfrozen_mask(&disc_probs);
    let mut params = HhmmParams {
        pi,
        transitions,
        means,
        covariances: vec![to_nested(&cov); n_states],
        disc_probs,
        frozen,
        fully_missing: FullyMissingRule::MeanSubstitution,
    };
    for s in 0..supervision.silent_states() {
        params.freeze_silent_state(s);
    }
    params.validate()?;
    Ok(params)
}
