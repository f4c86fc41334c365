//! Baseline classifiers that ignore temporal structure.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, nearest};
use crate::error::{Error, Result};
use crate::hhmm::{clip_eigenvalues, log_sum_exp, ObservationSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DummyStrategy {
    Uniform,
    MostFrequent,
}

/// Uniform: a seeded fair coin per slot. Most frequent: the majority label
/// of `train_labels` everywhere, awake on a tie.
pub fn dummy_classifier(strategy: DummyStrategy, train_labels: &[u8], len: usize, seed: u64) -> Result<Vec<u8>> {
    match strategy {
        DummyStrategy::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..len).map(|_| u8::from(rng.random_bool(0.5))).collect())
        }
        DummyStrategy::MostFrequent => {
            if train_labels.is_empty() {
                return Err(Error::invalid("most-frequent dummy needs training labels"));
            }
            let ones = train_labels.iter().filter(|&&x| x == 1).count();
            let label = u8::from(2 * ones > train_labels.len());
            Ok(vec![label; len])
        }
    }
}

/// How missing binary cells are filled before clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryImpute {
    Zeros,
    /// Most frequent observed value in the sequence; 0 on a tie.
    MostFrequent,
}

/// Turns sequences into complete per-slot feature rows (continuous channels
/// then discrete ones).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImputer {
    pub binary: BinaryImpute,
    /// Pooled training mean per continuous channel, used when a sequence has
    /// no observed cell on that channel.
    pub fallback_means: Vec<f64>,
}

impl FeatureImputer {
    pub fn fit(seqs: &[ObservationSequence], binary: BinaryImpute) -> Result<Self> {
        let first = seqs.first().ok_or_else(|| Error::invalid("no training sequences"))?;
        let mc = first.n_continuous();
        let mut sums = vec![(0.0, 0usize); mc];
        for s in seqs {
            for (m, acc) in sums.iter_mut().enumerate() {
                for v in s.continuous_channel(m).into_iter().flatten() {
                    acc.0 += v;
                    acc.1 += 1;
                }
            }
        }
        let fallback_means = sums
            .iter()
            .enumerate()
            .map(|(m, &(s, n))| {
                if n == 0 {
                    Err(Error::invalid(format!("continuous channel {m} is never observed in training")))
                } else {
                    Ok(s / n as f64)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { binary, fallback_means })
    }

    pub fn features(&self, seq: &ObservationSequence) -> Result<Vec<Vec<f64>>> {
        if seq.observed_cells() == 0 {
            return Err(Error::invalid("sequence has no observed cells"));
        }
        let mc = seq.n_continuous();
        if mc != self.fallback_means.len() {
            return Err(Error::invalid("sequence channel count differs from training"));
        }
        let fills: Vec<f64> = (0..mc)
            .map(|m| {
                let obs: Vec<f64> = seq.continuous_channel(m).into_iter().flatten().collect();
                if obs.is_empty() {
                    self.fallback_means[m]
                } else {
                    obs.iter().sum::<f64>() / obs.len() as f64
                }
            })
            .collect();
        let dfills: Vec<f64> = (0..seq.n_discrete())
            .map(|m| match self.binary {
                BinaryImpute::Zeros => 0.0,
                BinaryImpute::MostFrequent => {
                    let ch = seq.discrete_channel(m);
                    let ones = ch.iter().filter(|v| **v == Some(1)).count();
                    let zeros = ch.iter().filter(|v| **v == Some(0)).count();
                    if ones > zeros {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
            .collect();
        Ok((0..seq.len())
            .map(|t| {
                let c = (0..mc).map(|m| seq.continuous_value(t, m).unwrap_or(fills[m]));
                let d = (0..seq.n_discrete()).map(|m| seq.discrete_value(t, m).map_or(dfills[m], f64::from));
                c.chain(d).collect()
            })
            .collect())
    }

    fn pooled(&self, seqs: &[ObservationSequence]) -> Result<Vec<Vec<f64>>> {
        let mut rows = Vec::new();
        for s in seqs {
            rows.extend(self.features(s)?);
        }
        Ok(rows)
    }
}

/// Index of the asleep cluster: lowest first feature (actigraphy), then
/// lowest last feature (usage).
fn asleep_cluster(means: &[Vec<f64>]) -> usize {
    let key = |c: &Vec<f64>| (c[0], *c.last().expect("non-empty feature row"));
    (0..means.len())
        .min_by(|&a, &b| {
            let (ka, kb) = (key(&means[a]), key(&means[b]));
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        })
        .expect("at least one cluster")
}

/// 2-means on imputed feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansClassifier {
    pub imputer: FeatureImputer,
    pub centroids: Vec<Vec<f64>>,
    pub asleep: usize,
}

impl KMeansClassifier {
    pub fn fit(seqs: &[ObservationSequence], binary: BinaryImpute, seed: u64) -> Result<Self> {
        let imputer = FeatureImputer::fit(seqs, binary)?;
        let rows = imputer.pooled(seqs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centroids = kmeans(&rows, 2, 300, &mut rng);
        let asleep = asleep_cluster(&centroids);
        Ok(Self {
            imputer,
            centroids,
            asleep,
        })
    }

    pub fn predict(&self, seq: &ObservationSequence) -> Result<Vec<u8>> {
        Ok(self
            .imputer
            .features(seq)?
            .iter()
            .map(|r| u8::from(nearest(r, &self.centroids) == self.asleep))
            .collect())
    }
}

const GMM_COV_FLOOR: f64 = 1e-6;
const GMM_MAX_ITERS: usize = 300;
const GMM_REL_TOL: f64 = 1e-8;

/// Two-component full-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmClassifier {
    pub imputer: FeatureImputer,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub asleep: usize,
}

struct Component {
    log_weight: f64,
    mean: DVector<f64>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical(None, "mixture covariance is not positive definite"))?;
        let l = chol.l();
        let log_det = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        Ok(Self {
            log_weight: weight.ln(),
            mean: DVector::from_column_slice(mean),
            chol_l: l,
            log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
        })
    }

    fn log_joint(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mean;
        let y = self
            .chol_l
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        self.log_weight + self.log_norm - 0.5 * y.norm_squared()
    }
}

fn log_resp(components: &[Component], x: &[f64]) -> (Vec<f64>, f64) {
    let lj: Vec<f64> = components.iter().map(|c| c.log_joint(x)).collect();
    let total = log_sum_exp(&lj);
    (lj.iter().map(|v| v - total).collect(), total)
}

impl GmmClassifier {
    pub fn fit(seqs: &[ObservationSequence], binary: BinaryImpute, seed: u64) -> Result<Self> {
        let imputer = FeatureImputer::fit(seqs, binary)?;
        let rows = imputer.pooled(seqs)?;
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut means = kmeans(&rows, 2, 300, &mut rng);
        let mu: Vec<f64> = (0..d).map(|a| rows.iter().map(|r| r[a]).sum::<f64>() / n).collect();
        let pooled = DMatrix::from_fn(d, d, |a, b| rows.iter().map(|r| (r[a] - mu[a]) * (r[b] - mu[b])).sum::<f64>() / n);
        let pooled = clip_eigenvalues(&pooled, GMM_COV_FLOOR);
        let mut covs = vec![pooled.clone(); 2];
        let mut weights = vec![0.5; 2];

        let mut prev = f64::NEG_INFINITY;
        for _ in 0..GMM_MAX_ITERS {
            let comps: Vec<Component> = (0..2)
                .map(|k| Component::new(weights[k], &means[k], &covs[k]))
                .collect::<Result<_>>()?;
            let mut resp = Vec::with_capacity(rows.len());
            let mut ll = 0.0;
            for r in &rows {
                let (lr, total) = log_resp(&comps, r);
                ll += total;
                resp.push(lr.into_iter().map(f64::exp).collect::<Vec<f64>>());
            }
            if !ll.is_finite() {
                return Err(Error::numerical(None, "mixture log-likelihood is not finite"));
            }
            for k in 0..2 {
                let nk: f64 = resp.iter().map(|g| g[k]).sum();
                if nk < 1e-10 {
                    continue;
                }
                weights[k] = nk / n;
                let m: Vec<f64> = (0..d)
                    .map(|a| rows.iter().zip(&resp).map(|(r, g)| g[k] * r[a]).sum::<f64>() / nk)
                    .collect();
                let c = DMatrix::from_fn(d, d, |a, b| {
                    rows.iter().zip(&resp).map(|(r, g)| g[k] * (r[a] - m[a]) * (r[b] - m[b])).sum::<f64>() / nk
                });
                covs[k] = clip_eigenvalues(&c, GMM_COV_FLOOR);
                means[k] = m;
            }
            let wsum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= wsum);
            if prev.is_finite() && (ll - prev).abs() <= GMM_REL_TOL * prev.abs() {
                break;
            }
            prev = ll;
        }
        let asleep = asleep_cluster(&means);
        Ok(Self {
            imputer,
            weights,
            means,
            covariances: covs
                .iter()
                .map(|c| (0..d).map(|a| (0..d).map(|b| c[(a, b)]).collect()).collect())
                .collect(),
            asleep,
        })
    }

    fn components(&self) -> Result<Vec<Component>> {
        let d = self.means[0].len();
        (0..self.weights.len())
            .map(|k| {
                let cov = DMatrix::from_fn(d, d, |a, b| self.covariances[k][a][b]);
                Component::new(self.weights[k], &self.means[k], &cov)
            })
            .collect()
    }

    /// Posterior component probabilities per slot.
    pub fn responsibilities(&self, seq: &ObservationSequence) -> Result<Vec<Vec<f64>>> {
        let comps = self.components()?;
        Ok(self
            .imputer
            .features(seq)?
            .iter()
            .map(|r| log_resp(&comps, r).0.into_iter().map(f64::exp).collect())
            .collect())
    }

    pub fn predict(&self, seq: &ObservationSequence) -> Result<Vec<u8>> {
        Ok(self
            .responsibilities(seq)?
            .iter()
            .map(|g| {
                let best = if g[1] > g[0] { 1 } else { 0 };
                u8::from(best == self.asleep)
            })
            .collect())
    }
}
