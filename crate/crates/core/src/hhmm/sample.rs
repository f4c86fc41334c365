use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::observation::ObservationSequence;
use super::params::HhmmParams;
use crate::error::{Error, Result};

fn categorical<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    // rounding slack: last index with positive mass
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Draws from a fitted or hand-built model. See [`sample`].
pub struct Sampler<'a> {
    params: &'a HhmmParams,
    chol: Vec<DMatrix<f64>>,
}

impl<'a> Sampler<'a> {
    pub fn new(params: &'a HhmmParams) -> Result<Self> {
        params.validate()?;
        let mc = params.n_continuous();
        let chol = params
            .covariances
            .iter()
            .enumerate()
            .map(|(i, c)| {
                DMatrix::from_fn(mc, mc, |a, b| c[a][b])
                    .cholesky()
                    .map(|ch| ch.l())
                    .ok_or_else(|| Error::numerical(Some(i), "covariance is not positive definite"))
            })
            .collect::<Result<_>>()?;
        Ok(Self { params, chol })
    }

    pub fn draw<R: Rng>(&self, len: usize, rng: &mut R) -> Result<(ObservationSequence, Vec<usize>)> {
        if len == 0 {
            return Err(Error::invalid("cannot sample an empty sequence"));
        }
        let p = self.params;
        let mc = p.n_continuous();
        let md = p.n_discrete();
        let mut states = Vec::with_capacity(len);
        let mut cont = Vec::with_capacity(len);
        let mut disc = Vec::with_capacity(len);
        let mut s = categorical(&p.pi, rng);
        for t in 0..len {
            if t > 0 {
                s = categorical(&p.transitions[s], rng);
            }
            states.push(s);
            let z: Vec<f64> = (0..mc).map(|_| rng.sample(StandardNormal)).collect();
            let l = &self.chol[s];
            let row: Vec<f64> = (0..mc)
                .map(|a| p.means[s][a] + (0..=a).map(|b| l[(a, b)] * z[b]).sum::<f64>())
                .collect();
            cont.push(row);
            disc.push((0..md).map(|m| categorical(&p.disc_probs[m][s], rng) as u8).collect::<Vec<u8>>());
        }
        let seq = if mc == 0 && md == 0 {
            ObservationSequence::empty(len, 0, 0)
        } else {
            let c: Vec<Vec<Option<f64>>> = cont.into_iter().map(|r| r.into_iter().map(Some).collect()).collect();
            let d: Vec<Vec<Option<u8>>> = disc.into_iter().map(|r| r.into_iter().map(Some).collect()).collect();
            ObservationSequence::from_rows(mc, md, &c, &d)?
        };
        Ok((seq, states))
    }
}

/// Samples a fully observed sequence and its hidden path; deterministic in
/// `seed`.
pub fn sample(params: &HhmmParams, len: usize, seed: u64) -> Result<(ObservationSequence, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Sampler::new(params)?.draw(len, &mut rng)
}

/// `count` sequences drawn from one seeded stream.
pub fn sample_many(
    params: &HhmmParams,
    count: usize,
    len: usize,
    seed: u64,
) -> Result<Vec<(ObservationSequence, Vec<usize>)>> {
    let sampler = Sampler::new(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| sampler.draw(len, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hhmm::params::fixtures::params;

    #[test]
    fn near_degenerate_variance_stays_at_mean() {
        let p = params(vec![1.0], vec![vec![1.0]], vec![vec![5.0]], vec![vec![vec![1e-12]]], vec![]);
        let (seq, _) = sample(&p, 50, 4).unwrap();
        for t in 0..50 {
            assert!((seq.continuous_value(t, 0).unwrap() - 5.0).abs() < 1e-4);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let p = params(
            vec![0.4, 0.6],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![vec![0.0], vec![2.0]],
            vec![vec![vec![1.0]], vec![vec![0.5]]],
            vec![vec![vec![0.7, 0.3], vec![0.1, 0.9]]],
        );
        assert_eq!(sample(&p, 30, 11).unwrap(), sample(&p, 30, 11).unwrap());
        assert_ne!(sample(&p, 30, 11).unwrap().1, sample(&p, 30, 12).unwrap().1);
    }

    #[test]
    fn transition_frequencies_match() {
        let a = vec![vec![0.9, 0.08, 0.02], vec![0.1, 0.7, 0.2], vec![0.3, 0.3, 0.4]];
        let p = params(
            vec![1.0 / 3.0; 3],
            a.clone(),
            vec![vec![0.0]; 3],
            vec![vec![vec![1.0]]; 3],
            vec![],
        );
        let (_, path) = sample(&p, 100_000, 21).unwrap();
        let mut counts = [[0f64; 3]; 3];
        for w in path.windows(2) {
            counts[w[0]][w[1]] += 1.0;
        }
        for i in 0..3 {
            let total: f64 = counts[i].iter().sum();
            for j in 0..3 {
                assert!((counts[i][j] / total - a[i][j]).abs() < 0.01, "A[{i}][{j}]");
            }
        }
    }
}
