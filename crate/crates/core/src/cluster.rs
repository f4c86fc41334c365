//! k-means with k-means++ seeding, shared by model initialisation and the
//! clustering baselines.

use rand::Rng;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties).
pub fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. `rows` must be nonempty.
///
/// Empty clusters keep their previous centroid.
pub fn kmeans<R: Rng>(rows: &[Vec<f64>], k: usize, max_iters: usize, rng: &mut R) -> Vec<Vec<f64>> {
    assert!(!rows.is_empty() && k > 0);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(rows[rng.random_range(0..rows.len())].clone());
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = rows.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..rows.len())
        };
        centroids.push(rows[pick].clone());
        let c = centroids.last().unwrap();
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, c));
        }
    }

    let dim = rows[0].len();
    let mut assign = vec![usize::MAX; rows.len()];
    for _ in 0..max_iters {
        let mut changed = false;
        for (a, r) in assign.iter_mut().zip(rows) {
            let n = nearest(r, &centroids);
            if *a != n {
                *a = n;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, r) in assign.iter().zip(rows) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(r) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separates_two_blobs() {
        let mut rows = Vec::new();
        for i in 0..50 {
            let e = (i % 5) as f64 * 0.01;
            rows.push(vec![0.0 + e, 0.0 - e]);
            rows.push(vec![10.0 - e, 10.0 + e]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = kmeans(&rows, 2, 100, &mut rng);
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((c[0][0] - 0.02).abs() < 1e-9);
        assert!((c[1][0] - 9.98).abs() < 1e-9);
    }
}
