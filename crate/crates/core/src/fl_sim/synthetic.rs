//! Seeded linear-regression data and IID partitioning into silo shards.
//!
//! All randomness comes from `Pcg64` seeded with `seed_from_u64`, so a
//! dataset is a pure function of its spec.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Salt mixed into the seed of the held-out evaluation set.
const HOLDOUT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const WEIGHTS_SALT: u64 = 0xc2b2_ae3d_27d4_eb4f;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub n_samples: usize,
    pub n_features: usize,
    pub true_weights: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticDataset {
    pub const DEFAULT_SAMPLES: usize = 600;
    pub const DEFAULT_FEATURES: usize = 8;
    pub const DEFAULT_NOISE_STD: f64 = 0.1;

    /// The dataset used by the CLI: 600 samples, 8 features, noise 0.1,
    /// ground-truth weights drawn from the seed.
    pub fn standard(seed: u64) -> Self {
        Self::with_random_weights(
            Self::DEFAULT_SAMPLES,
            Self::DEFAULT_FEATURES,
            Self::DEFAULT_NOISE_STD,
            seed,
        )
    }

    pub fn with_random_weights(
        n_samples: usize,
        n_features: usize,
        noise_std: f64,
        seed: u64,
    ) -> Self {
        let mut rng = Pcg64::seed_from_u64(seed ^ WEIGHTS_SALT);
        let true_weights = (0..n_features)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Self {
            n_samples,
            n_features,
            true_weights,
            noise_std,
            seed,
        }
    }

    /// Same distribution, independent draw: used to measure eval loss.
    pub fn holdout(&self) -> Self {
        Self {
            seed: self.seed ^ HOLDOUT_SALT,
            ..self.clone()
        }
    }
}

/// Row-major design matrix plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    n_features: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl Samples {
    pub fn new(n_features: usize, features: Vec<f64>, targets: Vec<f64>) -> Self {
        assert_eq!(
            features.len(),
            n_features * targets.len(),
            "features must be n x d"
        );
        Self {
            n_features,
            features,
            targets,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn subset(&self, indices: &[usize]) -> Samples {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Samples::new(self.n_features, features, targets)
    }

    /// Contiguous rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Samples {
        Samples::new(
            self.n_features,
            self.features[start * self.n_features..end * self.n_features].to_vec(),
            self.targets[start..end].to_vec(),
        )
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Features ~ N(0, 1); target = features . true_weights + noise_std * N(0, 1).
pub fn generate_synthetic(spec: &SyntheticDataset) -> Result<Samples, SimError> {
    if spec.n_samples == 0 || spec.n_features == 0 {
        return Err(SimError::Dataset(
            "n_samples and n_features must be >= 1".into(),
        ));
    }
    if spec.true_weights.len() != spec.n_features {
        return Err(SimError::Dataset(format!(
            "{} true weights for {} features",
            spec.true_weights.len(),
            spec.n_features
        )));
    }
    if !(spec.noise_std.is_finite() && spec.noise_std >= 0.0) {
        return Err(SimError::Dataset(format!(
            "noise_std {} must be >= 0",
            spec.noise_std
        )));
    }
    let mut rng = Pcg64::seed_from_u64(spec.seed);
    let mut features = Vec::with_capacity(spec.n_samples * spec.n_features);
    let mut targets = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let start = features.len();
        features.extend((0..spec.n_features).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let noise: f64 = rng.sample(StandardNormal);
        targets.push(dot(&features[start..], &spec.true_weights) + spec.noise_std * noise);
    }
    Ok(Samples::new(spec.n_features, features, targets))
}

/// Shard sizes: `round(share * n)` (ties to even) for every shard but the
/// last, which takes the remainder.
pub fn shard_sizes(n: usize, shares: &[f64]) -> Result<Vec<usize>, SimError> {
    if shares.is_empty() {
        return Err(SimError::Partition("no shares given".into()));
    }
    if shares.len() > n {
        return Err(SimError::Partition(format!(
            "{} shares for only {n} samples",
            shares.len()
        )));
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || shares.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
        return Err(SimError::Partition(format!(
            "shares must be in (0, 1] and sum to 1, got {shares:?}"
        )));
    }
    let mut sizes: Vec<usize> = shares[..shares.len() - 1]
        .iter()
        .map(|s| (s * n as f64).round_ties_even() as usize)
        .collect();
    let assigned: usize = sizes.iter().sum();
    if assigned >= n {
        return Err(SimError::Partition(format!(
            "rounding leaves no samples for the last of {} shards",
            shares.len()
        )));
    }
    sizes.push(n - assigned);
    if let Some(k) = sizes.iter().position(|&s| s == 0) {
        return Err(SimError::Partition(format!(
            "shard {k} would be empty with {n} samples"
        )));
    }
    Ok(sizes)
}

/// Disjoint index sets covering `0..n`. Indices are shuffled with the seed,
/// cut into shards, then sorted so each shard keeps the original row order.
pub fn partition_indices(n: usize, shares: &[f64], seed: u64) -> Result<Vec<Vec<usize>>, SimError> {
    let sizes = shard_sizes(n, shares)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut Pcg64::seed_from_u64(seed));
    let mut rest = order.as_slice();
    Ok(sizes
        .into_iter()
        .map(|size| {
            let (head, tail) = rest.split_at(size);
            rest = tail;
            let mut shard = head.to_vec();
            shard.sort_unstable();
            shard
        })
        .collect())
}

pub fn partition_iid(
    samples: &Samples,
    shares: &[f64],
    seed: u64,
) -> Result<Vec<Samples>, SimError> {
    Ok(partition_indices(samples.len(), shares, seed)?
        .iter()
        .map(|idx| samples.subset(idx))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Solves `a x = b` by Gaussian elimination with partial pivoting.
    fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                let (upper, lower) = a.split_at_mut(row);
                for (x, p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *x -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        x
    }

    #[test]
    fn zero_noise_targets_are_exact() {
        let spec = SyntheticDataset::with_random_weights(50, 4, 0.0, 3);
        let s = generate_synthetic(&spec).unwrap();
        for i in 0..s.len() {
            assert_eq!(s.target(i), dot(s.row(i), &spec.true_weights));
        }
    }

    #[test]
    fn same_spec_gives_identical_samples() {
        let spec = SyntheticDataset::standard(11);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&spec.holdout()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ols_recovers_true_weights_within_three_standard_errors() {
        let (n, d) = (1000, 10);
        let spec = SyntheticDataset::with_random_weights(n, d, 0.5, 7);
        let s = generate_synthetic(&spec).unwrap();
        let mut xtx = vec![vec![0.0; d]; d];
        let mut xty = vec![0.0; d];
        for i in 0..n {
            let row = s.row(i);
            for a in 0..d {
                xty[a] += row[a] * s.target(i);
                for b in 0..d {
                    xtx[a][b] += row[a] * row[b];
                }
            }
        }
        let beta = solve(xtx.clone(), xty);
        let rss: f64 = (0..n)
            .map(|i| (s.target(i) - dot(s.row(i), &beta)).powi(2))
            .sum();
        let sigma2 = rss / (n - d) as f64;
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            let inv_jj = solve(xtx.clone(), e)[j];
            let se = (sigma2 * inv_jj).sqrt();
            assert!(
                (beta[j] - spec.true_weights[j]).abs() <= 3.0 * se,
                "weight {j}: {} vs {} (se {se})",
                beta[j],
                spec.true_weights[j]
            );
        }
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(generate_synthetic(&SyntheticDataset::with_random_weights(0, 3, 0.1, 1)).is_err());
        let mut spec = SyntheticDataset::standard(1);
        spec.true_weights.pop();
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn partition_examples() {
        let spec = SyntheticDataset::with_random_weights(100, 2, 0.1, 5);
        let s = generate_synthetic(&spec).unwrap();
        let one = partition_iid(&s, &[1.0], 9).unwrap();
        assert_eq!(one, vec![s.clone()]);
        let halves: Vec<usize> = partition_iid(&s, &[0.5, 0.5], 9)
            .unwrap()
            .iter()
            .map(Samples::len)
            .collect();
        assert_eq!(halves, vec![50, 50]);
        assert_eq!(shard_sizes(101, &[0.5, 0.5]).unwrap(), vec![50, 51]);
        assert!(shard_sizes(2, &[0.25, 0.25, 0.5]).is_err());
        assert!(shard_sizes(3, &[0.1, 0.1, 0.8]).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_and_covering(n in 1usize..500, k in 1usize..8, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let shares = vec![1.0 / k as f64; k];
            if let Ok(shards) = partition_indices(n, &shares, seed) {
                let mut all: Vec<usize> = shards.iter().flatten().copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert!(shards.iter().all(|s| s.windows(2).all(|w| w[0] < w[1])));
                let sizes: Vec<usize> = shards.iter().map(Vec::len).collect();
                prop_assert_eq!(sizes, shard_sizes(n, &shares).unwrap());
            }
        }
    }
}
