//! Seeded Gaussian-mixture benchmark sets with a controlled dominant-class
//! fraction per cluster.
//!
//! Cluster `c` holds `round(dominant_fraction · per_cluster)` samples drawn
//! around class centre `c`; the rest are drawn around the other centres in
//! round-robin order, so every cluster's signal/noise counts are exact.
//! Rows are shuffled so row order carries no information.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub num_classes: usize,
    pub per_cluster: usize,
    pub dim: usize,
    pub dominant_fraction: f64,
    pub signal_std: f64,
    pub noise_std: f64,
    pub center_separation: f64,
    pub seed: u64,
}

impl BenchmarkSpec {
    /// K = 5, 200 samples per cluster, D = 16, 70% dominant class.
    ///
    /// Contaminants are 2.5 times as dispersed as the dominant class, so a
    /// cluster is a tight core plus scattered misassignments.
    pub fn standard(seed: u64) -> Self {
        BenchmarkSpec {
            num_classes: 5,
            per_cluster: 200,
            dim: 16,
            dominant_fraction: 0.7,
            signal_std: 1.0,
            noise_std: 2.5,
            center_separation: 4.0,
            seed,
        }
    }

    pub fn signal_count(&self) -> usize {
        (self.dominant_fraction * self.per_cluster as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes;
        if k == 0 {
            return Err(Error::config("num_classes", "must be >= 1"));
        }
        if self.per_cluster == 0 {
            return Err(Error::config("per_cluster", "must be >= 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be >= 1"));
        }
        let f = self.dominant_fraction;
        if !(f > 1.0 / k as f64 && f <= 1.0) && !(k == 1 && f == 1.0) {
            return Err(Error::config(
                "dominant_fraction",
                format!("must be in (1/K, 1], got {f}"),
            ));
        }
        if k == 1 && f < 1.0 {
            return Err(Error::config("dominant_fraction", "a single class admits no contaminants"));
        }
        if f * (self.per_cluster as f64) < 1.0 || self.signal_count() == 0 {
            return Err(Error::config("dominant_fraction", "leaves no signal samples"));
        }
        for (field, v) in [("signal_std", self.signal_std), ("noise_std", self.noise_std)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be > 0, got {v}")));
            }
        }
        if !(self.center_separation >= 0.0 && self.center_separation.is_finite()) {
            return Err(Error::config("center_separation", "must be finite and >= 0"));
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Class centres at pairwise distance >= `separation`.
///
/// With `K <= D` the centres are scaled random orthonormal directions, every
/// pair exactly `separation` apart. Otherwise they are Gaussian draws,
/// rejected until the separation holds.
fn place_centers(rng: &mut ChaCha8Rng, k: usize, dim: usize, separation: f64) -> Result<Vec<Vec<f64>>> {
    if k <= dim {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        while basis.len() < k {
            let mut v = gaussian_vec(rng, dim);
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                basis.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        let scale = separation / std::f64::consts::SQRT_2;
        return Ok(basis
            .into_iter()
            .map(|b| b.into_iter().map(|x| x * scale).collect())
            .collect());
    }

    // Expected pairwise distance of the draws is about 1.5 × separation.
    let scale = 1.5 * separation / (2.0 * dim as f64).sqrt();
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let centers: Vec<Vec<f64>> = (0..k)
            .map(|_| gaussian_vec(rng, dim).into_iter().map(|x| x * scale).collect())
            .collect();
        let ok = (0..k).all(|i| (i + 1..k).all(|j| distance(&centers[i], &centers[j]) >= separation));
        if ok {
            return Ok(centers);
        }
    }
    Err(Error::InfeasibleSeparation {
        k,
        separation,
        attempts: MAX_PLACEMENT_ATTEMPTS,
    })
}

/// A benchmark set whose assignments are the contaminated clusters, plus the
/// generating class of every row.
pub fn generate(spec: &BenchmarkSpec) -> Result<(EmbeddingSet, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.num_classes;
    let centers = place_centers(&mut rng, k, spec.dim, spec.center_separation)?;
    let signal = Normal::new(0.0, spec.signal_std).expect("validated std");
    let noise = Normal::new(0.0, spec.noise_std).expect("validated std");
    let n_signal = spec.signal_count();

    // (cluster, class) per row before shuffling.
    let mut rows: Vec<(usize, usize)> = Vec::with_capacity(k * spec.per_cluster);
    for c in 0..k {
        let others: Vec<usize> = (0..k).filter(|&o| o != c).collect();
        for j in 0..spec.per_cluster {
            let class = if j < n_signal {
                c
            } else {
                others[(j - n_signal) % others.len()]
            };
            rows.push((c, class));
        }
    }
    rows.shuffle(&mut rng);

    let mut features = Vec::with_capacity(rows.len() * spec.dim);
    for &(cluster, class) in &rows {
        let dist = if cluster == class { &signal } else { &noise };
        features.extend(centers[class].iter().map(|&m| m + dist.sample(&mut rng)));
    }
    let assignments = rows.iter().map(|r| r.0).collect();
    let truth = rows.iter().map(|r| r.1).collect();
    Ok((EmbeddingSet::new(features, spec.dim, assignments, k)?, truth))
}
