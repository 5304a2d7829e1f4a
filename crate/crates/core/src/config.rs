//! Ranking configuration and the neighbour-count sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guards `floor`/`round` against products such as `(2/3)·30` landing a hair
/// below an integer.
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`.
    Cosine,
}

impl std::str::FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Distance::Euclidean),
            "cosine" => Ok(Distance::Cosine),
            other => Err(Error::config("metric", format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingConfig {
    /// Smallest `k` as a fraction of the cluster size.
    pub k0_fraction: f64,
    /// Stride between consecutive `k` values.
    pub k_step: usize,
    /// Upper bound on `k` as a fraction of the cluster size.
    pub kmax_fraction: f64,
    /// Number of confidence groups.
    pub m: usize,
    /// Cumulative window fractions `p_1 < ... < p_m`.
    pub p_fractions: Vec<f64>,
    /// Added to every `p_j` once per completed epoch block.
    pub p_increment_per_epoch_block: f64,
    pub epoch_block: usize,
    pub distance: Distance,
    /// L2-normalise features before computing distances.
    pub normalize_features: bool,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            k0_fraction: 1.0 / 3.0,
            k_step: 5,
            kmax_fraction: 2.0 / 3.0,
            m: 5,
            p_fractions: vec![0.15, 0.35, 0.55, 0.75, 0.95],
            p_increment_per_epoch_block: 0.01,
            epoch_block: 50,
            distance: Distance::Euclidean,
            normalize_features: false,
        }
    }
}

impl RankingConfig {
    pub fn validate(&self) -> Result<()> {
        let k0 = self.k0_fraction;
        let kmax = self.kmax_fraction;
        if !(k0 > 0.0 && k0 < kmax) {
            return Err(Error::config(
                "k0_fraction",
                format!("must satisfy 0 < k0_fraction < kmax_fraction, got {k0} / {kmax}"),
            ));
        }
        if !(kmax <= 1.0) {
            return Err(Error::config("kmax_fraction", format!("must be <= 1, got {kmax}")));
        }
        if self.k_step == 0 {
            return Err(Error::config("k_step", "must be >= 1"));
        }
        if self.m == 0 {
            return Err(Error::config("m", "must be >= 1"));
        }
        if self.p_fractions.len() != self.m {
            return Err(Error::config(
                "p_fractions",
                format!("expected {} values (one per group), got {}", self.m, self.p_fractions.len()),
            ));
        }
        for (j, &p) in self.p_fractions.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::config("p_fractions", format!("p_{} = {p} not in (0, 1]", j + 1)));
            }
            if j > 0 && p <= self.p_fractions[j - 1] {
                return Err(Error::config("p_fractions", "values must be strictly increasing"));
            }
        }
        let inc = self.p_increment_per_epoch_block;
        if !(inc >= 0.0 && inc.is_finite()) {
            return Err(Error::config(
                "p_increment_per_epoch_block",
                format!("must be a finite value >= 0, got {inc}"),
            ));
        }
        if self.epoch_block == 0 {
            return Err(Error::config("epoch_block", "must be >= 1"));
        }
        Ok(())
    }

    /// `p_j` at `epoch`, raised by one increment per completed epoch block and
    /// clamped to 1.
    pub fn p_fractions_at(&self, epoch: usize) -> Vec<f64> {
        let blocks = (epoch / self.epoch_block.max(1)) as f64;
        self.p_fractions
            .iter()
            .map(|&p| (p + blocks * self.p_increment_per_epoch_block).min(1.0))
            .collect()
    }

    /// Cumulative sample counts `round(p_j · n)` at `epoch`.
    pub fn p_targets(&self, cluster_size: usize, epoch: usize) -> Vec<usize> {
        self.p_fractions_at(epoch)
            .into_iter()
            .map(|p| target_count(p, cluster_size))
            .collect()
    }
}

/// `round(p · n)`, halves rounded up, capped at `n`.
pub fn target_count(p: f64, n: usize) -> usize {
    let t = (p * n as f64 + 0.5 + ROUNDING_SLACK).floor();
    (t.max(0.0) as usize).min(n)
}

fn floor_fraction(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + ROUNDING_SLACK).floor().max(0.0) as usize
}

/// The ascending neighbour counts `k_0, k_0 + step, ...` for a cluster.
///
/// `k_0 = max(1, floor(k0_fraction·n))`; values stop at
/// `min(floor(kmax_fraction·n), n - 1)`. Never empty.
pub fn resolve_k_sweep(cfg: &RankingConfig, cluster_size: usize) -> Result<Vec<usize>> {
    if cluster_size < 2 {
        return Err(Error::ClusterTooSmall { size: cluster_size });
    }
    let k0 = floor_fraction(cfg.k0_fraction, cluster_size).max(1);
    let upper = floor_fraction(cfg.kmax_fraction, cluster_size).min(cluster_size - 1);
    let step = cfg.k_step.max(1);
    let ks: Vec<usize> = (0..)
        .map(|i| k0 + i * step)
        .take_while(|&k| k <= upper)
        .collect();
    if ks.is_empty() {
        Ok(vec![k0.min(cluster_size - 1)])
    } else {
        Ok(ks)
    }
}
