//! Epoch-dependent group weights and weighted pseudo-label records.
//!
//! Group `i` of `m` gets `w_i(t) = 1 - ((i - 1) / m)^((1 + t) β0)`: the most
//! reliable group always weighs 1, lower groups start near 0 and ramp towards
//! (never reaching) 1 as training proceeds.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::RankedGroups;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub m: usize,
    pub beta0: f64,
    /// Weight of samples outside every group.
    pub residual_weight: f64,
}

impl WeightSchedule {
    pub fn new(m: usize, beta0: f64) -> Result<Self> {
        let s = WeightSchedule {
            m,
            beta0,
            residual_weight: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("m", "must be >= 1"));
        }
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(Error::config("beta0", format!("must be > 0, got {}", self.beta0)));
        }
        if !(0.0..=1.0).contains(&self.residual_weight) {
            return Err(Error::config(
                "residual_weight",
                format!("must be in [0, 1], got {}", self.residual_weight),
            ));
        }
        Ok(())
    }

    /// Weights `w_1..w_m` at epoch `t`.
    pub fn row(&self, t: usize) -> Vec<f64> {
        (1..=self.m).map(|i| weight(self, i, t)).collect()
    }
}

/// `((i - 1) / m)^((1 + t) β0)`, i.e. `1 - w_i(t)`.
///
/// Kept separately because for large `(1 + t) β0` the deficit drops below
/// `f64::EPSILON` and `1 - deficit` rounds to exactly 1; the deficit itself
/// stays strictly ordered in `i` and `t`.
pub fn weight_deficit(schedule: &WeightSchedule, group_index: usize, epoch: usize) -> f64 {
    debug_assert!(group_index >= 1 && group_index <= schedule.m);
    let base = (group_index - 1) as f64 / schedule.m as f64;
    let exponent = (1.0 + epoch as f64) * schedule.beta0;
    base.powf(exponent)
}

/// `w_i(t)` for a 1-based group index.
pub fn weight(schedule: &WeightSchedule, group_index: usize, epoch: usize) -> f64 {
    1.0 - weight_deficit(schedule, group_index, epoch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupIndex {
    /// 1-based group rank.
    Group(usize),
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPseudoLabel {
    pub sample_id: u64,
    pub pseudo_label: usize,
    pub group: GroupIndex,
    pub weight: f64,
}

/// One record per ranked sample, labelled with its cluster and weighted by
/// its group at epoch `t`.
pub fn make_weighted_labels(
    groups: &[RankedGroups],
    schedule: &WeightSchedule,
    epoch: usize,
) -> Result<Vec<WeightedPseudoLabel>> {
    schedule.validate()?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(groups.iter().map(RankedGroups::len).sum());
    for ranked in groups {
        let members = ranked
            .groups
            .iter()
            .enumerate()
            .flat_map(|(j, g)| g.iter().map(move |&id| (id, GroupIndex::Group(j + 1))))
            .chain(ranked.residual.iter().map(|&id| (id, GroupIndex::Residual)));
        for (sample_id, group) in members {
            if !seen.insert(sample_id) {
                return Err(Error::DuplicateSample { sample_id });
            }
            let weight = match group {
                GroupIndex::Group(i) if i <= schedule.m => weight(schedule, i, epoch),
                GroupIndex::Group(_) => {
                    return Err(Error::input(
                        "groups",
                        format!("cluster {} has more groups than m = {}", ranked.cluster_id, schedule.m),
                    ))
                }
                GroupIndex::Residual => schedule.residual_weight,
            };
            out.push(WeightedPseudoLabel {
                sample_id,
                pseudo_label: ranked.cluster_id,
                group,
                weight,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sched(m: usize, beta0: f64) -> WeightSchedule {
        WeightSchedule::new(m, beta0).unwrap()
    }

    #[test]
    fn first_group_always_one() {
        for beta0 in [0.001, 0.02, 0.5, 3.0] {
            for t in [0, 1, 17, 1000] {
                assert_eq!(weight(&sched(5, beta0), 1, t), 1.0);
            }
        }
    }

    #[test]
    fn reference_values_at_epoch_zero() {
        // 1 - 0.2^0.02 = 1 - exp(0.02 ln 0.2)
        let w = sched(5, 0.02).row(0);
        let expect = [1.0, 0.031677, 0.018158, 0.010165, 0.004453];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 5e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn weights_approach_one() {
        let s = sched(5, 0.02);
        for i in 2..=5 {
            for t in (0..5000).step_by(50) {
                assert!(weight_deficit(&s, i, t + 50) < weight_deficit(&s, i, t));
                assert!(weight(&s, i, t + 50) >= weight(&s, i, t));
            }
        }
        assert!(weight(&s, 5, 5000) > 0.99);
    }

    #[test]
    fn invalid_beta0_rejected() {
        assert!(WeightSchedule::new(5, 0.0).is_err());
        assert!(WeightSchedule::new(5, -0.1).is_err());
        assert!(WeightSchedule::new(0, 0.1).is_err());
    }

    fn ranked(cluster_id: usize, groups: Vec<Vec<u64>>, residual: Vec<u64>) -> RankedGroups {
        RankedGroups {
            cluster_id,
            groups,
            residual,
        }
    }

    #[test]
    fn single_group_weights_are_one() {
        let g = vec![ranked(0, vec![vec![0, 1, 2]], vec![])];
        let recs = make_weighted_labels(&g, &sched(1, 0.02), 0).unwrap();
        assert!(recs.iter().all(|r| r.weight == 1.0 && r.pseudo_label == 0));
    }

    #[test]
    fn two_clusters_two_groups() {
        let g = vec![
            ranked(0, vec![vec![0, 1], vec![2, 3]], vec![]),
            ranked(1, vec![vec![4, 5], vec![6, 7]], vec![]),
        ];
        let recs = make_weighted_labels(&g, &sched(2, 0.05), 0).unwrap();
        assert_eq!(recs.len(), 8);
        for r in &recs {
            let want = match r.group {
                GroupIndex::Group(1) => 1.0,
                GroupIndex::Group(2) => 0.034064,
                _ => unreachable!(),
            };
            assert!((r.weight - want).abs() < 5e-6);
            assert_eq!(r.pseudo_label, (r.sample_id / 4) as usize);
        }
    }

    #[test]
    fn residual_records_carry_residual_weight() {
        let g = vec![ranked(2, vec![vec![1], vec![]], vec![9, 8])];
        let recs = make_weighted_labels(&g, &sched(2, 0.05), 3).unwrap();
        let res: Vec<_> = recs.iter().filter(|r| r.group == GroupIndex::Residual).collect();
        assert_eq!(res.len(), 2);
        assert!(res.iter().all(|r| r.weight == 0.0 && r.pseudo_label == 2));

        let s = WeightSchedule {
            residual_weight: 0.25,
            ..sched(2, 0.05)
        };
        let recs = make_weighted_labels(&g, &s, 3).unwrap();
        assert!(recs.iter().filter(|r| r.group == GroupIndex::Residual).all(|r| r.weight == 0.25));
    }

    #[test]
    fn duplicate_sample_across_clusters_rejected() {
        let g = vec![ranked(0, vec![vec![0, 1]], vec![]), ranked(1, vec![vec![1]], vec![])];
        assert_eq!(
            make_weighted_labels(&g, &sched(1, 0.05), 0).unwrap_err(),
            Error::DuplicateSample { sample_id: 1 }
        );
    }

    #[test]
    fn second_group_rises_fastest() {
        // Over beta = (1 + t) beta0 in (0, 6], w_2 leads the lower groups.
        let s = sched(5, 0.02);
        for t in [0, 10, 50, 100, 299] {
            let row = s.row(t);
            assert!(row[1] > row[2] && row[2] > row[3] && row[3] > row[4]);
        }
        let gain = |i| weight(&s, i, 60) - weight(&s, i, 0);
        assert!(gain(2) > gain(3) && gain(3) > gain(4) && gain(4) > gain(5));
    }

    proptest! {
        #[test]
        fn ordering_and_monotonicity(m in 2usize..12, beta0 in 0.001f64..0.2, t in 0usize..400, dt in 1usize..100) {
            let s = sched(m, beta0);
            for i in 2..=m {
                let q = weight_deficit(&s, i, t);
                prop_assert!(q > 0.0 && q <= 1.0);
                prop_assert!(weight_deficit(&s, i, t + dt) < q);
                if i < m {
                    prop_assert!(weight_deficit(&s, i + 1, t) > q);
                }
                let w = weight(&s, i, t);
                prop_assert!((0.0..=1.0).contains(&w));
                prop_assert!(weight(&s, i, t + dt) >= w);
            }
        }
    }
}
