//! Robust majority voting over per-`k` sorted lists.
//!
//! Each `k` in the sweep yields one ordering of the cluster (least to most
//! noisy). For growing windows `p_1 < ... < p_m` every sample is counted once
//! per list whose top-`p_j` window contains it; the most-counted samples fill
//! the cumulative window and the newcomers form group `g_j`.

use std::cmp::Ordering;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{resolve_k_sweep, RankingConfig};
use crate::dataset::{validate, EmbeddingSet};
use crate::error::{Error, Result};
use crate::scoring::{cluster_matrix, scores_for_matrix, NoiseScoreTable};

#[derive(Debug, Clone, PartialEq)]
pub struct SortedLists {
    pub cluster_id: usize,
    /// One permutation of the cluster's sample ids per `k`, least noisy first.
    pub lists: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedGroups {
    pub cluster_id: usize,
    /// `groups[0]` is the most reliable group.
    pub groups: Vec<Vec<u64>>,
    /// Samples never selected by the last window.
    pub residual: Vec<u64>,
}

impl RankedGroups {
    /// Groups in rank order followed by the residual.
    pub fn ordered(&self) -> Vec<u64> {
        self.groups
            .iter()
            .flatten()
            .chain(&self.residual)
            .copied()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum::<usize>() + self.residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }
}

/// Orders each score row ascending; equal scores fall back to sample id.
pub fn sort_by_score(table: &NoiseScoreTable) -> SortedLists {
    let lists = table
        .scores
        .iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| {
                row[a]
                    .total_cmp(&row[b])
                    .then(table.sample_ids[a].cmp(&table.sample_ids[b]))
            });
            idx.into_iter().map(|i| table.sample_ids[i]).collect()
        })
        .collect();
    SortedLists {
        cluster_id: table.cluster_id,
        lists,
    }
}

/// Per-sample tally: window hits and the sum of positions across all lists
/// (a stand-in for mean rank with identical ordering).
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    count: usize,
    rank_sum: usize,
}

fn vote_order(ids: &[u64], tally: &[Tally], a: usize, b: usize) -> Ordering {
    tally[b]
        .count
        .cmp(&tally[a].count)
        .then(tally[a].rank_sum.cmp(&tally[b].rank_sum))
        .then(ids[a].cmp(&ids[b]))
}

/// Groups the cluster by majority voting over cumulative windows.
///
/// Round `j` keeps everything already grouped and adds the best-voted
/// remaining samples until `p_targets[j]` are selected, so cumulative group
/// sizes equal the targets. Targets must be non-decreasing and at most the
/// cluster size; equal targets produce empty groups.
pub fn vote_groups(lists: &SortedLists, p_targets: &[usize]) -> Result<RankedGroups> {
    let first = lists
        .lists
        .first()
        .ok_or_else(|| Error::input("lists", "at least one sorted list is required"))?;
    let n = first.len();

    let mut ids = first.clone();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::input("lists", "duplicate sample id within a list"));
    }
    let local = |id: u64| ids.binary_search(&id).ok();

    let positions: Vec<Vec<usize>> = lists
        .lists
        .iter()
        .map(|list| {
            if list.len() != n {
                return Err(Error::input("lists", "lists differ in length"));
            }
            list.iter()
                .map(|&id| local(id).ok_or_else(|| Error::input("lists", format!("id {id} missing from another list"))))
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut prev = 0;
    for &t in p_targets {
        if t < prev || t > n {
            return Err(Error::input(
                "p_targets",
                format!("targets must be non-decreasing and <= {n}, got {p_targets:?}"),
            ));
        }
        prev = t;
    }

    let mut tally = vec![Tally::default(); n];
    for list in &positions {
        for (pos, &s) in list.iter().enumerate() {
            tally[s].rank_sum += pos;
        }
    }

    let mut grouped = vec![false; n];
    let mut n_grouped = 0;
    let mut window = 0;
    let mut groups = Vec::with_capacity(p_targets.len());
    for &target in p_targets {
        for list in &positions {
            for &s in &list[window..target] {
                tally[s].count += 1;
            }
        }
        window = target;

        let mut candidates: Vec<usize> = (0..n).filter(|&s| !grouped[s]).collect();
        candidates.sort_by(|&a, &b| vote_order(&ids, &tally, a, b));
        let take = target - n_grouped;
        let group: Vec<usize> = candidates.into_iter().take(take).collect();
        for &s in &group {
            grouped[s] = true;
        }
        n_grouped += group.len();
        groups.push(group.into_iter().map(|s| ids[s]).collect());
    }

    let mut residual: Vec<usize> = (0..n).filter(|&s| !grouped[s]).collect();
    residual.sort_by(|&a, &b| vote_order(&ids, &tally, a, b));

    Ok(RankedGroups {
        cluster_id: lists.cluster_id,
        groups,
        residual: residual.into_iter().map(|s| ids[s]).collect(),
    })
}

fn rank_members(
    set: &EmbeddingSet,
    members: &[usize],
    cluster_id: usize,
    cfg: &RankingConfig,
    epoch: usize,
) -> Result<RankedGroups> {
    let ids: Vec<u64> = members.iter().map(|&i| set.sample_ids[i]).collect();
    if members.len() < 2 {
        let mut groups = vec![Vec::new(); cfg.m];
        groups[0] = ids;
        return Ok(RankedGroups {
            cluster_id,
            groups,
            residual: Vec::new(),
        });
    }
    let k_values = resolve_k_sweep(cfg, members.len())?;
    let dm = cluster_matrix(set, members.to_vec(), cluster_id, cfg.distance, cfg.normalize_features)?;
    let table = scores_for_matrix(&dm, k_values)?;
    let lists = sort_by_score(&table);
    vote_groups(&lists, &cfg.p_targets(members.len(), epoch))
}

/// Ranks every cluster of a validated set at training epoch `epoch`.
pub fn rank_all(set: &EmbeddingSet, cfg: &RankingConfig, epoch: usize) -> Result<Vec<RankedGroups>> {
    cfg.validate()?;
    if let Some(v) = validate(set).into_iter().next() {
        return Err(Error::input("embedding_set", v.to_string()));
    }
    rank_partition(set, &set.members_by_cluster(), cfg, epoch)
}

/// Ranks an explicit partition of `set`'s rows (the set's own assignments are
/// ignored). Empty parts are skipped with a warning.
pub fn rank_partition(
    set: &EmbeddingSet,
    partition: &[Vec<usize>],
    cfg: &RankingConfig,
    epoch: usize,
) -> Result<Vec<RankedGroups>> {
    cfg.validate()?;
    partition
        .par_iter()
        .enumerate()
        .filter_map(|(cluster_id, members)| {
            if members.is_empty() {
                warn!("cluster {cluster_id} is empty; skipped in ranking");
                None
            } else {
                Some(rank_members(set, members, cluster_id, cfg, epoch))
            }
        })
        .collect()
}
