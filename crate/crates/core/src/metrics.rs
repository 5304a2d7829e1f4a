//! Clustering evaluation: Hungarian-matched accuracy, NMI, ARI, and the
//! ranking success rate of a within-cluster ordering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::target_count;
use crate::error::{Error, Result};

/// Co-occurrence counts of predicted clusters (rows) and true classes
/// (columns). Labels are compacted to their sorted distinct values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub pred_labels: Vec<usize>,
    pub truth_labels: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

fn distinct(labels: &[usize]) -> Vec<usize> {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch {
                left: pred.len(),
                right: truth.len(),
            });
        }
        if pred.is_empty() {
            return Err(Error::EmptyInput);
        }
        let pred_labels = distinct(pred);
        let truth_labels = distinct(truth);
        let mut counts = vec![vec![0u64; truth_labels.len()]; pred_labels.len()];
        for (p, t) in pred.iter().zip(truth) {
            let r = pred_labels.binary_search(p).unwrap();
            let c = truth_labels.binary_search(t).unwrap();
            counts[r][c] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..truth_labels.len())
            .map(|c| counts.iter().map(|r| r[c]).sum())
            .collect();
        Ok(ContingencyTable {
            pred_labels,
            truth_labels,
            counts,
            row_sums,
            col_sums,
            n: pred.len() as u64,
        })
    }
}

/// Minimum-cost perfect matching on a square matrix (Kuhn-Munkres with
/// potentials, `O(n³)`). Returns the column assigned to each row.
pub fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based with column 0 as the virtual root.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[row_of[j] - 1] = j - 1;
    }
    out
}

/// Best injective cluster → class mapping and the accuracy it achieves.
///
/// Clusters matched to a zero-padding column (more clusters than classes)
/// are absent from the mapping.
pub fn hungarian_accuracy(pred: &[usize], truth: &[usize]) -> Result<(f64, BTreeMap<usize, usize>)> {
    let table = ContingencyTable::new(pred, truth)?;
    let size = table.pred_labels.len().max(table.truth_labels.len());
    let cost: Vec<Vec<i64>> = (0..size)
        .map(|r| {
            (0..size)
                .map(|c| {
                    let count = table.counts.get(r).and_then(|row| row.get(c)).copied().unwrap_or(0);
                    -(count as i64)
                })
                .collect()
        })
        .collect();
    let assign = min_cost_assignment(&cost);

    let mut mapping = BTreeMap::new();
    let mut hits = 0u64;
    for (r, &pred_label) in table.pred_labels.iter().enumerate() {
        let c = assign[r];
        if c < table.truth_labels.len() {
            mapping.insert(pred_label, table.truth_labels[c]);
            hits += table.counts[r][c];
        }
    }
    Ok((hits as f64 / table.n as f64, mapping))
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalised by the arithmetic mean of the two entropies
/// (natural log). 0 when exactly one labelling is a single cluster, 1 when
/// both are.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    if t.pred_labels.len() == 1 && t.truth_labels.len() == 1 {
        return Ok(1.0);
    }
    let n = t.n as f64;
    let h_pred = entropy(&t.row_sums, n);
    let h_truth = entropy(&t.col_sums, n);
    if h_pred == 0.0 || h_truth == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (r, row) in t.counts.iter().enumerate() {
        for (c, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            mi += nij / n * (n * nij / (t.row_sums[r] as f64 * t.col_sums[c] as f64)).ln();
        }
    }
    Ok((mi / (0.5 * (h_pred + h_truth))).clamp(0.0, 1.0))
}

fn comb2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index via sums of binomial coefficients.
///
/// When the chance-corrected denominator vanishes (both labellings trivial)
/// the result is 1 for equal partitions and 0 otherwise.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    if t.n < 2 {
        return Err(Error::input("labels", "ARI needs at least 2 samples"));
    }
    let index: f64 = t.counts.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = t.row_sums.iter().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = t.col_sums.iter().map(|&c| comb2(c)).sum();
    let expected = sum_rows * sum_cols / comb2(t.n);
    let max = 0.5 * (sum_rows + sum_cols);
    let denom = max - expected;
    if denom == 0.0 {
        let same = t.pred_labels.len() == t.truth_labels.len()
            && t.counts.iter().all(|row| row.iter().filter(|&&c| c > 0).count() == 1);
        return Ok(if same { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// Modal label, ties resolved towards the smallest label.
pub fn modal_label(labels: &[usize]) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    // max_by_key keeps the last maximum; iterate in reverse label order.
    counts.into_iter().rev().max_by_key(|&(_, c)| c).map(|(l, _)| l)
}

/// Fraction of signal samples among the top `round(p · n)` of a ranked
/// cluster. `ranked_truth` lists true labels in rank order; the signal class
/// defaults to the modal label of the whole cluster.
pub fn ranking_success_rate(ranked_truth: &[usize], signal_class: Option<usize>, p: f64) -> Result<f64> {
    let (signal, prefix) = rsr_counts(ranked_truth, signal_class, p)?;
    Ok(signal as f64 / prefix as f64)
}

fn rsr_counts(ranked_truth: &[usize], signal_class: Option<usize>, p: f64) -> Result<(usize, usize)> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::input("p", format!("must be in (0, 1], got {p}")));
    }
    let signal = match signal_class {
        Some(s) => s,
        None => modal_label(ranked_truth).ok_or(Error::EmptyInput)?,
    };
    let prefix = target_count(p, ranked_truth.len());
    if prefix == 0 {
        return Err(Error::input("p", format!("top {p} of {} samples is empty", ranked_truth.len())));
    }
    let hits = ranked_truth[..prefix].iter().filter(|&&l| l == signal).count();
    Ok((hits, prefix))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsrCurve {
    /// `None` for the curve pooled over all clusters.
    pub cluster_id: Option<usize>,
    pub signal_class: Option<usize>,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub mapping: BTreeMap<usize, usize>,
    pub rsr: Vec<RsrCurve>,
}

impl EvaluationReport {
    pub fn pooled_rsr(&self) -> Option<&RsrCurve> {
        self.rsr.iter().find(|c| c.cluster_id.is_none())
    }
}

/// The `p` grid used for ranking diagnostics.
pub const RSR_GRID: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// ACC/NMI/ARI plus per-cluster and pooled R_sr curves.
///
/// `orders[c]` lists the row indices of cluster `c` in rank order; when
/// absent, each cluster is read in row order.
pub fn evaluate(
    pred: &[usize],
    truth: &[usize],
    orders: Option<&[(usize, Vec<usize>)]>,
    ps: &[f64],
) -> Result<EvaluationReport> {
    let (acc, mapping) = hungarian_accuracy(pred, truth)?;
    let nmi = nmi(pred, truth)?;
    let ari = if pred.len() >= 2 { ari(pred, truth)? } else { 1.0 };

    let default_orders: Vec<(usize, Vec<usize>)>;
    let orders = match orders {
        Some(o) => o,
        None => {
            let mut by_cluster: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &c) in pred.iter().enumerate() {
                by_cluster.entry(c).or_default().push(i);
            }
            default_orders = by_cluster.into_iter().collect();
            &default_orders
        }
    };

    if ps.is_empty() {
        return Ok(EvaluationReport {
            acc,
            nmi,
            ari,
            mapping,
            rsr: Vec::new(),
        });
    }
    let mut rsr = Vec::with_capacity(orders.len() + 1);
    let mut pooled = vec![(0usize, 0usize); ps.len()];
    for (cluster_id, rows) in orders {
        let ranked: Vec<usize> = rows
            .iter()
            .map(|&i| truth.get(i).copied().ok_or_else(|| Error::input("orders", format!("row {i} out of range"))))
            .collect::<Result<_>>()?;
        let Some(signal) = modal_label(&ranked) else {
            continue;
        };
        let mut points = Vec::with_capacity(ps.len());
        for (slot, &p) in pooled.iter_mut().zip(ps) {
            // Tiny clusters may have an empty prefix at small p.
            if let Ok((hits, prefix)) = rsr_counts(&ranked, Some(signal), p) {
                slot.0 += hits;
                slot.1 += prefix;
                points.push((p, hits as f64 / prefix as f64));
            }
        }
        rsr.push(RsrCurve {
            cluster_id: Some(*cluster_id),
            signal_class: Some(signal),
            points,
        });
    }
    rsr.push(RsrCurve {
        cluster_id: None,
        signal_class: None,
        points: ps
            .iter()
            .zip(&pooled)
            .filter(|(_, (_, total))| *total > 0)
            .map(|(&p, &(hits, total))| (p, hits as f64 / total as f64))
            .collect(),
    });

    Ok(EvaluationReport {
        acc,
        nmi,
        ari,
        mapping,
        rsr,
    })
}
