//! Within-cluster distances and the per-sample noise score.
//!
//! For a sample with sorted neighbour distances `d_1 <= ... <= d_k` the noise
//! score is `mean(d_1..d_k) + median(d_1..d_k)`; higher means more likely to
//! be a contaminant of the cluster.
//!
//! One [`DistanceMatrix`] is built per cluster: `N_c × (N_c - 1)` sorted
//! distances plus per-row prefix sums, so memory is `Θ(N_c²)` and each `k`
//! costs `O(N_c)` once the matrix exists. Building the matrix is
//! `O(N_c² (D + log N_c))`.

use rayon::prelude::*;

use crate::config::{resolve_k_sweep, Distance, RankingConfig};
use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub cluster_id: usize,
    /// Row indices into the originating feature matrix, ascending.
    pub members: Vec<usize>,
    pub sample_ids: Vec<u64>,
    /// Row `s` holds the distances from member `s` to every other member,
    /// sorted ascending. Row-major, `n × (n - 1)`.
    values: Vec<f64>,
    /// `prefix[s * n + j]` is the sum of the `j` smallest distances of row `s`.
    prefix: Vec<f64>,
}

impl DistanceMatrix {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        let w = self.size() - 1;
        &self.values[s * w..(s + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bytes held by the distance and prefix tables.
    pub fn footprint_bytes(&self) -> usize {
        (self.values.len() + self.prefix.len()) * std::mem::size_of::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseScoreTable {
    pub cluster_id: usize,
    pub members: Vec<usize>,
    pub sample_ids: Vec<u64>,
    pub k_values: Vec<usize>,
    /// `scores[a][s]` is the noise score of member `s` at `k_values[a]`.
    pub scores: Vec<Vec<f64>>,
}

fn normalized(row: &[f64], sample_id: u64) -> Result<Vec<f64>> {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNorm { sample_id });
    }
    Ok(row.iter().map(|v| v / norm).collect())
}

/// Builds the sorted distance matrix for an arbitrary member list.
///
/// `rows[i]` is the feature vector of member `i`.
pub fn distance_matrix_from_rows(
    cluster_id: usize,
    members: Vec<usize>,
    sample_ids: Vec<u64>,
    rows: &[&[f64]],
    distance: Distance,
    normalize: bool,
) -> Result<DistanceMatrix> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::DegenerateCluster {
            cluster: cluster_id,
            size: n,
        });
    }

    // Cosine works on unit vectors either way.
    let unit: Option<Vec<Vec<f64>>> = if normalize || distance == Distance::Cosine {
        Some(
            rows.iter()
                .zip(&sample_ids)
                .map(|(r, &id)| normalized(r, id))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let view: Vec<&[f64]> = match &unit {
        Some(u) => u.iter().map(Vec::as_slice).collect(),
        None => rows.to_vec(),
    };

    let w = n - 1;
    let mut values = vec![0.0; n * w];
    let mut prefix = vec![0.0; n * n];
    values
        .par_chunks_mut(w)
        .zip(prefix.par_chunks_mut(n))
        .enumerate()
        .for_each(|(s, (row, pre))| {
            let a = view[s];
            let mut j = 0;
            for (t, b) in view.iter().enumerate() {
                if t == s {
                    continue;
                }
                row[j] = match distance {
                    Distance::Euclidean => euclidean(a, b),
                    Distance::Cosine => cosine_from_unit(a, b),
                };
                j += 1;
            }
            row.sort_unstable_by(f64::total_cmp);
            let mut acc = 0.0;
            pre[0] = 0.0;
            for (i, d) in row.iter().enumerate() {
                acc += d;
                pre[i + 1] = acc;
            }
        });

    Ok(DistanceMatrix {
        cluster_id,
        members,
        sample_ids,
        values,
        prefix,
    })
}

#[inline]
fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn cosine_from_unit(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot).clamp(0.0, 2.0)
}

/// Sorted within-cluster distances for `cluster_id`.
pub fn pairwise_distances(
    set: &EmbeddingSet,
    cluster_id: usize,
    distance: Distance,
) -> Result<DistanceMatrix> {
    cluster_matrix(set, set.cluster_members(cluster_id), cluster_id, distance, false)
}

pub(crate) fn cluster_matrix(
    set: &EmbeddingSet,
    members: Vec<usize>,
    cluster_id: usize,
    distance: Distance,
    normalize: bool,
) -> Result<DistanceMatrix> {
    let rows: Vec<&[f64]> = members.iter().map(|&i| set.row(i)).collect();
    let ids = members.iter().map(|&i| set.sample_ids[i]).collect();
    distance_matrix_from_rows(cluster_id, members, ids, &rows, distance, normalize)
}

/// Noise score of every member for a single `k`.
pub fn noise_score(dm: &DistanceMatrix, k: usize) -> Result<Vec<f64>> {
    let n = dm.size();
    if k == 0 || k + 1 > n {
        return Err(Error::KOutOfRange {
            k,
            max: n.saturating_sub(1),
        });
    }
    Ok((0..n)
        .map(|s| {
            let row = dm.row(s);
            let mean = dm.prefix[s * n + k] / k as f64;
            let median = if k % 2 == 1 {
                row[k / 2]
            } else {
                0.5 * (row[k / 2 - 1] + row[k / 2])
            };
            mean + median
        })
        .collect())
}

/// Scores of one matrix for every `k` in the sweep.
pub fn scores_for_matrix(dm: &DistanceMatrix, k_values: Vec<usize>) -> Result<NoiseScoreTable> {
    let scores = k_values
        .iter()
        .map(|&k| noise_score(dm, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseScoreTable {
        cluster_id: dm.cluster_id,
        members: dm.members.clone(),
        sample_ids: dm.sample_ids.clone(),
        k_values,
        scores,
    })
}

/// Noise scores of one cluster over the configured `k` sweep.
pub fn score_table(set: &EmbeddingSet, cfg: &RankingConfig, cluster_id: usize) -> Result<NoiseScoreTable> {
    let members = set.cluster_members(cluster_id);
    if members.len() < 2 {
        return Err(Error::DegenerateCluster {
            cluster: cluster_id,
            size: members.len(),
        });
    }
    let k_values = resolve_k_sweep(cfg, members.len())?;
    let dm = cluster_matrix(set, members, cluster_id, cfg.distance, cfg.normalize_features)?;
    scores_for_matrix(&dm, k_values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(points: &[f64]) -> EmbeddingSet {
        EmbeddingSet::new(points.to_vec(), 1, vec![0; points.len()], 1).unwrap()
    }

    /// Direct recomputation: distances, sort, then mean + median of the first k.
    fn oracle_scores(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
        rows.iter()
            .enumerate()
            .map(|(s, a)| {
                let mut d: Vec<f64> = rows
                    .iter()
                    .enumerate()
                    .filter(|(t, _)| *t != s)
                    .map(|(_, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                    .collect();
                d.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let head = &d[..k];
                let mean = head.iter().sum::<f64>() / k as f64;
                let median = if k % 2 == 1 {
                    head[k / 2]
                } else {
                    (head[k / 2 - 1] + head[k / 2]) / 2.0
                };
                mean + median
            })
            .collect()
    }

    #[test]
    fn three_points_on_a_line() {
        let dm = pairwise_distances(&line(&[0.0, 1.0, 2.0]), 0, Distance::Euclidean).unwrap();
        assert_eq!(dm.row(0), &[1.0, 2.0]);
        assert_eq!(dm.row(1), &[1.0, 1.0]);
        assert_eq!(dm.row(2), &[1.0, 2.0]);
    }

    #[test]
    fn identical_vectors_give_zero_matrix_and_scores() {
        let set = EmbeddingSet::new(vec![0.5, -1.0].repeat(6), 2, vec![0; 6], 1).unwrap();
        let dm = pairwise_distances(&set, 0, Distance::Euclidean).unwrap();
        assert!(dm.values().iter().all(|&v| v == 0.0));
        for k in 1..6 {
            assert!(noise_score(&dm, k).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn cosine_orthogonal_vectors() {
        let set = EmbeddingSet::new(vec![1.0, 0.0, 0.0, 1.0], 2, vec![0, 0], 1).unwrap();
        let dm = pairwise_distances(&set, 0, Distance::Cosine).unwrap();
        assert!((dm.row(0)[0] - 1.0).abs() < 1e-15);
        assert!((dm.row(1)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        let mut set = EmbeddingSet::new(vec![1.0, 0.0, 0.0, 0.0], 2, vec![0, 0], 1).unwrap();
        set.sample_ids = vec![40, 41];
        assert_eq!(
            pairwise_distances(&set, 0, Distance::Cosine).unwrap_err(),
            Error::ZeroNorm { sample_id: 41 }
        );
    }

    #[test]
    fn degenerate_cluster_rejected() {
        let set = EmbeddingSet::new(vec![0.0, 1.0, 2.0], 1, vec![0, 0, 1], 2).unwrap();
        assert!(matches!(
            pairwise_distances(&set, 1, Distance::Euclidean),
            Err(Error::DegenerateCluster { cluster: 1, size: 1 })
        ));
        assert!(score_table(&set, &RankingConfig::default(), 1).is_err());
    }

    #[test]
    fn single_neighbour_score_is_twice_the_distance() {
        let dm = pairwise_distances(&line(&[0.0, 2.5]), 0, Distance::Euclidean).unwrap();
        assert_eq!(noise_score(&dm, 1).unwrap(), vec![5.0, 5.0]);
    }

    #[test]
    fn four_points_two_neighbours() {
        // rows sorted: 0 -> [1,2,10], 1 -> [1,1,9], 2 -> [1,2,8], 10 -> [8,9,10]
        let dm = pairwise_distances(&line(&[0.0, 1.0, 2.0, 10.0]), 0, Distance::Euclidean).unwrap();
        assert_eq!(noise_score(&dm, 2).unwrap(), vec![3.0, 2.0, 3.0, 17.0]);
    }

    #[test]
    fn k_out_of_range() {
        let dm = pairwise_distances(&line(&[0.0, 1.0, 2.0]), 0, Distance::Euclidean).unwrap();
        assert!(matches!(noise_score(&dm, 0), Err(Error::KOutOfRange { .. })));
        assert!(matches!(noise_score(&dm, 3), Err(Error::KOutOfRange { k: 3, max: 2 })));
        assert!(noise_score(&dm, 2).is_ok());
    }

    #[test]
    fn default_table_shape_for_thirty_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let feats: Vec<f64> = (0..30 * 4).map(|_| rng.random::<f64>()).collect();
        let set = EmbeddingSet::new(feats, 4, vec![0; 30], 1).unwrap();
        let table = score_table(&set, &RankingConfig::default(), 0).unwrap();
        assert_eq!(table.k_values, vec![10, 15, 20]);
        assert_eq!(table.scores.len(), 3);
        assert!(table.scores.iter().all(|r| r.len() == 30));

        let pair = EmbeddingSet::new(vec![0.0, 1.0], 1, vec![0, 0], 1).unwrap();
        let t = score_table(&pair, &RankingConfig::default(), 0).unwrap();
        assert_eq!(t.k_values, vec![1]);
        assert_eq!(t.scores, vec![vec![2.0, 2.0]]);
    }

    #[test]
    fn table_matches_direct_recomputation() {
        let cfg = RankingConfig {
            k0_fraction: 0.1,
            kmax_fraction: 0.95,
            k_step: 1,
            ..RankingConfig::default()
        };
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 3;
            let rows: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let set = EmbeddingSet::new(rows.concat(), dim, vec![0; 20], 1).unwrap();
            let table = score_table(&set, &cfg, 0).unwrap();
            assert_eq!(table.k_values.first(), Some(&2));
            for (a, &k) in table.k_values.iter().enumerate() {
                let expect = oracle_scores(&rows, k);
                for (got, want) in table.scores[a].iter().zip(&expect) {
                    assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "k={k}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn bit_identical_across_thread_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let feats: Vec<f64> = (0..300 * 8).map(|_| rng.random::<f64>()).collect();
        let set = EmbeddingSet::new(feats, 8, vec![0; 300], 1).unwrap();
        let cfg = RankingConfig::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| score_table(&set, &cfg, 0).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn footprint_is_quadratic() {
        let set = line(&(0..100).map(f64::from).collect::<Vec<_>>());
        let dm = pairwise_distances(&set, 0, Distance::Euclidean).unwrap();
        assert_eq!(dm.footprint_bytes(), (100 * 99 + 100 * 100) * 8);
    }

    fn cluster_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
        (2usize..25, 1usize..4).prop_flat_map(|(n, dim)| {
            (Just(dim), prop::collection::vec(-10.0f64..10.0, n * dim))
        })
    }

    proptest! {
        #[test]
        fn dominated_neighbourhood_scores_higher((dim, feats) in cluster_strategy(), kk in 1usize..24) {
            let n = feats.len() / dim;
            let set = EmbeddingSet::new(feats, dim, vec![0; n], 1).unwrap();
            let dm = pairwise_distances(&set, 0, Distance::Euclidean).unwrap();
            let k = 1 + kk % (n - 1);
            let m = noise_score(&dm, k).unwrap();
            for a in 0..n {
                for b in 0..n {
                    let dominated = (0..k).all(|i| dm.row(a)[i] > dm.row(b)[i]);
                    if dominated {
                        prop_assert!(m[a] > m[b]);
                    }
                }
            }
        }

        #[test]
        fn scaling_preserves_ordering((dim, feats) in cluster_strategy(), c in 0.1f64..50.0) {
            let n = feats.len() / dim;
            let cfg = RankingConfig::default();
            let base = EmbeddingSet::new(feats.clone(), dim, vec![0; n], 1).unwrap();
            let scaled = EmbeddingSet::new(feats.iter().map(|v| v * c).collect(), dim, vec![0; n], 1).unwrap();
            let t0 = score_table(&base, &cfg, 0).unwrap();
            let t1 = score_table(&scaled, &cfg, 0).unwrap();
            for (r0, r1) in t0.scores.iter().zip(&t1.scores) {
                for (a, b) in r0.iter().zip(r1) {
                    prop_assert!((a * c - b).abs() <= 1e-9 * b.abs().max(1.0));
                }
                for i in 0..n {
                    for j in 0..n {
                        // orderings only checked where the gap exceeds rounding noise
                        if r0[i] < r0[j] - 1e-9 * r0[j].abs().max(1.0) {
                            prop_assert!(r1[i] < r1[j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn permuting_samples_permutes_scores((dim, feats) in cluster_strategy(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let n = feats.len() / dim;
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<f64> = perm.iter().flat_map(|&i| feats[i * dim..(i + 1) * dim].to_vec()).collect();
            let cfg = RankingConfig::default();
            let t0 = score_table(&EmbeddingSet::new(feats, dim, vec![0; n], 1).unwrap(), &cfg, 0).unwrap();
            let t1 = score_table(&EmbeddingSet::new(permuted, dim, vec![0; n], 1).unwrap(), &cfg, 0).unwrap();
            for (r0, r1) in t0.scores.iter().zip(&t1.scores) {
                for (new_pos, &old) in perm.iter().enumerate() {
                    prop_assert!((r1[new_pos] - r0[old]).abs() <= 1e-12 * r0[old].abs().max(1.0));
                }
            }
        }
    }
}
