//! Weighted self-training of a softmax classifier on fixed embeddings.
//!
//! Every `rerank_every` epochs the model's predictions on weakly perturbed
//! features become the new cluster assignment, the clusters are re-ranked and
//! the per-sample weights are rebuilt from the group schedule. In between,
//! SGD with momentum minimises the weighted label-consistency loss: the
//! cross-entropy between each sample's pseudo-label and the model's output on
//! strongly perturbed copies of the sample.

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::RankingConfig;
use crate::dataset::{members_by_cluster, validate, EmbeddingSet};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvaluationReport};
use crate::ranking::rank_partition;
use crate::weighting::{make_weighted_labels, GroupIndex, WeightSchedule};

/// Softmax classifier, linear or with one ReLU hidden layer.
///
/// Parameters live in one flat buffer: `[w1 (D×H), b1 (H),] w2 (I×K), b2 (K)`
/// where `I` is `H` with a hidden layer and `D` without. Matrices are
/// row-major with the input index first.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub dim: usize,
    pub classes: usize,
    pub hidden: Option<usize>,
    pub params: Vec<f64>,
}

impl ClassifierModel {
    pub fn zeros(dim: usize, classes: usize, hidden: Option<usize>) -> Self {
        let n = Self::param_count(dim, classes, hidden);
        ClassifierModel {
            dim,
            classes,
            hidden,
            params: vec![0.0; n],
        }
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init(dim: usize, classes: usize, hidden: Option<usize>, rng: &mut impl Rng) -> Self {
        let mut model = Self::zeros(dim, classes, hidden);
        let layers = model.layers();
        for layer in layers {
            let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut model.params[layer.weights..layer.weights + layer.inputs * layer.outputs] {
                *w = rng.random_range(-bound..bound);
            }
        }
        model
    }

    pub fn param_count(dim: usize, classes: usize, hidden: Option<usize>) -> usize {
        match hidden {
            Some(h) => dim * h + h + h * classes + classes,
            None => dim * classes + classes,
        }
    }

    fn layers(&self) -> Vec<Layer> {
        match self.hidden {
            Some(h) => {
                let w2 = self.dim * h + h;
                vec![
                    Layer { weights: 0, bias: self.dim * h, inputs: self.dim, outputs: h },
                    Layer { weights: w2, bias: w2 + h * self.classes, inputs: h, outputs: self.classes },
                ]
            }
            None => vec![Layer {
                weights: 0,
                bias: self.dim * self.classes,
                inputs: self.dim,
                outputs: self.classes,
            }],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Hidden activations (if any) and logits for one input row.
    fn activations(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let layers = self.layers();
        let mut input = x.to_vec();
        let mut hidden = Vec::new();
        for (li, layer) in layers.iter().enumerate() {
            let mut out = self.params[layer.bias..layer.bias + layer.outputs].to_vec();
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &self.params[layer.weights + i * layer.outputs..layer.weights + (i + 1) * layer.outputs];
                out.iter_mut().zip(row).for_each(|(o, w)| *o += xi * w);
            }
            if li + 1 < layers.len() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
                hidden = out.clone();
            }
            input = out;
        }
        (hidden, input)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    weights: usize,
    bias: usize,
    inputs: usize,
    outputs: usize,
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

fn check_dim(model: &ClassifierModel, features: &[f64]) -> Result<()> {
    if model.dim == 0 || features.len() % model.dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: if model.dim == 0 { 0 } else { features.len() % model.dim },
        });
    }
    Ok(())
}

/// Class probabilities, `N × K` row-major.
pub fn forward(model: &ClassifierModel, features: &[f64]) -> Result<Vec<f64>> {
    check_dim(model, features)?;
    let mut out = Vec::with_capacity(features.len() / model.dim * model.classes);
    for x in features.chunks(model.dim) {
        let (_, mut logits) = model.activations(x);
        softmax_in_place(&mut logits);
        out.extend(logits);
    }
    Ok(out)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Arg-max class of every row.
pub fn pseudo_labels(model: &ClassifierModel, features: &[f64]) -> Result<Vec<usize>> {
    check_dim(model, features)?;
    Ok(features
        .chunks(model.dim)
        .map(|x| argmax(&model.activations(x).1))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Std of the strong (prediction-branch) Gaussian perturbation. The weak
    /// (label-branch) perturbation uses a quarter of it.
    pub sigma: f64,
    /// Strong perturbations drawn per sample per step.
    pub pairs: usize,
}

impl AugmentParams {
    pub fn none() -> Self {
        AugmentParams { sigma: 0.0, pairs: 1 }
    }
}

/// A minibatch: `S × D` features, a hard label and a weight per row.
#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a> {
    pub features: &'a [f64],
    pub labels: &'a [usize],
    pub weights: &'a [f64],
}

/// Weighted label-consistency loss and its exact gradient.
///
/// `loss = (1/S) Σ_s w_s · (1/P) Σ_q CE(y_s, f(x_s + σ ε_q))`; labels are
/// constants. Zero-weight rows are skipped and draw no noise.
pub fn lct_loss(
    model: &ClassifierModel,
    batch: LossBatch<'_>,
    augment: AugmentParams,
    rng: &mut impl Rng,
) -> Result<(f64, Vec<f64>)> {
    check_dim(model, batch.features)?;
    let s_count = batch.labels.len();
    if batch.features.len() != s_count * model.dim || batch.weights.len() != s_count {
        return Err(Error::input("batch", "features, labels and weights differ in length"));
    }
    if !(augment.sigma >= 0.0) || augment.pairs == 0 {
        return Err(Error::config("augment", "sigma must be >= 0 and pairs >= 1"));
    }
    let mut grad = vec![0.0; model.params.len()];
    if s_count == 0 {
        return Ok((0.0, grad));
    }

    let layers = model.layers();
    let pairs = if augment.sigma == 0.0 { 1 } else { augment.pairs };
    let mut loss = 0.0;
    let mut x = vec![0.0; model.dim];
    for (s, xs) in batch.features.chunks(model.dim).enumerate() {
        let w = batch.weights[s];
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::input("weights", format!("weight {w} outside [0, 1]")));
        }
        let label = batch.labels[s];
        if label >= model.classes {
            return Err(Error::input("labels", format!("label {label} >= K = {}", model.classes)));
        }
        if w == 0.0 {
            continue;
        }
        let scale = w / (s_count * pairs) as f64;
        for _ in 0..pairs {
            for (xi, &base) in x.iter_mut().zip(xs) {
                let eps: f64 = if augment.sigma > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
                *xi = base + augment.sigma * eps;
            }
            let (hidden, mut probs) = model.activations(&x);
            softmax_in_place(&mut probs);
            loss += -scale * probs[label].max(f64::MIN_POSITIVE).ln();

            // dL/dlogits = scale · (p - onehot)
            let mut delta: Vec<f64> = probs.iter().map(|p| scale * p).collect();
            delta[label] -= scale;

            let out = layers.last().unwrap();
            let input: &[f64] = if layers.len() == 2 { &hidden } else { &x };
            for (i, &a) in input.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let g = &mut grad[out.weights + i * out.outputs..out.weights + (i + 1) * out.outputs];
                g.iter_mut().zip(&delta).for_each(|(g, d)| *g += a * d);
            }
            grad[out.bias..out.bias + out.outputs]
                .iter_mut()
                .zip(&delta)
                .for_each(|(g, d)| *g += d);

            if layers.len() == 2 {
                let first = layers[0];
                let back: Vec<f64> = (0..first.outputs)
                    .map(|h| {
                        if hidden[h] <= 0.0 {
                            return 0.0;
                        }
                        let row = &model.params[out.weights + h * out.outputs..out.weights + (h + 1) * out.outputs];
                        row.iter().zip(&delta).map(|(w, d)| w * d).sum()
                    })
                    .collect();
                for (i, &xi) in x.iter().enumerate() {
                    let g = &mut grad[first.weights + i * first.outputs..first.weights + (i + 1) * first.outputs];
                    g.iter_mut().zip(&back).for_each(|(g, b)| *g += xi * b);
                }
                grad[first.bias..first.bias + first.outputs]
                    .iter_mut()
                    .zip(&back)
                    .for_each(|(g, b)| *g += b);
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Group weights from the schedule.
    #[default]
    Icsr,
    /// Every sample weighted 1; no ranking.
    Unweighted,
    /// Only the most reliable group, weighted 1.
    TopkOnly,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "icsr" | "weighted" => Ok(TrainMode::Icsr),
            "unweighted" => Ok(TrainMode::Unweighted),
            "topk-only" | "topk" => Ok(TrainMode::TopkOnly),
            other => Err(Error::config("baseline", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub beta0: f64,
    pub augment_sigma: f64,
    pub augment_pairs: usize,
    pub rerank_every: usize,
    pub seed: u64,
    pub hidden: Option<usize>,
    /// Epoch at which the learning rate is multiplied by 0.1.
    pub lr_drop_epoch: Option<usize>,
    /// Restart the weight schedule's epoch counter every this many epochs.
    pub schedule_restart: Option<usize>,
    pub residual_weight: f64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 240,
            learning_rate: 0.005,
            momentum: 0.9,
            batch_size: 128,
            beta0: 0.02,
            augment_sigma: 0.5,
            augment_pairs: 2,
            rerank_every: 10,
            seed: 0,
            hidden: None,
            lr_drop_epoch: None,
            schedule_restart: None,
            residual_weight: 0.0,
            mode: TrainMode::Icsr,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(Error::config("beta0", format!("must be > 0, got {}", self.beta0)));
        }
        if !(self.augment_sigma >= 0.0 && self.augment_sigma.is_finite()) {
            return Err(Error::config("augment_sigma", "must be >= 0"));
        }
        if self.augment_pairs == 0 {
            return Err(Error::config("augment_pairs", "must be >= 1"));
        }
        if self.rerank_every == 0 {
            return Err(Error::config("rerank_every", "must be >= 1"));
        }
        if self.hidden == Some(0) {
            return Err(Error::config("hidden", "must be >= 1 when set"));
        }
        if self.schedule_restart == Some(0) {
            return Err(Error::config("schedule_restart", "must be >= 1 when set"));
        }
        if !(0.0..=1.0).contains(&self.residual_weight) {
            return Err(Error::config("residual_weight", "must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn augment(&self) -> AugmentParams {
        AugmentParams {
            sigma: self.augment_sigma,
            pairs: self.augment_pairs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Fraction of the loss mass carried by non-zero weights.
    pub mean_weight: f64,
    pub report: Option<EvaluationReport>,
}

/// Everything needed to continue training bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Next epoch to run.
    pub epoch: usize,
    pub model: ClassifierModel,
    /// Momentum buffer.
    pub velocity: Vec<f64>,
    /// Pseudo-label assignment from the latest rerank.
    pub assignments: Vec<usize>,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    /// Fresh state: initialised model, zero momentum, the set's assignments.
    pub fn initial(set: &EmbeddingSet, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = ClassifierModel::init(set.dim, set.num_clusters, cfg.hidden, &mut rng);
        TrainState {
            epoch: 0,
            velocity: vec![0.0; model.params.len()],
            model,
            assignments: set.assignments.clone(),
            rng,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// State after the last epoch.
    pub state: TrainState,
    pub history: Vec<EpochRecord>,
    /// Model predictions after the last epoch.
    pub assignments: Vec<usize>,
}

impl TrainOutcome {
    pub fn model(&self) -> &ClassifierModel {
        &self.state.model
    }

    pub fn final_report(&self) -> Option<&EvaluationReport> {
        self.history.last().and_then(|r| r.report.as_ref())
    }
}

/// Per-row label and weight for the current ranking.
fn build_targets(
    set: &EmbeddingSet,
    assignments: &[usize],
    ranking: &RankingConfig,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = set.len();
    let labels = assignments.to_vec();
    if cfg.mode == TrainMode::Unweighted {
        return Ok((labels, vec![1.0; n]));
    }
    let partition = members_by_cluster(assignments, set.num_clusters);
    for (c, members) in partition.iter().enumerate() {
        if members.is_empty() {
            warn!("epoch {epoch}: cluster {c} is empty");
        }
    }
    let ranked = rank_partition(set, &partition, ranking, epoch)?;
    let schedule_epoch = cfg.schedule_restart.map_or(epoch, |r| epoch % r);
    let schedule = WeightSchedule {
        m: ranking.m,
        beta0: cfg.beta0,
        residual_weight: cfg.residual_weight,
    };
    let records = make_weighted_labels(&ranked, &schedule, schedule_epoch)?;

    let row_of: std::collections::HashMap<u64, usize> =
        set.sample_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut weights = vec![0.0; n];
    for r in records {
        let row = row_of[&r.sample_id];
        weights[row] = match cfg.mode {
            TrainMode::TopkOnly => {
                if r.group == GroupIndex::Group(1) {
                    1.0
                } else {
                    0.0
                }
            }
            _ => r.weight,
        };
    }
    Ok((labels, weights))
}

fn perturbed(features: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return features.to_vec();
    }
    features
        .iter()
        .map(|&v| {
            let eps: f64 = StandardNormal.sample(rng);
            v + sigma * eps
        })
        .collect()
}

/// Runs weighted self-training from the set's assignments.
///
/// With `truth`, every epoch records ACC/NMI/ARI of the model's predictions.
pub fn train(
    set: &EmbeddingSet,
    truth: Option<&[usize]>,
    ranking: &RankingConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_from(set, truth, ranking, cfg, TrainState::initial(set, cfg))
}

/// Continues training from `state` up to `cfg.epochs`.
pub fn train_from(
    set: &EmbeddingSet,
    truth: Option<&[usize]>,
    ranking: &RankingConfig,
    cfg: &TrainConfig,
    state: TrainState,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ranking.validate()?;
    if let Some(v) = validate(set).into_iter().next() {
        return Err(Error::input("embedding_set", v.to_string()));
    }
    if let Some(t) = truth {
        if t.len() != set.len() {
            return Err(Error::LengthMismatch {
                left: set.len(),
                right: t.len(),
            });
        }
    }
    let TrainState {
        epoch: start_epoch,
        mut model,
        mut velocity,
        mut assignments,
        mut rng,
    } = state;
    if model.dim != set.dim || model.classes != set.num_clusters {
        return Err(Error::DimensionMismatch {
            expected: set.dim,
            got: model.dim,
        });
    }
    if velocity.len() != model.params.len() {
        return Err(Error::input("velocity", format!("{} entries for {} parameters", velocity.len(), model.params.len())));
    }
    if assignments.len() != set.len() || assignments.iter().any(|&a| a >= set.num_clusters) {
        return Err(Error::input("assignments", "state assignments do not match the embedding set"));
    }

    let n = set.len();
    let dim = set.dim;
    let augment = cfg.augment();
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    let mut history = Vec::with_capacity(cfg.epochs.saturating_sub(start_epoch));
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_x = Vec::with_capacity(cfg.batch_size * dim);
    let mut batch_y = Vec::with_capacity(cfg.batch_size);
    let mut batch_w = Vec::with_capacity(cfg.batch_size);

    for epoch in start_epoch..cfg.epochs {
        let rerank = epoch % cfg.rerank_every == 0;
        if rerank && epoch > 0 {
            let weak = perturbed(&set.features, 0.25 * cfg.augment_sigma, &mut rng);
            assignments = pseudo_labels(&model, &weak)?;
        }
        if cfg.mode == TrainMode::Icsr {
            // groups are fixed between reranks but weights follow the epoch
            (labels, weights) = build_targets(set, &assignments, ranking, cfg, epoch)?;
        } else if rerank || epoch == start_epoch {
            let ranked_at = epoch - epoch % cfg.rerank_every;
            (labels, weights) = build_targets(set, &assignments, ranking, cfg, ranked_at)?;
        }

        let lr = match cfg.lr_drop_epoch {
            Some(drop) if epoch >= drop => cfg.learning_rate * 0.1,
            _ => cfg.learning_rate,
        };
        // reset first so the permutation depends on the generator alone
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            batch_w.clear();
            for &i in chunk {
                batch_x.extend_from_slice(set.row(i));
                batch_y.push(labels[i]);
                batch_w.push(weights[i]);
            }
            let batch = LossBatch {
                features: &batch_x,
                labels: &batch_y,
                weights: &batch_w,
            };
            let weight_sum: f64 = batch_w.iter().sum();
            if weight_sum <= 0.0 {
                continue;
            }
            let (loss, grad) = lct_loss(&model, batch, augment, &mut rng)?;
            epoch_loss += loss * chunk.len() as f64;
            // step on the weighted mean so the step size does not shrink
            // with the share of down-weighted samples
            let scale = chunk.len() as f64 / weight_sum;
            for ((p, v), g) in model.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v + scale * g;
                *p -= lr * *v;
            }
        }
        if !model.is_finite() {
            return Err(Error::input("model", format!("parameters diverged at epoch {epoch}")));
        }

        let report = match truth {
            Some(t) => {
                let pred = pseudo_labels(&model, &set.features)?;
                Some(evaluate(&pred, t, None, &[])?)
            }
            None => None,
        };
        let mean_weight = weights.iter().sum::<f64>() / n as f64;
        debug!(
            "epoch {epoch}: loss {:.5} mean weight {:.4} acc {:?}",
            epoch_loss / n as f64,
            mean_weight,
            report.as_ref().map(|r| r.acc)
        );
        history.push(EpochRecord {
            epoch,
            loss: epoch_loss / n as f64,
            mean_weight,
            report,
        });
    }

    let final_assignments = pseudo_labels(&model, &set.features)?;
    Ok(TrainOutcome {
        state: TrainState {
            epoch: cfg.epochs.max(start_epoch),
            model,
            velocity,
            assignments,
            rng,
        },
        history,
        assignments: final_assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, BenchmarkSpec};

    fn random_model(dim: usize, classes: usize, hidden: Option<usize>, seed: u64) -> ClassifierModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = ClassifierModel::init(dim, classes, hidden, &mut rng);
        for p in &mut m.params {
            *p += rng.random_range(-0.3..0.3);
        }
        m
    }

    fn random_features(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = ClassifierModel::zeros(3, 4, None);
        let p = forward(&m, &random_features(5, 3, 0)).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert_eq!(pseudo_labels(&m, &random_features(5, 3, 0)).unwrap(), vec![0; 5]);
    }

    #[test]
    fn rows_are_probability_simplices() {
        for hidden in [None, Some(6)] {
            let m = random_model(4, 3, hidden, 1);
            let p = forward(&m, &random_features(50, 4, 2)).unwrap();
            for row in p.chunks(3) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }

    #[test]
    fn bias_shift_leaves_probabilities_unchanged() {
        let m = random_model(4, 3, None, 3);
        let mut shifted = m.clone();
        let bias = shifted.layers()[0].bias;
        shifted.params[bias..bias + 3].iter_mut().for_each(|b| *b += 7.5);
        let x = random_features(10, 4, 4);
        let (a, b) = (forward(&m, &x).unwrap(), forward(&shifted, &x).unwrap());
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = ClassifierModel::zeros(3, 2, None);
        assert!(matches!(forward(&m, &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn argmax_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 2..6 {
            let m = random_model(3, k, Some(4), k as u64);
            let x: Vec<f64> = (0..150).map(|_| rng.random_range(-3.0..3.0)).collect();
            let probs = forward(&m, &x).unwrap();
            let labels = pseudo_labels(&m, &x).unwrap();
            for (row, &l) in probs.chunks(k).zip(&labels) {
                let mut best = 0;
                for j in 1..k {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                assert_eq!(l, best);
            }
        }
        assert_eq!(argmax(&[0.0, 5.0, 5.0]), 1);
        assert_eq!(argmax(&[-1.0, -2.0, 3.0]), 2);
    }

    #[test]
    fn zero_noise_loss_is_self_cross_entropy() {
        let m = random_model(4, 3, None, 6);
        let x = random_features(10, 4, 7);
        let labels = pseudo_labels(&m, &x).unwrap();
        let probs = forward(&m, &x).unwrap();
        let want: f64 = probs
            .chunks(3)
            .zip(&labels)
            .map(|(row, &l)| -row[l].ln())
            .sum::<f64>()
            / 10.0;
        let batch = LossBatch { features: &x, labels: &labels, weights: &[1.0; 10] };
        let (loss, _) = lct_loss(&m, batch, AugmentParams::none(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((loss - want).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_annihilate() {
        let m = random_model(4, 3, Some(5), 8);
        let x = random_features(10, 4, 9);
        let batch = LossBatch { features: &x, labels: &[1; 10], weights: &[0.0; 10] };
        let aug = AugmentParams { sigma: 0.3, pairs: 2 };
        let (loss, grad) = lct_loss(&m, batch, aug, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    pub(crate) fn finite_difference_max_rel_error(hidden: Option<usize>, sigma: f64) -> f64 {
        let m = random_model(4, 3, hidden, 10);
        let x = random_features(10, 4, 11);
        let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let weights: Vec<f64> = (0..10).map(|i| 0.1 + 0.09 * i as f64).collect();
        let aug = AugmentParams { sigma, pairs: 3 };
        let eval = |model: &ClassifierModel| {
            let batch = LossBatch { features: &x, labels: &labels, weights: &weights };
            lct_loss(model, batch, aug, &mut ChaCha8Rng::seed_from_u64(99)).unwrap()
        };
        let (_, grad) = eval(&m);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..m.params.len() {
            let mut plus = m.clone();
            plus.params[i] += h;
            let mut minus = m.clone();
            minus.params[i] -= h;
            let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
            let scale = grad[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((grad[i] - numeric).abs() / scale);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for hidden in [None, Some(5)] {
            for sigma in [0.0, 0.4] {
                let err = finite_difference_max_rel_error(hidden, sigma);
                assert!(err < 1e-4, "hidden {hidden:?} sigma {sigma}: {err}");
            }
        }
    }

    #[test]
    fn loss_decreases_on_fixed_labels() {
        let m0 = random_model(4, 3, None, 12);
        let x = random_features(60, 4, 13);
        let labels: Vec<usize> = x.chunks(4).map(|r| if r[0] > 0.0 { 0 } else if r[1] > 0.0 { 1 } else { 2 }).collect();
        let weights = vec![1.0; 60];
        let batch = LossBatch { features: &x, labels: &labels, weights: &weights };
        let mut m = m0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (first, _) = lct_loss(&m, batch, AugmentParams::none(), &mut rng).unwrap();
        for _ in 0..20 {
            let (_, g) = lct_loss(&m, batch, AugmentParams::none(), &mut rng).unwrap();
            m.params.iter_mut().zip(&g).for_each(|(p, g)| *p -= 0.05 * g);
        }
        let (last, _) = lct_loss(&m, batch, AugmentParams::none(), &mut rng).unwrap();
        assert!(first >= 0.0 && last < first);
    }

    fn small_benchmark(seed: u64) -> (EmbeddingSet, Vec<usize>) {
        generate(&BenchmarkSpec {
            num_classes: 3,
            per_cluster: 60,
            dim: 6,
            ..BenchmarkSpec::standard(seed)
        })
        .unwrap()
    }

    #[test]
    fn training_is_reproducible() {
        let (set, truth) = small_benchmark(1);
        let cfg = TrainConfig { epochs: 15, rerank_every: 5, ..TrainConfig::default() };
        let ranking = RankingConfig::default();
        let a = train(&set, Some(&truth), &ranking, &cfg).unwrap();
        let b = train(&set, Some(&truth), &ranking, &cfg).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(
            a.final_report().unwrap().acc.to_bits(),
            b.final_report().unwrap().acc.to_bits()
        );
        assert_eq!(a.history.len(), 15);
    }

    #[test]
    fn unweighted_mode_uses_unit_weights() {
        let (set, _) = small_benchmark(2);
        let cfg = TrainConfig { mode: TrainMode::Unweighted, ..TrainConfig::default() };
        let (labels, weights) = build_targets(&set, &set.assignments, &RankingConfig::default(), &cfg, 0).unwrap();
        assert_eq!(labels, set.assignments);
        assert!(weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn topk_mode_keeps_only_first_group() {
        let (set, _) = small_benchmark(3);
        let cfg = TrainConfig { mode: TrainMode::TopkOnly, ..TrainConfig::default() };
        let (_, weights) = build_targets(&set, &set.assignments, &RankingConfig::default(), &cfg, 0).unwrap();
        // 15% of each 60-sample cluster
        assert_eq!(weights.iter().filter(|&&w| w == 1.0).count(), 27);
        assert_eq!(weights.iter().filter(|&&w| w == 0.0).count(), 180 - 27);
    }

    #[test]
    fn empty_cluster_is_skipped() {
        let (set, _) = small_benchmark(4);
        let cfg = TrainConfig::default();
        let collapsed: Vec<usize> = set.assignments.iter().map(|&c| c.min(1)).collect();
        let (labels, weights) = build_targets(&set, &collapsed, &RankingConfig::default(), &cfg, 0).unwrap();
        assert_eq!(labels, collapsed);
        assert_eq!(weights.len(), set.len());
    }

    #[test]
    fn invalid_train_config() {
        let bad = TrainConfig { rerank_every: 0, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig { field: "rerank_every", .. })));
        let bad = TrainConfig { beta0: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}
