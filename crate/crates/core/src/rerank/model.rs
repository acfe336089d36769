//! Logistic pair scorer `f(x) = sigmoid(w·x + b)` trained on the grouped
//! binary objective
//!
//! ```text
//! L(q, cand) = -ln f(q, d+) - Σ_{d- ∈ cand-} ln(1 - f(q, d-))
//! ```
//!
//! where `d+` is the gold entity and `cand-` the other candidates of the same
//! concept. Training minimizes the mean of `L` over groups by full-batch
//! gradient descent.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{group_features, FeatureVector, FEATURE_NAMES, N_FEATURES};
use super::pairs::{downsample_negatives, group_by_cui};
use super::TrainingPair;
use crate::corpus::Cui;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` inside the objective.
pub const PROB_EPS: f64 = 1e-7;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The grouped objective evaluated directly on scorer outputs.
pub fn objective(positive: f64, negatives: &[f64]) -> f64 {
    let clamp = |p: f64| p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let mut sum = NeumaierSum::default();
    sum.add(-clamp(positive).ln());
    for &p in negatives {
        sum.add(-(1.0 - clamp(p)).ln());
    }
    sum.total()
}

/// Compensated summation, so the accumulated total does not depend on how
/// rounding errors happen to fall.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Features of one concept's candidates with exactly one positive.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryGroup {
    pub cui: Cui,
    pub positive: FeatureVector,
    pub negatives: Vec<FeatureVector>,
}

impl QueryGroup {
    /// Builds a group from the pairs of one candidate list.
    pub fn from_pairs(pairs: &[&TrainingPair]) -> Result<Self> {
        let cui = pairs.first().map(|p| p.cui.clone()).ok_or(Error::EmptyCollection)?;
        let features = group_features(pairs.iter().copied());
        let mut positive = None;
        let mut negatives = Vec::new();
        for (pair, f) in pairs.iter().zip(features) {
            if pair.is_positive() {
                if positive.replace(f).is_some() {
                    return Err(Error::MultiplePositives(cui.to_string()));
                }
            } else {
                negatives.push(f);
            }
        }
        let positive = positive.ok_or_else(|| Error::GroupLacksPositive(cui.to_string()))?;
        Ok(QueryGroup {
            cui,
            positive,
            negatives,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub final_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negatives_per_group: Option<usize>,
    #[serde(default)]
    pub groups: usize,
}

/// `model.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub training_meta: TrainingMeta,
}

impl ScorerModel {
    pub fn from_params(params: &[f64; N_FEATURES + 1], meta: TrainingMeta) -> Self {
        ScorerModel {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights: params[..N_FEATURES].to_vec(),
            bias: params[N_FEATURES],
            training_meta: meta,
        }
    }

    fn params(&self) -> [f64; N_FEATURES + 1] {
        let mut p = [0.0; N_FEATURES + 1];
        p[..N_FEATURES].copy_from_slice(&self.weights);
        p[N_FEATURES] = self.bias;
        p
    }

    pub fn logit(&self, x: &FeatureVector) -> f64 {
        linear(&self.params(), x)
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn group_loss(&self, group: &QueryGroup) -> f64 {
        let negatives: Vec<f64> = group.negatives.iter().map(|x| self.predict(x)).collect();
        objective(self.predict(&group.positive), &negatives)
    }

    fn validate(&self) -> Result<()> {
        if self.weights.len() != N_FEATURES || self.feature_names.len() != N_FEATURES {
            return Err(Error::InvalidArgument(format!(
                "model has {} weights, expected {N_FEATURES}",
                self.weights.len()
            )));
        }
        if self.feature_names.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b) {
            return Err(Error::InvalidArgument("model feature names do not match".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: ScorerModel = serde_json::from_slice(&std::fs::read(path)?)?;
        model.validate()?;
        Ok(model)
    }
}

fn linear(params: &[f64; N_FEATURES + 1], x: &FeatureVector) -> f64 {
    params[..N_FEATURES]
        .iter()
        .zip(x.values())
        .map(|(w, v)| w * v)
        .sum::<f64>()
        + params[N_FEATURES]
}

/// The objective for one group of pairs (exactly one labelled positive).
pub fn loss(model: &ScorerModel, query_group: &[TrainingPair]) -> Result<f64> {
    let refs: Vec<&TrainingPair> = query_group.iter().collect();
    Ok(model.group_loss(&QueryGroup::from_pairs(&refs)?))
}

/// Mean group loss and its gradient with respect to `[w.., b]`. Where the
/// probability clamp is active the objective is flat, so those terms add no
/// gradient.
pub fn mean_loss_and_gradient(params: &[f64; N_FEATURES + 1], groups: &[QueryGroup]) -> (f64, [f64; N_FEATURES + 1]) {
    let mut loss = NeumaierSum::default();
    let mut grad = [NeumaierSum::default(); N_FEATURES + 1];
    let mut accumulate = |x: &FeatureVector, positive: bool| {
        let p = sigmoid(linear(params, x));
        let clamped = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        let active = clamped == p;
        let (term, dz) = if positive {
            (-clamped.ln(), if active { p - 1.0 } else { 0.0 })
        } else {
            (-(1.0 - clamped).ln(), if active { p } else { 0.0 })
        };
        loss.add(term);
        if dz != 0.0 {
            for (g, v) in grad.iter_mut().zip(x.values()) {
                g.add(dz * v);
            }
            grad[N_FEATURES].add(dz);
        }
    };
    for g in groups {
        accumulate(&g.positive, true);
        for x in &g.negatives {
            accumulate(x, false);
        }
    }
    let n = groups.len().max(1) as f64;
    let mut out = [0.0; N_FEATURES + 1];
    for (o, g) in out.iter_mut().zip(&grad) {
        *o = g.total() / n;
    }
    (loss.total() / n, out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Sample this many negatives per group (seeded) instead of using all.
    pub negatives_per_group: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 500,
            learning_rate: 0.5,
            seed: 13,
            negatives_per_group: None,
        }
    }
}

/// Full-batch gradient descent from zero weights and zero bias.
pub fn train_scorer(groups: &[QueryGroup], options: &TrainOptions) -> Result<ScorerModel> {
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no training groups".into()));
    }
    if options.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    if !(options.learning_rate > 0.0 && options.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let mut params = [0.0; N_FEATURES + 1];
    for _ in 0..options.epochs {
        let (_, grad) = mean_loss_and_gradient(&params, groups);
        for (p, g) in params.iter_mut().zip(grad) {
            *p -= options.learning_rate * g;
        }
    }
    let (final_loss, _) = mean_loss_and_gradient(&params, groups);
    Ok(ScorerModel::from_params(
        &params,
        TrainingMeta {
            epochs: options.epochs,
            learning_rate: options.learning_rate,
            seed: options.seed,
            final_loss,
            negatives_per_group: options.negatives_per_group,
            groups: groups.len(),
        },
    ))
}

/// Turns labelled pairs into training groups. Concepts whose gold entity was
/// not retrieved have no positive and are skipped; the count of skipped
/// groups is returned alongside.
pub fn training_groups(pairs: &[TrainingPair], options: &TrainOptions) -> Result<(Vec<QueryGroup>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut groups = Vec::new();
    let mut skipped = 0;
    for (_, members) in group_by_cui(pairs) {
        if !members.iter().any(|p| p.is_positive()) {
            skipped += 1;
            continue;
        }
        // normalization uses the full list even when negatives are sampled
        let features = group_features(members.iter().copied());
        let kept = match options.negatives_per_group {
            Some(m) => downsample_negatives(&members, m, &mut rng),
            None => members.clone(),
        };
        let mut positive = None;
        let mut negatives = Vec::new();
        for (pair, f) in members.iter().zip(features) {
            if !kept.iter().any(|k| std::ptr::eq(*k, *pair)) {
                continue;
            }
            if pair.is_positive() {
                if positive.replace(f).is_some() {
                    return Err(Error::MultiplePositives(pair.cui.to_string()));
                }
            } else {
                negatives.push(f);
            }
        }
        groups.push(QueryGroup {
            cui: members[0].cui.clone(),
            positive: positive.expect("checked above"),
            negatives,
        });
    }
    Ok((groups, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_objective_values() {
        assert!((objective(0.9, &[0.1, 0.1]) - 0.316082).abs() < 1e-6);
        assert!((objective(0.5, &[0.5]) - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!(objective(1.0 - 1e-12, &[1e-12, 1e-12]) < 1e-6);
        assert!(objective(0.0, &[]).is_finite());
    }

    #[test]
    fn objective_decreases_as_positive_improves() {
        let neg = [0.3, 0.2];
        assert!(objective(0.6, &neg) < objective(0.4, &neg));
        assert!(objective(0.4, &neg) > 0.0);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(-1000.0) < 1e-300);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    fn fv(first: f64) -> FeatureVector {
        let mut v = [0.0; N_FEATURES];
        v[0] = first;
        FeatureVector(v)
    }

    fn separable(n: usize) -> Vec<QueryGroup> {
        (0..n)
            .map(|i| QueryGroup {
                cui: format!("C{:07}", i).parse().unwrap(),
                positive: fv(1.0),
                negatives: vec![fv(0.0); 3],
            })
            .collect()
    }

    #[test]
    fn rejects_bad_options() {
        let g = separable(2);
        let zero_epochs = TrainOptions {
            epochs: 0,
            ..TrainOptions::default()
        };
        assert!(train_scorer(&g, &zero_epochs).is_err());
        assert!(train_scorer(&[], &TrainOptions::default()).is_err());
        let bad_lr = TrainOptions {
            learning_rate: 0.0,
            ..TrainOptions::default()
        };
        assert!(train_scorer(&g, &bad_lr).is_err());
    }

    #[test]
    fn training_is_bit_reproducible() {
        let g = separable(5);
        let a = train_scorer(&g, &TrainOptions::default()).unwrap();
        let b = train_scorer(&g, &TrainOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.training_meta.final_loss < 0.1);
        assert!(a.predict(&fv(1.0)) > a.predict(&fv(0.0)));
    }

    #[test]
    fn model_file_round_trip() {
        let model = train_scorer(&separable(2), &TrainOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        assert_eq!(ScorerModel::load(&path).unwrap(), model);
    }
}
