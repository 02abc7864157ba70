//! Linear softmax router trained to classify the empirically best action.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{Action, NUM_ACTIONS};
use crate::logstore::LogDataset;
use crate::slo::SloProfile;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("feature dimension mismatch: model expects {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    NonFinite { epoch: usize, loss: f64 },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model schema version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    /// Plain cross-entropy on the best-action label.
    #[serde(rename = "ce")]
    ArgmaxCe,
    /// Cross-entropy weighted by the best/second-best reward margin.
    #[serde(rename = "ce-wt")]
    ArgmaxCeWt,
}

impl Objective {
    pub fn label(self) -> &'static str {
        match self {
            Objective::ArgmaxCe => "Argmax-CE",
            Objective::ArgmaxCeWt => "Argmax-CE-WT",
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Objective::ArgmaxCe => "ce",
            Objective::ArgmaxCeWt => "ce-wt",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ce" => Ok(Objective::ArgmaxCe),
            "ce-wt" => Ok(Objective::ArgmaxCeWt),
            other => Err(format!("unknown objective {other:?} (expected ce or ce-wt)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, epochs: 200, l2: 1e-4, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(PolicyError::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(PolicyError::Config(format!("l2 must be >= 0, got {}", self.l2)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyModel {
    pub schema_version: u32,
    pub feature_dim: usize,
    pub objective: Objective,
    pub profile: String,
    pub seed: u64,
    /// Row-major `NUM_ACTIONS x feature_dim`.
    pub weights: Vec<f64>,
    pub bias: [f64; NUM_ACTIONS],
    pub loss_trace: Vec<f64>,
    #[serde(default)]
    pub corpus_hash: String,
    #[serde(default)]
    pub config_hash: String,
}

/// Gradient of the loss with respect to the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f64>,
    pub bias: [f64; NUM_ACTIONS],
}

/// One training example.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a [f64],
    pub label: usize,
    pub weight: f64,
}

/// Argmax with ties to the lowest index, plus the gap to the runner-up.
pub fn label_best_action(rewards: &[f64; NUM_ACTIONS]) -> (Action, f64) {
    let mut best = 0;
    for i in 1..NUM_ACTIONS {
        if rewards[i] > rewards[best] {
            best = i;
        }
    }
    let second = (0..NUM_ACTIONS)
        .filter(|&i| i != best)
        .map(|i| rewards[i])
        .fold(f64::NEG_INFINITY, f64::max);
    (Action::ALL[best], rewards[best] - second)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

impl PolicyModel {
    pub fn zeros(feature_dim: usize, objective: Objective, profile: &str, seed: u64) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            feature_dim,
            objective,
            profile: profile.to_string(),
            seed,
            weights: vec![0.0; NUM_ACTIONS * feature_dim],
            bias: [0.0; NUM_ACTIONS],
            loss_trace: Vec::new(),
            corpus_hash: String::new(),
            config_hash: String::new(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), PolicyError> {
        if x.len() != self.feature_dim {
            return Err(PolicyError::Dimension { expected: self.feature_dim, found: x.len() });
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<[f64; NUM_ACTIONS], PolicyError> {
        self.check_dim(x)?;
        let mut z = self.bias;
        for (a, row) in self.weights.chunks_exact(self.feature_dim).enumerate() {
            z[a] += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        Ok(z)
    }

    pub fn forward_softmax(&self, x: &[f64]) -> Result<[f64; NUM_ACTIONS], PolicyError> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Greedy action; ties go to the lowest id.
    pub fn predict_action(&self, x: &[f64]) -> Result<Action, PolicyError> {
        let p = self.forward_softmax(x)?;
        Ok(Action::ALL[argmax(&p)])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Max-subtracted softmax.
pub fn softmax(z: &[f64; NUM_ACTIONS]) -> [f64; NUM_ACTIONS] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; NUM_ACTIONS];
    let mut sum = 0.0;
    for (pi, zi) in p.iter_mut().zip(z) {
        *pi = (zi - m).exp();
        sum += *pi;
    }
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

/// Weighted mean cross-entropy plus `(l2/2)*|W|^2` (bias unregularized).
pub fn ce_loss_and_grad(model: &PolicyModel, batch: &[Example<'_>], l2: f64) -> Result<(f64, Gradients), PolicyError> {
    let d = model.feature_dim;
    let mut grad = Gradients { weights: vec![0.0; NUM_ACTIONS * d], bias: [0.0; NUM_ACTIONS] };
    let total_w: f64 = batch.iter().map(|e| e.weight).sum();
    let mut data_loss = 0.0;
    if total_w > 0.0 {
        for ex in batch {
            let z = model.logits(ex.features)?;
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            data_loss += ex.weight * (lse - z[ex.label]);
            let scale = ex.weight / total_w;
            if scale == 0.0 {
                continue;
            }
            for (a, &za) in z.iter().enumerate() {
                let p = (za - lse).exp();
                let delta = scale * (p - if a == ex.label { 1.0 } else { 0.0 });
                grad.bias[a] += delta;
                let row = &mut grad.weights[a * d..(a + 1) * d];
                for (g, x) in row.iter_mut().zip(ex.features) {
                    *g += delta * x;
                }
            }
        }
        data_loss /= total_w;
    }
    let mut reg = 0.0;
    for (g, w) in grad.weights.iter_mut().zip(&model.weights) {
        reg += w * w;
        *g += l2 * w;
    }
    Ok((data_loss + 0.5 * l2 * reg, grad))
}

/// Per-example weights: all ones for CE; margins rescaled to mean 1 for CE-WT,
/// falling back to ones when every margin is zero.
pub fn example_weights(objective: Objective, margins: &[f64]) -> Vec<f64> {
    match objective {
        Objective::ArgmaxCe => vec![1.0; margins.len()],
        Objective::ArgmaxCeWt => {
            let mean = margins.iter().sum::<f64>() / margins.len().max(1) as f64;
            // Equal margins map to exactly 1, not to m / mean(m) with rounding.
            let all_equal = margins.windows(2).all(|w| w[0] == w[1]);
            if mean > 0.0 && !all_equal {
                margins.iter().map(|m| m / mean).collect()
            } else {
                vec![1.0; margins.len()]
            }
        }
    }
}

/// Labeled training data derived from a log under one profile.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub margins: Vec<f64>,
}

impl LabeledSet {
    pub fn from_log(log: &LogDataset, profile: &SloProfile) -> Self {
        let mut set = LabeledSet { features: Vec::new(), labels: Vec::new(), margins: Vec::new() };
        for q in &log.questions {
            let (best, margin) = label_best_action(&q.rewards(profile));
            set.features.push(q.features.clone());
            set.labels.push(best.id() as usize);
            set.margins.push(margin);
        }
        set
    }
}

/// Per-feature mean and scale; constant features keep scale 1.
fn feature_moments(features: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for f in features {
        for ((v, x), m) in var.iter_mut().zip(f).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|v| {
            // Only wide columns are rescaled; dividing the sparse hashed
            // dimensions by their small spread makes them easy to memorize.
            (v / n).sqrt().max(1.0)
        })
        .collect();
    (mean, scale)
}

/// Full-batch gradient descent from a zero initialization.
///
/// Optimization runs on centered features, with columns wider than unit spread
/// scaled down (raw retrieval scores are an order of magnitude larger than the
/// embedding entries); the learned parameters are
/// folded back so the returned model applies directly to raw features. The
/// recorded loss trace is that of the standardized problem.
pub fn train_policy(
    data: &LabeledSet,
    feature_dim: usize,
    objective: Objective,
    profile_name: &str,
    config: &TrainConfig,
) -> Result<PolicyModel, PolicyError> {
    config.validate()?;
    if data.labels.is_empty() {
        return Err(PolicyError::EmptyTrainingSet);
    }
    if let Some(bad) = data.features.iter().find(|f| f.len() != feature_dim) {
        return Err(PolicyError::Dimension { expected: feature_dim, found: bad.len() });
    }
    let weights = example_weights(objective, &data.margins);
    let (mean, scale) = feature_moments(&data.features, feature_dim);
    let standardized: Vec<Vec<f64>> = data
        .features
        .iter()
        .map(|f| f.iter().zip(&mean).zip(&scale).map(|((x, m), s)| (x - m) / s).collect())
        .collect();
    let batch: Vec<Example<'_>> = standardized
        .iter()
        .zip(&data.labels)
        .zip(&weights)
        .map(|((f, &label), &weight)| Example { features: f, label, weight })
        .collect();

    let mut model = PolicyModel::zeros(feature_dim, objective, profile_name, config.seed);
    for epoch in 0..config.epochs {
        let (loss, grad) = ce_loss_and_grad(&model, &batch, config.l2)?;
        if !loss.is_finite() {
            return Err(PolicyError::NonFinite { epoch, loss });
        }
        model.loss_trace.push(loss);
        for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
            *w -= config.learning_rate * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
            *b -= config.learning_rate * g;
        }
        if !model.is_finite() {
            return Err(PolicyError::NonFinite { epoch, loss: f64::NAN });
        }
    }

    // w.(x - m)/s + b  ==  (w/s).x + (b - sum(w*m/s))
    for (a, row) in model.weights.chunks_exact_mut(feature_dim).enumerate() {
        let mut shift = 0.0;
        for ((w, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
            *w /= s;
            shift += *w * m;
        }
        model.bias[a] -= shift;
    }
    if !model.is_finite() {
        return Err(PolicyError::NonFinite { epoch: config.epochs, loss: f64::NAN });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_examples() {
        assert_eq!(label_best_action(&[0.1, 0.3, 0.3, -0.2, 0.0]), (Action::Guarded5, 0.0));
        assert_eq!(label_best_action(&[0.7; 5]), (Action::Guarded2, 0.0));
        assert_eq!(label_best_action(&[-1.0, -2.0, -3.0, -4.0, 5.0]), (Action::Refuse, 6.0));
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = PolicyModel::zeros(3, Objective::ArgmaxCe, "p", 0);
        let p = m.forward_softmax(&[1.0, -2.0, 0.5]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        assert_eq!(m.predict_action(&[1.0, -2.0, 0.5]).unwrap(), Action::Guarded2);
    }

    #[test]
    fn bias_dominated_prediction() {
        let mut m = PolicyModel::zeros(2, Objective::ArgmaxCe, "p", 0);
        m.bias = [10.0, 0.0, 0.0, 0.0, 0.0];
        let p = m.forward_softmax(&[0.3, 0.3]).unwrap();
        assert!(p[0] > 0.99);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(m.predict_action(&[0.3, 0.3]).unwrap(), Action::Guarded2);
    }

    #[test]
    fn softmax_shift_invariant() {
        let z = [0.3, -1.2, 2.0, 0.0, 0.7];
        let shifted = z.map(|v| v + 123.0);
        let (a, b) = (softmax(&z), softmax(&shifted));
        for i in 0..NUM_ACTIONS {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = PolicyModel::zeros(3, Objective::ArgmaxCe, "p", 0);
        assert_eq!(m.predict_action(&[1.0]), Err(PolicyError::Dimension { expected: 3, found: 1 }));
    }

    #[test]
    fn uniform_prediction_loss_is_ln5() {
        let m = PolicyModel::zeros(2, Objective::ArgmaxCe, "p", 0);
        let x = [0.5, -0.5];
        let batch = [Example { features: &x, label: 2, weight: 1.0 }, Example { features: &x, label: 4, weight: 1.0 }];
        let (loss, _) = ce_loss_and_grad(&m, &batch, 1e-4).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn equal_margins_reduce_to_ce() {
        assert_eq!(example_weights(Objective::ArgmaxCeWt, &[0.4, 0.4, 0.4]), vec![1.0; 3]);
        assert_eq!(example_weights(Objective::ArgmaxCeWt, &[0.0, 0.0]), vec![1.0; 2]);
        let w = example_weights(Objective::ArgmaxCeWt, &[1.0, 3.0]);
        assert_eq!(w, vec![0.5, 1.5]);
    }

    #[test]
    fn zero_epochs_gives_zero_model() {
        let data = LabeledSet { features: vec![vec![1.0, 0.0]], labels: vec![3], margins: vec![0.2] };
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let m = train_policy(&data, 2, Objective::ArgmaxCe, "p", &cfg).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
        assert_eq!(m.bias, [0.0; NUM_ACTIONS]);
    }

    #[test]
    fn diverging_training_aborts() {
        let data = LabeledSet {
            features: vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
            labels: vec![1, 2],
            margins: vec![1.0, 1.0],
        };
        let cfg = TrainConfig { learning_rate: 1e307, epochs: 50, ..TrainConfig::default() };
        assert!(matches!(
            train_policy(&data, 2, Objective::ArgmaxCe, "p", &cfg),
            Err(PolicyError::NonFinite { .. })
        ));
    }
}
