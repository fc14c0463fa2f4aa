//! Logistic-regression initial confidence.
//!
//! The model maps a normalized flow vector to `P(anomalous | x)` through a
//! sigmoid over an affine score. Training is full-batch gradient descent on
//! mean binary cross-entropy from a zero start, so a given dataset and config
//! always produce the same weights.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{LabeledInstance, NormalizationStats};

/// Rows per parallel gradient chunk. Partial sums are combined in chunk order
/// so results do not depend on thread scheduling.
const GRADIENT_CHUNK: usize = 2048;

#[derive(Debug, thiserror::Error)]
pub enum ConfidenceError {
    #[error("training data is empty")]
    EmptyData,
    #[error("training data contains only label {0}; both classes are required")]
    SingleClass(u8),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("feature vector has {found} components, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model was trained with normalizer {model}, but normalizer {given} was supplied")]
    FingerprintMismatch { model: String, given: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once every gradient component is at most this in magnitude.
    pub convergence_tolerance: f64,
    pub seed: u64,
    pub l2_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_epochs: 5000,
            convergence_tolerance: 1e-6,
            seed: 42,
            l2_penalty: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfidenceError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ConfidenceError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(ConfidenceError::InvalidConfig("max_epochs must be positive".into()));
        }
        if self.convergence_tolerance.is_nan() || self.convergence_tolerance <= 0.0 {
            return Err(ConfidenceError::InvalidConfig(
                "convergence_tolerance must be positive".into(),
            ));
        }
        if self.l2_penalty.is_nan() || self.l2_penalty < 0.0 {
            return Err(ConfidenceError::InvalidConfig("l2_penalty must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    #[serde(default)]
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(default)]
    pub normalizer_fingerprint: String,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LogisticModel,
    /// Objective value before each parameter update, plus the final value.
    pub loss_history: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history is never empty")
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln σ(z) + (1-y) ln(1-σ(z))]` without forming σ(z).
fn cross_entropy(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

/// Objective value and gradient at `(weights, bias)`.
///
/// The objective is mean cross-entropy plus `l2/2 * |w|^2`; the bias is not
/// penalized. Returns `(loss, grad_w, grad_b)`.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    data: &[LabeledInstance],
    l2_penalty: f64,
) -> (f64, Vec<f64>, f64) {
    let d = weights.len();
    let partials: Vec<(f64, Vec<f64>, f64)> = data
        .par_chunks(GRADIENT_CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for inst in chunk {
                let z = dot(weights, &inst.x) + bias;
                let y = f64::from(inst.y);
                loss += cross_entropy(z, y);
                let residual = sigmoid(z) - y;
                for (g, xi) in gw.iter_mut().zip(&inst.x) {
                    *g += residual * xi;
                }
                gb += residual;
            }
            (loss, gw, gb)
        })
        .collect();

    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; d];
    let mut grad_b = 0.0;
    for (l, gw, gb) in partials {
        loss += l;
        for (acc, g) in grad_w.iter_mut().zip(gw) {
            *acc += g;
        }
        grad_b += gb;
    }
    loss /= n;
    grad_b /= n;
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2_penalty * w;
    }
    loss += 0.5 * l2_penalty * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad_w, grad_b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fit a logistic model by full-batch gradient descent.
pub fn train(data: &[LabeledInstance], cfg: &TrainConfig) -> Result<TrainOutcome, ConfidenceError> {
    cfg.validate()?;
    let first = data.first().ok_or(ConfidenceError::EmptyData)?;
    let d = first.x.len();
    if let Some(bad) = data.iter().find(|i| i.x.len() != d) {
        return Err(ConfidenceError::DimensionMismatch {
            expected: d,
            found: bad.x.len(),
        });
    }
    if data.iter().all(|i| i.y == first.y) {
        return Err(ConfidenceError::SingleClass(first.y));
    }

    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    let mut history = Vec::new();
    let mut converged = false;
    let mut epochs = 0;

    loop {
        let (loss, grad_w, grad_b) = loss_and_gradient(&weights, bias, data, cfg.l2_penalty);
        if !loss.is_finite() {
            return Err(ConfidenceError::NonFinite { epoch: epochs });
        }
        history.push(loss);
        let max_grad = grad_w.iter().fold(grad_b.abs(), |m, g| m.max(g.abs()));
        if max_grad <= cfg.convergence_tolerance {
            converged = true;
            break;
        }
        if epochs == cfg.max_epochs {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= cfg.learning_rate * g;
        }
        bias -= cfg.learning_rate * grad_b;
        epochs += 1;
    }

    Ok(TrainOutcome {
        model: LogisticModel {
            feature_names: Vec::new(),
            weights,
            bias,
            normalizer_fingerprint: String::new(),
        },
        loss_history: history,
        epochs,
        converged,
    })
}

impl LogisticModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self {
            feature_names: Vec::new(),
            weights,
            bias,
            normalizer_fingerprint: String::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// Attach feature names and the normalizer fingerprint.
    pub fn bind_normalizer(&mut self, stats: &NormalizationStats) -> Result<(), ConfidenceError> {
        if stats.len() != self.weights.len() {
            return Err(ConfidenceError::DimensionMismatch {
                expected: self.weights.len(),
                found: stats.len(),
            });
        }
        self.feature_names = stats.feature_names().map(str::to_string).collect();
        self.normalizer_fingerprint = stats.fingerprint();
        Ok(())
    }

    /// Confirm `stats` is the normalizer this model was trained against.
    pub fn check_normalizer(&self, stats: &NormalizationStats) -> Result<(), ConfidenceError> {
        if stats.len() != self.weights.len() {
            return Err(ConfidenceError::DimensionMismatch {
                expected: self.weights.len(),
                found: stats.len(),
            });
        }
        let given = stats.fingerprint();
        if !self.normalizer_fingerprint.is_empty() && self.normalizer_fingerprint != given {
            return Err(ConfidenceError::FingerprintMismatch {
                model: self.normalizer_fingerprint.clone(),
                given,
            });
        }
        Ok(())
    }

    /// Anomaly probability `1 / (1 + exp(-w·x - b))`.
    pub fn score(&self, x: &[f64]) -> Result<f64, ConfidenceError> {
        if x.len() != self.weights.len() {
            return Err(ConfidenceError::DimensionMismatch {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        Ok(sigmoid(dot(&self.weights, x) + self.bias))
    }

    /// Fraction of instances whose thresholded score (>= 0.5) matches the label.
    pub fn accuracy(&self, data: &[LabeledInstance]) -> Result<f64, ConfidenceError> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for inst in data {
            let predicted = u8::from(self.score(&inst.x)? >= 0.5);
            correct += usize::from(predicted == inst.y);
        }
        Ok(correct as f64 / data.len() as f64)
    }

    pub fn mean_loss(&self, data: &[LabeledInstance]) -> f64 {
        loss_and_gradient(&self.weights, self.bias, data, 0.0).0
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfidenceError> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|source| ConfidenceError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfidenceError> {
        let text = fs::read_to_string(path).map_err(|source| ConfidenceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let model: Self = serde_json::from_str(&text)?;
        if let Some(bad) = model.weights.iter().chain([&model.bias]).find(|w| !w.is_finite()) {
            return Err(ConfidenceError::InvalidConfig(format!("non-finite parameter {bad}")));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::AttackCategory;
    use proptest::prelude::*;

    fn inst(id: u64, x: Vec<f64>, y: u8) -> LabeledInstance {
        LabeledInstance {
            id,
            x,
            y,
            category: if y == 1 { AttackCategory::Generic } else { AttackCategory::Normal },
        }
    }

    #[test]
    fn zero_model_scores_half() {
        let m = LogisticModel::new(vec![0.0; 3], 0.0);
        assert_eq!(m.score(&[0.1, 0.9, 0.4]).unwrap(), 0.5);
    }

    #[test]
    fn known_sigmoid_value() {
        // 1 / (1 + e^-1)
        let m = LogisticModel::new(vec![2.0], -1.0);
        assert!((m.score(&[1.0]).unwrap() - 0.731_058_578_630_004_9).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch() {
        let m = LogisticModel::new(vec![1.0, 2.0], 0.0);
        assert!(matches!(
            m.score(&[1.0]),
            Err(ConfidenceError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn single_class_rejected() {
        let data = vec![inst(0, vec![0.1], 1), inst(1, vec![0.2], 1)];
        assert!(matches!(train(&data, &TrainConfig::default()), Err(ConfidenceError::SingleClass(1))));
        assert!(matches!(train(&[], &TrainConfig::default()), Err(ConfidenceError::EmptyData)));
    }

    #[test]
    fn non_finite_loss_reports_epoch() {
        let data = vec![inst(0, vec![1e10], 0), inst(1, vec![-1e10], 1)];
        let cfg = TrainConfig {
            learning_rate: 1e300,
            max_epochs: 10,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&data, &cfg), Err(ConfidenceError::NonFinite { epoch: 1 })));
    }

    #[test]
    fn identical_inputs_balanced_labels() {
        let data: Vec<_> = (0..40).map(|i| inst(i, vec![0.37, 0.8], (i % 2) as u8)).collect();
        let out = train(&data, &TrainConfig::default()).unwrap();
        assert!((out.model.score(&[0.37, 0.8]).unwrap() - 0.5).abs() <= 0.01);
    }

    #[test]
    fn l2_gradient_includes_penalty() {
        let data = vec![inst(0, vec![0.0], 0), inst(1, vec![0.0], 1)];
        let (_, gw, _) = loss_and_gradient(&[2.0], 0.0, &data, 0.5);
        assert!((gw[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn save_load_bit_identical() {
        let data: Vec<_> = (0..50)
            .map(|i| {
                let x = i as f64 / 50.0;
                inst(i, vec![x, 1.0 - x * x], u8::from(x > 0.4))
            })
            .collect();
        let model = train(&data, &TrainConfig { max_epochs: 200, ..TrainConfig::default() })
            .unwrap()
            .model;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let back = LogisticModel::load(&path).unwrap();
        for d in &data {
            assert_eq!(back.score(&d.x).unwrap().to_bits(), model.score(&d.x).unwrap().to_bits());
        }
    }

    proptest! {
        #[test]
        fn antisymmetry(w in proptest::collection::vec(-5.0f64..5.0, 4), b in -5.0f64..5.0,
                        x in proptest::collection::vec(0.0f64..1.0, 4)) {
            let pos = LogisticModel::new(w.clone(), b);
            let neg = LogisticModel::new(w.iter().map(|v| -v).collect(), -b);
            let s = pos.score(&x).unwrap() + neg.score(&x).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_positive_weights(w in proptest::collection::vec(-3.0f64..3.0, 3), b in -2.0f64..2.0,
                                         x in proptest::collection::vec(0.0f64..1.0, 3),
                                         idx in 0usize..3, bump in 0.0f64..1.0) {
            let m = LogisticModel::new(w.clone(), b);
            let mut y = x.clone();
            y[idx] += bump;
            let (a, c) = (m.score(&x).unwrap(), m.score(&y).unwrap());
            if w[idx] > 0.0 { prop_assert!(c >= a); } else { prop_assert!(c <= a); }
        }
    }
}
