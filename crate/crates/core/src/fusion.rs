//! Bayesian fusion over class-conditional Beta likelihoods.
//!
//! Every channel carries one Beta density per class. Values in `[0, 1]` are
//! treated as conditionally independent draws given the class, so a set of
//! values yields a per-class log-likelihood, and the posterior probability of
//! the anomalous class follows from Bayes' rule with the model's priors.
//!
//! Two models are built from training data: one with a channel per normalized
//! flow feature, and one with a single channel over logistic confidence scores.
//! The latter fuses the confidences held in short-term memory at compression
//! time, with every confidence scored against that one shared channel.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::confidence::{sigmoid, LogisticModel};
use crate::ingest::LabeledInstance;

/// Boundary clamp applied to every value before evaluating a Beta density.
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Bounds applied to fitted shape parameters.
pub const MIN_SHAPE: f64 = 1e-3;
pub const MAX_SHAPE: f64 = 1e6;

/// Name of the single channel in the confidence fusion model.
pub const CONFIDENCE_CHANNEL: &str = "lr_confidence";

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("need at least 2 samples to fit a Beta distribution, got {0}")]
    TooFewSamples(usize),
    #[error("samples have zero variance")]
    ZeroVariance,
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("confidence fusion needs a single-channel model, this one has {0} channels")]
    NotSingleChannel(usize),
    #[error("cannot fuse an empty set of confidences")]
    EmptyConfidences,
    #[error("value {0} is not a finite number")]
    NonFiniteValue(f64),
    #[error("invalid fusion model: {0}")]
    Invalid(String),
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Confidence(#[from] crate::confidence::ConfidenceError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub const UNIFORM: BetaParams = BetaParams { alpha: 1.0, beta: 1.0 };

    pub fn new(alpha: f64, beta: f64) -> Result<Self, FusionError> {
        let p = Self { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), FusionError> {
        if self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite() {
            Ok(())
        } else {
            Err(FusionError::Invalid(format!(
                "Beta parameters must be positive and finite, got ({}, {})",
                self.alpha, self.beta
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    fn ln_beta_fn(&self) -> f64 {
        ln_gamma(self.alpha) + ln_gamma(self.beta) - ln_gamma(self.alpha + self.beta)
    }

    /// Log density at `x`, which must already lie strictly inside (0, 1).
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if *self == Self::UNIFORM {
            return 0.0;
        }
        (self.alpha - 1.0) * x.ln() + (self.beta - 1.0) * (-x).ln_1p() - self.ln_beta_fn()
    }
}

/// Method-of-moments Beta fit.
///
/// Samples are clamped to `[epsilon, 1 - epsilon]`, then
/// `alpha = m*c`, `beta = (1-m)*c` with `c = m(1-m)/v - 1`, using the
/// population variance `v`. Each shape is clamped to `[MIN_SHAPE, MAX_SHAPE]`.
pub fn fit_beta(samples: &[f64], epsilon: f64) -> Result<BetaParams, FusionError> {
    if samples.len() < 2 {
        return Err(FusionError::TooFewSamples(samples.len()));
    }
    if let Some(&bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(FusionError::NonFiniteValue(bad));
    }
    let n = samples.len() as f64;
    let clamp = |x: f64| x.clamp(epsilon, 1.0 - epsilon);
    let mean = samples.iter().map(|&x| clamp(x)).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|&x| {
            let d = clamp(x) - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    if var <= 0.0 {
        return Err(FusionError::ZeroVariance);
    }
    let common = mean * (1.0 - mean) / var - 1.0;
    Ok(BetaParams {
        alpha: (mean * common).clamp(MIN_SHAPE, MAX_SHAPE),
        beta: ((1.0 - mean) * common).clamp(MIN_SHAPE, MAX_SHAPE),
    })
}

/// [`fit_beta`], substituting the uniform density when the samples cannot
/// support a fit.
pub fn fit_beta_or_uniform(samples: &[f64], epsilon: f64) -> BetaParams {
    fit_beta(samples, epsilon).unwrap_or(BetaParams::UNIFORM)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub anomalous: BetaParams,
    pub normal: BetaParams,
}

impl Channel {
    pub fn uniform(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            anomalous: BetaParams::UNIFORM,
            normal: BetaParams::UNIFORM,
        }
    }

    fn params(&self, class: u8) -> &BetaParams {
        if class == 1 {
            &self.anomalous
        } else {
            &self.normal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub channels: Vec<Channel>,
    pub prior_anomalous: f64,
    pub epsilon: f64,
}

impl FusionModel {
    pub fn new(channels: Vec<Channel>, prior_anomalous: f64, epsilon: f64) -> Result<Self, FusionError> {
        let model = Self {
            channels,
            prior_anomalous,
            epsilon,
        };
        model.validate()?;
        Ok(model)
    }

    /// Single uninformative channel with the given prior.
    pub fn uninformative_confidence(prior_anomalous: f64) -> Self {
        Self {
            channels: vec![Channel::uniform(CONFIDENCE_CHANNEL)],
            prior_anomalous,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.prior_anomalous > 0.0 && self.prior_anomalous < 1.0) {
            return Err(FusionError::Invalid(format!(
                "prior_anomalous must be in (0, 1), got {}",
                self.prior_anomalous
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(FusionError::Invalid(format!(
                "epsilon must be in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        for c in &self.channels {
            c.anomalous.validate()?;
            c.normal.validate()?;
        }
        Ok(())
    }

    pub fn prior_normal(&self) -> f64 {
        1.0 - self.prior_anomalous
    }

    fn clamp(&self, x: f64) -> Result<f64, FusionError> {
        if x.is_finite() {
            Ok(x.clamp(self.epsilon, 1.0 - self.epsilon))
        } else {
            Err(FusionError::NonFiniteValue(x))
        }
    }

    /// `sum_i ln Beta(clamp(x_i); alpha_class_i, beta_class_i)`.
    pub fn log_likelihood(&self, values: &[f64], class: u8) -> Result<f64, FusionError> {
        if values.len() != self.channels.len() {
            return Err(FusionError::LengthMismatch {
                expected: self.channels.len(),
                found: values.len(),
            });
        }
        let mut total = 0.0;
        for (channel, &x) in self.channels.iter().zip(values) {
            total += channel.params(class).ln_pdf(self.clamp(x)?);
        }
        Ok(total)
    }

    /// Posterior probability of the anomalous class for one value per channel.
    pub fn posterior(&self, values: &[f64]) -> Result<f64, FusionError> {
        let l1 = self.log_likelihood(values, 1)?;
        let l0 = self.log_likelihood(values, 0)?;
        Ok(self.posterior_from_log_likelihoods(l1, l0))
    }

    fn posterior_from_log_likelihoods(&self, l1: f64, l0: f64) -> f64 {
        if l1 == l0 {
            return self.prior_anomalous;
        }
        let logit = (l1 + self.prior_anomalous.ln()) - (l0 + self.prior_normal().ln());
        sigmoid(logit)
    }

    /// Fuse a set of confidences, each scored against the model's single
    /// channel. Values are summed in sorted order so the result is exactly
    /// independent of input order.
    pub fn fuse_confidences(&self, confidences: &[f64]) -> Result<f64, FusionError> {
        if self.channels.len() != 1 {
            return Err(FusionError::NotSingleChannel(self.channels.len()));
        }
        if confidences.is_empty() {
            return Err(FusionError::EmptyConfidences);
        }
        let mut sorted = confidences
            .iter()
            .map(|&c| self.clamp(c))
            .collect::<Result<Vec<_>, _>>()?;
        sorted.sort_by(f64::total_cmp);
        let channel = &self.channels[0];
        let mut l1 = 0.0;
        let mut l0 = 0.0;
        for x in sorted {
            l1 += channel.anomalous.ln_pdf(x);
            l0 += channel.normal.ln_pdf(x);
        }
        Ok(self.posterior_from_log_likelihoods(l1, l0))
    }
}

/// Both fusion models, persisted together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionBundle {
    /// One channel per normalized flow feature.
    pub features: FusionModel,
    /// Single channel over logistic confidence scores.
    pub confidence: FusionModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionFitOptions {
    pub epsilon: f64,
    /// Overrides the empirical anomalous-class frequency.
    pub prior_anomalous: Option<f64>,
}

impl Default for FusionFitOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            prior_anomalous: None,
        }
    }
}

fn empirical_prior(labels: impl Iterator<Item = u8>) -> Result<f64, FusionError> {
    let (mut n, mut pos) = (0usize, 0usize);
    for y in labels {
        n += 1;
        pos += usize::from(y == 1);
    }
    if pos == 0 || pos == n {
        return Err(FusionError::SingleClass);
    }
    Ok(pos as f64 / n as f64)
}

/// Fit a per-feature channel model from labeled instances.
pub fn fit_feature_model(
    data: &[LabeledInstance],
    feature_names: &[String],
    opts: FusionFitOptions,
) -> Result<FusionModel, FusionError> {
    let prior = match opts.prior_anomalous {
        Some(p) => p,
        None => empirical_prior(data.iter().map(|i| i.y))?,
    };
    let mut channels = Vec::with_capacity(feature_names.len());
    for (j, name) in feature_names.iter().enumerate() {
        let mut anomalous = Vec::new();
        let mut normal = Vec::new();
        for inst in data {
            let x = *inst.x.get(j).ok_or(FusionError::LengthMismatch {
                expected: feature_names.len(),
                found: inst.x.len(),
            })?;
            if inst.y == 1 {
                anomalous.push(x);
            } else {
                normal.push(x);
            }
        }
        let fit = |s: &[f64]| match fit_beta(s, opts.epsilon) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("feature {name}: {e}; using uniform density");
                BetaParams::UNIFORM
            }
        };
        channels.push(Channel {
            name: name.clone(),
            anomalous: fit(&anomalous),
            normal: fit(&normal),
        });
    }
    FusionModel::new(channels, prior, opts.epsilon)
}

/// Fit the single confidence channel from `(score, label)` pairs.
pub fn fit_confidence_model(scored: &[(f64, u8)], opts: FusionFitOptions) -> Result<FusionModel, FusionError> {
    let prior = match opts.prior_anomalous {
        Some(p) => p,
        None => empirical_prior(scored.iter().map(|(_, y)| *y))?,
    };
    let anomalous: Vec<f64> = scored.iter().filter(|(_, y)| *y == 1).map(|(s, _)| *s).collect();
    let normal: Vec<f64> = scored.iter().filter(|(_, y)| *y != 1).map(|(s, _)| *s).collect();
    let channel = Channel {
        name: CONFIDENCE_CHANNEL.to_string(),
        anomalous: fit_beta_or_uniform(&anomalous, opts.epsilon),
        normal: fit_beta_or_uniform(&normal, opts.epsilon),
    };
    FusionModel::new(vec![channel], prior, opts.epsilon)
}

impl FusionBundle {
    /// Fit both models from normalized training data and a trained
    /// confidence model.
    pub fn fit(
        data: &[LabeledInstance],
        feature_names: &[String],
        confidence: &LogisticModel,
        opts: FusionFitOptions,
    ) -> Result<Self, FusionError> {
        let features = fit_feature_model(data, feature_names, opts)?;
        let scored = data
            .iter()
            .map(|i| Ok((confidence.score(&i.x)?, i.y)))
            .collect::<Result<Vec<_>, FusionError>>()?;
        let confidence = fit_confidence_model(&scored, opts)?;
        Ok(Self { features, confidence })
    }

    pub fn save(&self, path: &Path) -> Result<(), FusionError> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|source| FusionError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let text = fs::read_to_string(path).map_err(|source| FusionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let bundle: Self = serde_json::from_str(&text)?;
        bundle.features.validate()?;
        bundle.confidence.validate()?;
        if bundle.confidence.channels.len() != 1 {
            return Err(FusionError::NotSingleChannel(bundle.confidence.channels.len()));
        }
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{Beta, Continuous};

    fn model(channels: Vec<(BetaParams, BetaParams)>, prior: f64) -> FusionModel {
        FusionModel::new(
            channels
                .into_iter()
                .enumerate()
                .map(|(i, (a, n))| Channel {
                    name: format!("f{i}"),
                    anomalous: a,
                    normal: n,
                })
                .collect(),
            prior,
            DEFAULT_EPSILON,
        )
        .unwrap()
    }

    fn bp(a: f64, b: f64) -> BetaParams {
        BetaParams::new(a, b).unwrap()
    }

    #[test]
    fn uniform_channels_give_zero_log_likelihood() {
        let m = model(vec![(BetaParams::UNIFORM, BetaParams::UNIFORM); 3], 0.5);
        assert_eq!(m.log_likelihood(&[0.1, 0.5, 0.99], 1).unwrap(), 0.0);
        assert_eq!(m.log_likelihood(&[0.1, 0.5, 0.99], 0).unwrap(), 0.0);
    }

    #[test]
    fn beta_2_2_at_half() {
        // density 6x(1-x) = 1.5 at x = 0.5
        let m = model(vec![(bp(2.0, 2.0), bp(2.0, 2.0))], 0.5);
        assert!((m.log_likelihood(&[0.5], 1).unwrap() - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let m = model(vec![(bp(2.0, 2.0), bp(2.0, 2.0))], 0.5);
        assert!(matches!(
            m.log_likelihood(&[0.5, 0.1], 0),
            Err(FusionError::LengthMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn identical_classes_return_prior() {
        let same = bp(3.0, 1.5);
        assert_eq!(model(vec![(same, same)], 0.5).posterior(&[0.3]).unwrap(), 0.5);
        assert_eq!(model(vec![(same, same)], 0.7).posterior(&[0.3]).unwrap(), 0.7);
    }

    #[test]
    fn boundaries_are_finite() {
        let m = model(vec![(bp(0.5, 3.0), bp(4.0, 0.2)); 2], 0.4);
        for v in [[0.0, 1.0], [1.0, 0.0], [0.0, 0.0], [1.0, 1.0]] {
            assert!(m.log_likelihood(&v, 1).unwrap().is_finite());
            assert!(m.log_likelihood(&v, 0).unwrap().is_finite());
            let p = m.posterior(&v).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn many_channels_do_not_underflow() {
        let m = model(vec![(bp(8.0, 1.2), bp(1.2, 8.0)); 60], 0.5);
        let p = m.posterior(&[0.97; 60]).unwrap();
        assert!(p > 0.999 && p <= 1.0);
        let q = m.posterior(&[0.03; 60]).unwrap();
        assert!((0.0..1e-3).contains(&q));
    }

    #[test]
    fn fuse_single_uninformative() {
        let m = FusionModel::uninformative_confidence(0.5);
        assert_eq!(m.fuse_confidences(&[0.83]).unwrap(), 0.5);
        assert!(matches!(m.fuse_confidences(&[]), Err(FusionError::EmptyConfidences)));
    }

    #[test]
    fn fuse_needs_single_channel() {
        let m = model(vec![(bp(2.0, 2.0), bp(2.0, 2.0)); 2], 0.5);
        assert!(matches!(m.fuse_confidences(&[0.5]), Err(FusionError::NotSingleChannel(2))));
    }

    #[test]
    fn fit_beta_symmetric_jitter() {
        let samples: Vec<f64> = (0..200).map(|i| 0.5 + if i % 2 == 0 { 1e-3 } else { -1e-3 }).collect();
        let p = fit_beta(&samples, DEFAULT_EPSILON).unwrap();
        assert!((p.alpha - p.beta).abs() / p.alpha < 1e-9);
    }

    #[test]
    fn fit_beta_errors() {
        assert!(matches!(fit_beta(&[0.3], DEFAULT_EPSILON), Err(FusionError::TooFewSamples(1))));
        assert!(matches!(fit_beta(&[0.3, 0.3, 0.3], DEFAULT_EPSILON), Err(FusionError::ZeroVariance)));
        // both collapse onto 1 - eps after clamping
        assert!(matches!(fit_beta(&[1.0, 1.0], DEFAULT_EPSILON), Err(FusionError::ZeroVariance)));
        assert_eq!(fit_beta_or_uniform(&[0.2], DEFAULT_EPSILON), BetaParams::UNIFORM);
    }

    #[test]
    fn fit_beta_clamps_shapes() {
        // variance near the maximum m(1-m) drives c toward zero
        let p = fit_beta(&[0.0, 1.0, 0.0, 1.0], DEFAULT_EPSILON).unwrap();
        assert!(p.alpha >= MIN_SHAPE && p.beta >= MIN_SHAPE);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(FusionModel::new(vec![], 1.0, DEFAULT_EPSILON).is_err());
        assert!(FusionModel::new(vec![], 0.5, 0.0).is_err());
        assert!(BetaParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let bundle = FusionBundle {
            features: model(vec![(bp(2.0, 5.0), bp(5.0, 2.0))], 0.3),
            confidence: model(vec![(bp(9.0, 1.0), bp(1.0, 9.0))], 0.3),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fusion.json");
        bundle.save(&path).unwrap();
        assert_eq!(FusionBundle::load(&path).unwrap(), bundle);
    }

    proptest! {
        #[test]
        fn likelihood_matches_density_product(
            params in proptest::collection::vec((0.2f64..8.0, 0.2f64..8.0), 1..5),
            xs in proptest::collection::vec(0.01f64..0.99, 5),
        ) {
            let channels: Vec<_> = params.iter().map(|&(a, b)| (bp(a, b), bp(b, a))).collect();
            let m = model(channels, 0.5);
            let values = &xs[..params.len()];
            let direct: f64 = params
                .iter()
                .zip(values)
                .map(|(&(a, b), &x)| Beta::new(a, b).unwrap().pdf(x))
                .product();
            let got = m.log_likelihood(values, 1).unwrap().exp();
            prop_assert!(((got - direct) / direct).abs() < 1e-9, "{got} vs {direct}");
        }

        #[test]
        fn fuse_is_permutation_invariant(
            a in 0.3f64..6.0, b in 0.3f64..6.0,
            mut confs in proptest::collection::vec(0.0f64..1.0, 1..12),
            prior in 0.05f64..0.95,
        ) {
            let m = model(vec![(bp(a, b), bp(b, a))], prior);
            let before = m.fuse_confidences(&confs).unwrap();
            confs.sort_by(|x, y| x.total_cmp(y));
            let sorted = m.fuse_confidences(&confs).unwrap();
            confs.reverse();
            let reversed = m.fuse_confidences(&confs).unwrap();
            prop_assert!((0.0..=1.0).contains(&before));
            prop_assert_eq!(before.to_bits(), sorted.to_bits());
            prop_assert_eq!(sorted.to_bits(), reversed.to_bits());
        }
    }
}
