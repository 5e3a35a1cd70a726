//! Linear proximity classifiers trained from scratch.
//!
//! All three models share a standardizing scaler fitted on the training rows
//! and a linear decision function `w·z + b`:
//!
//! - [`ModelKind::Lr`]: mean log-loss + λ‖w‖², full-batch gradient descent.
//! - [`ModelKind::SgdHinge`]: mean hinge + λ‖w‖², per-sample subgradient
//!   steps in a seeded shuffled order.
//! - [`ModelKind::LinearSvc`]: ½‖w‖² + C·mean squared hinge, batch gradient
//!   descent.
//!
//! Ties (score exactly 0, probability exactly 0.5) predict label 0.

use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::scenario::DatasetRow;

pub const N_FEATURES: usize = 11;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "hd1", "hd2", "hd3", "rd1", "rd2", "rd3", "hx_est", "hy_est", "rx_est", "ry_est", "sep_est",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub features: Vec<f64>,
    pub label: u8,
}

impl From<&DatasetRow> for FeatureRow {
    fn from(r: &DatasetRow) -> Self {
        Self {
            features: r.features().to_vec(),
            label: r.label,
        }
    }
}

pub fn feature_rows(rows: &[DatasetRow]) -> Vec<FeatureRow> {
    rows.iter().map(FeatureRow::from).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "SGD_HINGE")]
    SgdHinge,
    #[serde(rename = "LINEAR_SVC")]
    LinearSvc,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lr, ModelKind::SgdHinge, ModelKind::LinearSvc];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Lr => "LR",
            ModelKind::SgdHinge => "SGD",
            ModelKind::LinearSvc => "Linear-SVC",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(ModelKind::Lr),
            "sgd" | "sgd_hinge" => Ok(ModelKind::SgdHinge),
            "svc" | "linear_svc" | "linear-svc" => Ok(ModelKind::LinearSvc),
            other => Err(Error::InvalidParams(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 weight for LR and SGD.
    pub l2_lambda: f64,
    /// Squared-hinge weight for the SVC.
    pub c_param: f64,
    pub seed: u64,
    pub train_fraction: f64,
}

impl TrainConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        let base = Self {
            learning_rate: 0.1,
            epochs: 500,
            l2_lambda: 1e-4,
            c_param: 1.0,
            seed: 0,
            train_fraction: 0.7,
        };
        match kind {
            ModelKind::Lr => base,
            ModelKind::SgdHinge => Self { learning_rate: 0.01, epochs: 50, ..base },
            ModelKind::LinearSvc => Self { learning_rate: 0.01, epochs: 500, ..base },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParams("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParams("epochs must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParams("train_fraction must be in (0, 1)".into()));
        }
        if !(self.l2_lambda >= 0.0 && self.c_param > 0.0) {
            return Err(Error::InvalidParams("need l2_lambda >= 0 and c_param > 0".into()));
        }
        Ok(())
    }
}

/// Per-feature standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Population statistics; constant columns get std 1.
    pub fn fit(rows: &[FeatureRow]) -> Self {
        let dim = rows[0].features.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(&r.features) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(&r.features).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler_mean: Vec<f64>,
    pub scaler_std: Vec<f64>,
    /// Set when training saw a single class; the model is then constant.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub single_class: bool,
}

impl LinearModel {
    pub fn scaler(&self) -> Scaler {
        Scaler {
            mean: self.scaler_mean.clone(),
            std: self.scaler_std.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.weights.len();
        if self.scaler_mean.len() != d || self.scaler_std.len() != d {
            return Err(Error::Dimension { expected: d, got: self.scaler_mean.len().min(self.scaler_std.len()) });
        }
        if self.scaler_std.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidParams("scaler std must be positive".into()));
        }
        Ok(())
    }

    /// Raw decision value `w·z + b` on standardized input.
    pub fn decision(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: features.len() });
        }
        let z = self.scaler().transform(features);
        Ok(dot(&self.weights, &z) + self.bias)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub label: u8,
    /// Probability of label 1 for LR; signed margin for the hinge models.
    pub score: f64,
}

pub fn predict(model: &LinearModel, features: &[f64]) -> Result<Prediction> {
    let z = model.decision(features)?;
    Ok(match model.kind {
        ModelKind::Lr => {
            let p = sigmoid(z);
            Prediction { label: u8::from(p > 0.5), score: p }
        }
        ModelKind::SgdHinge | ModelKind::LinearSvc => Prediction { label: u8::from(z > 0.0), score: z },
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn signed(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Training objectives and their gradients over standardized inputs.
pub mod objective {
    use super::{dot, sigmoid, signed, softplus};

    /// Mean log-loss + λ‖w‖².
    pub fn log_loss(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[u8], lambda: f64) -> f64 {
        let n = xs.len() as f64;
        let data: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| softplus(-signed(y) * (dot(w, x) + b)))
            .sum();
        data / n + lambda * dot(w, w)
    }

    pub fn log_loss_grad(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[u8], lambda: f64) -> (Vec<f64>, f64) {
        let n = xs.len() as f64;
        let mut gw: Vec<f64> = w.iter().map(|wi| 2.0 * lambda * wi).collect();
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let r = (sigmoid(dot(w, x) + b) - f64::from(y)) / n;
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += r * xi;
            }
            gb += r;
        }
        (gw, gb)
    }

    /// Mean hinge + λ‖w‖².
    pub fn hinge(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[u8], lambda: f64) -> f64 {
        let n = xs.len() as f64;
        let data: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| (1.0 - signed(y) * (dot(w, x) + b)).max(0.0))
            .sum();
        data / n + lambda * dot(w, w)
    }

    /// ½‖w‖² + C·mean squared hinge.
    pub fn squared_hinge(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[u8], c: f64) -> f64 {
        let n = xs.len() as f64;
        let data: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| (1.0 - signed(y) * (dot(w, x) + b)).max(0.0).powi(2))
            .sum();
        0.5 * dot(w, w) + c * data / n
    }

    pub fn squared_hinge_grad(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[u8], c: f64) -> (Vec<f64>, f64) {
        let n = xs.len() as f64;
        let mut gw = w.to_vec();
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let s = signed(y);
            let slack = 1.0 - s * (dot(w, x) + b);
            if slack > 0.0 {
                let k = -2.0 * c * slack * s / n;
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += k * xi;
                }
                gb += k;
            }
        }
        (gw, gb)
    }
}

fn check_rows(rows: &[FeatureRow]) -> Result<usize> {
    let Some(first) = rows.first() else {
        return Err(Error::Training("no training rows".into()));
    };
    let dim = first.features.len();
    if dim == 0 {
        return Err(Error::Training("rows have no features".into()));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.features.len() != dim {
            return Err(Error::Data { row: i, reason: format!("{} features, expected {dim}", r.features.len()) });
        }
        if let Some(j) = r.features.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data { row: i, reason: format!("feature {j} is not finite") });
        }
        if r.label > 1 {
            return Err(Error::Data { row: i, reason: format!("label {} is not binary", r.label) });
        }
    }
    Ok(dim)
}

pub fn train(rows: &[FeatureRow], kind: ModelKind, cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    let dim = check_rows(rows)?;
    let scaler = Scaler::fit(rows);
    let positives = rows.iter().filter(|r| r.label == 1).count();
    let mut model = LinearModel {
        kind,
        weights: vec![0.0; dim],
        bias: 0.0,
        scaler_mean: scaler.mean.clone(),
        scaler_std: scaler.std.clone(),
        single_class: false,
    };
    if positives == 0 || positives == rows.len() {
        model.single_class = true;
        model.bias = if positives == 0 { -1.0 } else { 1.0 };
        return Ok(model);
    }

    let xs: Vec<Vec<f64>> = rows.iter().map(|r| scaler.transform(&r.features)).collect();
    let ys: Vec<u8> = rows.iter().map(|r| r.label).collect();
    let (w, b) = match kind {
        ModelKind::Lr => batch_descent(dim, cfg, |w, b| objective::log_loss_grad(w, b, &xs, &ys, cfg.l2_lambda)),
        ModelKind::LinearSvc => batch_descent(dim, cfg, |w, b| objective::squared_hinge_grad(w, b, &xs, &ys, cfg.c_param)),
        ModelKind::SgdHinge => sgd_hinge(&xs, &ys, cfg),
    };
    model.weights = w;
    model.bias = b;
    Ok(model)
}

fn batch_descent(
    dim: usize,
    cfg: &TrainConfig,
    grad: impl Fn(&[f64], f64) -> (Vec<f64>, f64),
) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for _ in 0..cfg.epochs {
        let (gw, gb) = grad(&w, b);
        for (wi, gi) in w.iter_mut().zip(&gw) {
            *wi -= cfg.learning_rate * gi;
        }
        b -= cfg.learning_rate * gb;
    }
    (w, b)
}

fn sgd_hinge(xs: &[Vec<f64>], ys: &[u8], cfg: &TrainConfig) -> (Vec<f64>, f64) {
    let mut rng = rng::stream(cfg.seed, Stream::SgdOrder);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut w = vec![0.0; xs[0].len()];
    let mut b = 0.0;
    let eta = cfg.learning_rate;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let s = signed(ys[i]);
            let active = s * (dot(&w, &xs[i]) + b) < 1.0;
            for (wj, xj) in w.iter_mut().zip(&xs[i]) {
                let g = 2.0 * cfg.l2_lambda * *wj - if active { s * xj } else { 0.0 };
                *wj -= eta * g;
            }
            if active {
                b += eta * s;
            }
        }
    }
    (w, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

impl EvalMetrics {
    pub fn from_confusion(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let total = tp + fp + tn + fn_;
        let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(num as f64 / den as f64) };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Self {
            accuracy: ratio(tp + tn, total).unwrap_or(0.0),
            precision: precision.unwrap_or(0.0),
            recall: recall.unwrap_or(0.0),
            f1: f1.unwrap_or(0.0),
            tp,
            fp,
            tn,
            fn_,
            degenerate: precision.is_none() || recall.is_none() || total == 0,
        }
    }

    pub fn from_labels(truth: &[u8], predicted: &[u8]) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (1, 1) => tp += 1,
                (0, 1) => fp += 1,
                (1, _) => fn_ += 1,
                _ => tn += 1,
            }
        }
        Self::from_confusion(tp, fp, tn, fn_)
    }
}

pub fn evaluate(model: &LinearModel, rows: &[FeatureRow]) -> Result<EvalMetrics> {
    if rows.is_empty() {
        return Err(Error::Training("no evaluation rows".into()));
    }
    let predicted = rows
        .iter()
        .map(|r| predict(model, &r.features).map(|p| p.label))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<u8> = rows.iter().map(|r| r.label).collect();
    Ok(EvalMetrics::from_labels(&truth, &predicted))
}

/// Seeded, label-stratified train/test partition.
///
/// The training side gets `round(n · fraction)` rows (at least one, leaving at
/// least one for testing), split between classes by largest remainder.
pub fn split<T: Clone>(
    rows: &[T],
    label: impl Fn(&T) -> u8,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if rows.len() < 2 {
        return Err(Error::Training(format!("cannot split {} rows", rows.len())));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParams("train_fraction must be in (0, 1)".into()));
    }
    let n = rows.len();
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);

    let mut rng = rng::stream(seed, Stream::Split);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in rows.iter().enumerate() {
        by_class[usize::from(label(r) == 1)].push(i);
    }
    for c in &mut by_class {
        c.shuffle(&mut rng);
    }

    // largest-remainder allocation of n_train across classes
    let exact: Vec<f64> = by_class.iter().map(|c| c.len() as f64 * n_train as f64 / n as f64).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut short = n_train - take.iter().sum::<usize>();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &c in order.iter().cycle().take(4) {
        if short == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            short -= 1;
        }
    }

    let mut train_idx = Vec::with_capacity(n_train);
    let mut test_idx = Vec::with_capacity(n - n_train);
    for (c, idx) in by_class.iter().enumerate() {
        train_idx.extend_from_slice(&idx[..take[c]]);
        test_idx.extend_from_slice(&idx[take[c]..]);
    }
    train_idx.shuffle(&mut rng);
    test_idx.shuffle(&mut rng);
    Ok((
        train_idx.into_iter().map(|i| rows[i].clone()).collect(),
        test_idx.into_iter().map(|i| rows[i].clone()).collect(),
    ))
}

pub fn split_rows(rows: &[FeatureRow], train_fraction: f64, seed: u64) -> Result<(Vec<FeatureRow>, Vec<FeatureRow>)> {
    split(rows, |r| r.label, train_fraction, seed)
}

/// Smallest signed distance of any standardized row to the hyperplane
/// `(w, b)`, positive when the hyperplane separates the classes.
pub fn geometric_margin(rows: &[FeatureRow], scaler: &Scaler, w: &[f64], b: f64) -> f64 {
    let norm = dot(w, w).sqrt();
    rows.iter()
        .map(|r| signed(r.label) * (dot(w, &scaler.transform(&r.features)) + b) / norm)
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(features: &[f64], label: u8) -> FeatureRow {
        FeatureRow { features: features.to_vec(), label }
    }

    /// Two 1-D clusters around 0.2 and 1.2 with a gap around 0.5.
    fn separable() -> Vec<FeatureRow> {
        (0..40)
            .map(|i| {
                let close = i % 2 == 0;
                let x = if close { 0.1 + 0.01 * i as f64 / 2.0 } else { 0.8 + 0.02 * i as f64 };
                row(&[x, 1.0 + 0.1 * (i % 5) as f64], u8::from(close))
            })
            .collect()
    }

    fn zero_model(kind: ModelKind, bias: f64) -> LinearModel {
        LinearModel {
            kind,
            weights: vec![0.0; 2],
            bias,
            scaler_mean: vec![0.0; 2],
            scaler_std: vec![1.0; 2],
            single_class: false,
        }
    }

    #[test]
    fn zero_and_saturated_models() {
        let p = predict(&zero_model(ModelKind::Lr, 0.0), &[3.0, 4.0]).unwrap();
        assert_eq!(p.score, 0.5);
        assert_eq!(p.label, 0);
        let p = predict(&zero_model(ModelKind::Lr, 10.0), &[3.0, 4.0]).unwrap();
        assert!(p.score > 0.9999);
        assert_eq!(p.label, 1);
        let p = predict(&zero_model(ModelKind::SgdHinge, 0.0), &[3.0, 4.0]).unwrap();
        assert_eq!(p.label, 0);
        assert!(predict(&zero_model(ModelKind::Lr, 0.0), &[1.0]).is_err());
    }

    #[test]
    fn all_kinds_separate_clusters() {
        let rows = separable();
        for kind in ModelKind::ALL {
            let m = train(&rows, kind, &TrainConfig::default_for(kind)).unwrap();
            let e = evaluate(&m, &rows).unwrap();
            assert_eq!(e.accuracy, 1.0, "{kind:?}: {e:?}");
            assert!(!m.single_class);
        }
    }

    #[test]
    fn single_class_gives_constant_model() {
        let rows: Vec<FeatureRow> = (0..10).map(|i| row(&[i as f64, 1.0], 0)).collect();
        for kind in ModelKind::ALL {
            let m = train(&rows, kind, &TrainConfig::default_for(kind)).unwrap();
            assert!(m.single_class);
            assert!(m.weights.iter().all(|w| *w == 0.0));
            assert!(rows.iter().all(|r| predict(&m, &r.features).unwrap().label == 0));
        }
    }

    #[test]
    fn training_errors() {
        let cfg = TrainConfig::default_for(ModelKind::Lr);
        assert!(matches!(train(&[], ModelKind::Lr, &cfg), Err(Error::Training(_))));
        let rows = vec![row(&[1.0, 2.0], 0), row(&[f64::NAN, 2.0], 1)];
        assert!(matches!(train(&rows, ModelKind::Lr, &cfg), Err(Error::Data { row: 1, .. })));
        let bad = TrainConfig { epochs: 0, ..cfg };
        assert!(train(&separable(), ModelKind::Lr, &bad).is_err());
    }

    #[test]
    fn deterministic_weights() {
        let rows = separable();
        for kind in ModelKind::ALL {
            let cfg = TrainConfig::default_for(kind).with_seed(5);
            assert_eq!(train(&rows, kind, &cfg).unwrap(), train(&rows, kind, &cfg).unwrap());
        }
    }

    #[test]
    fn affine_rescaled_column_gives_same_labels() {
        let rows = separable();
        let scaled: Vec<FeatureRow> = rows
            .iter()
            .map(|r| row(&[r.features[0] * 250.0 - 7.0, r.features[1]], r.label))
            .collect();
        for kind in ModelKind::ALL {
            let cfg = TrainConfig::default_for(kind);
            let a = train(&rows, kind, &cfg).unwrap();
            let b = train(&scaled, kind, &cfg).unwrap();
            for (r, s) in rows.iter().zip(&scaled) {
                assert_eq!(predict(&a, &r.features).unwrap().label, predict(&b, &s.features).unwrap().label);
            }
        }
    }

    #[test]
    fn metric_examples() {
        let truth = [1, 0, 1, 0];
        let e = EvalMetrics::from_labels(&truth, &truth);
        assert_eq!((e.accuracy, e.f1), (1.0, 1.0));
        let e = EvalMetrics::from_labels(&truth, &[1, 1, 1, 1]);
        assert_eq!(e.precision, 0.5);
        assert_eq!(e.recall, 1.0);
        assert!((e.f1 - 2.0 / 3.0).abs() < 1e-12);
        let e = EvalMetrics::from_labels(&truth, &[0, 0, 0, 0]);
        assert_eq!((e.precision, e.f1), (0.0, 0.0));
        assert!(e.degenerate);
        assert_eq!(e.accuracy, 0.5);
    }

    #[test]
    fn metrics_json_uses_fn_key() {
        let v = serde_json::to_value(EvalMetrics::from_confusion(1, 2, 3, 4)).unwrap();
        assert_eq!(v["fn"], 4);
        assert_eq!(v["tp"], 1);
    }

    #[test]
    fn split_examples() {
        let rows: Vec<FeatureRow> = (0..10).map(|i| row(&[i as f64], u8::from(i < 3))).collect();
        let (tr, te) = split_rows(&rows, 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert_eq!(split_rows(&rows, 0.8, 1).unwrap(), (tr.clone(), te.clone()));
        assert_ne!(split_rows(&rows, 0.8, 2).unwrap().0, tr);
        assert!(split_rows(&rows[..1], 0.5, 1).is_err());
        // tiny fractions still leave one row on each side
        let (tr, te) = split_rows(&rows, 0.01, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 9));
    }

    #[test]
    fn model_json_schema() {
        let m = train(&separable(), ModelKind::LinearSvc, &TrainConfig::default_for(ModelKind::LinearSvc)).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["bias", "kind", "scaler_mean", "scaler_std", "weights"]);
        assert_eq!(v["kind"], "LINEAR_SVC");
        let back: LinearModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn hinge_labels_invariant_to_positive_scaling(
            w in prop::collection::vec(-5.0f64..5.0, 3),
            b in -5.0f64..5.0,
            x in prop::collection::vec(-5.0f64..5.0, 3),
            k in 1e-3f64..1e3,
        ) {
            for kind in [ModelKind::SgdHinge, ModelKind::LinearSvc] {
                let m = LinearModel { kind, weights: w.clone(), bias: b, scaler_mean: vec![0.0; 3], scaler_std: vec![1.0; 3], single_class: false };
                let scaled = LinearModel { weights: w.iter().map(|v| v * k).collect(), bias: b * k, ..m.clone() };
                prop_assert_eq!(predict(&m, &x).unwrap().label, predict(&scaled, &x).unwrap().label);
            }
        }

        #[test]
        fn stratified_split_keeps_ratio(n in 2usize..200, pos in 0.0f64..1.0, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let rows: Vec<FeatureRow> = (0..n).map(|i| FeatureRow { features: vec![i as f64], label: u8::from((i as f64) < pos * n as f64) }).collect();
            let (tr, te) = split_rows(&rows, frac, seed).unwrap();
            prop_assert_eq!(tr.len() + te.len(), n);
            prop_assert!(!tr.is_empty() && !te.is_empty());
            let global = rows.iter().filter(|r| r.label == 1).count() as f64 / n as f64;
            let count = |v: &[FeatureRow]| v.iter().filter(|r| r.label == 1).count() as f64;
            prop_assert!((count(&tr) - global * tr.len() as f64).abs() <= 1.0);
            prop_assert!((count(&te) - global * te.len() as f64).abs() <= 1.0);
        }

        #[test]
        fn metric_identities(truth in prop::collection::vec(0u8..2, 1..64), pred_seed in prop::collection::vec(0u8..2, 64)) {
            let pred = &pred_seed[..truth.len()];
            let e = EvalMetrics::from_labels(&truth, pred);
            let total = (e.tp + e.fp + e.tn + e.fn_) as f64;
            prop_assert_eq!(total as usize, truth.len());
            prop_assert!((e.accuracy - (e.tp + e.tn) as f64 / total).abs() < 1e-15);
            if e.tp == 0 { prop_assert_eq!(e.f1, 0.0); }
        }
    }
}
