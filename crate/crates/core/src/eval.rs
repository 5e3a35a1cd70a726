//! Positioning statistics and the scenario × model bench.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ml::{self, EvalMetrics, ModelKind, TrainConfig};
use crate::pathloss::DEFAULT_SIGMA_DB;
use crate::rng;
use crate::scenario::{self, DatasetRow, ScenarioSpec};

/// Default separation error (m) under which a frame counts as accurate.
pub const DEFAULT_TOLERANCE_M: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositioningReport {
    pub scenario: String,
    pub n_frames: usize,
    /// Mean |sep_est - sep_true|, meters.
    pub avg_deviation: f64,
    /// Percent of frames whose deviation is within `tolerance`.
    pub accuracy_pct: f64,
    pub tolerance: f64,
    pub deviations: Vec<f64>,
}

pub fn positioning_report(
    scenario: &str,
    sep_est: &[f64],
    sep_true: &[f64],
    tolerance: f64,
) -> Result<PositioningReport> {
    if sep_est.len() != sep_true.len() {
        return Err(Error::LengthMismatch(format!(
            "{} estimated vs {} true separations",
            sep_est.len(),
            sep_true.len()
        )));
    }
    if sep_est.is_empty() {
        return Err(Error::LengthMismatch("empty separation series".into()));
    }
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be >= 0, got {tolerance}")));
    }
    let deviations: Vec<f64> = sep_est.iter().zip(sep_true).map(|(e, t)| (e - t).abs()).collect();
    let n = deviations.len();
    let within = deviations.iter().filter(|d| **d <= tolerance).count();
    Ok(PositioningReport {
        scenario: scenario.to_owned(),
        n_frames: n,
        avg_deviation: deviations.iter().sum::<f64>() / n as f64,
        accuracy_pct: 100.0 * within as f64 / n as f64,
        tolerance,
        deviations,
    })
}

pub fn report_from_rows(scenario: &str, rows: &[DatasetRow], tolerance: f64) -> Result<PositioningReport> {
    let est: Vec<f64> = rows.iter().map(|r| r.sep_est).collect();
    let truth: Vec<f64> = rows.iter().map(|r| r.sep_true).collect();
    positioning_report(scenario, &est, &truth, tolerance)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub seed: u64,
    pub sigma_db: f64,
    pub tolerance: f64,
    pub train_fraction: f64,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sigma_db: DEFAULT_SIGMA_DB,
            tolerance: DEFAULT_TOLERANCE_M,
            train_fraction: 0.7,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScore {
    pub model: ModelKind,
    pub train_rows: usize,
    pub test_rows: usize,
    pub metrics: EvalMetrics,
    pub single_class: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCase {
    pub scenario: String,
    pub seed: u64,
    pub positioning: PositioningReport,
    pub models: Vec<ModelScore>,
}

fn bench_case(spec: ScenarioSpec, cfg: &BenchConfig, case_seed: u64) -> Result<(BenchCase, Vec<ml::FeatureRow>)> {
    let spec = spec.with_noise(cfg.sigma_db, case_seed);
    let run = scenario::run_scenario(&spec)?;
    let rows = run.rows();
    let positioning = report_from_rows(&spec.name, &rows, cfg.tolerance)?;
    let case = BenchCase {
        scenario: spec.name.clone(),
        seed: case_seed,
        positioning,
        models: Vec::new(),
    };
    Ok((case, ml::feature_rows(&rows)))
}

fn score(rows: &[ml::FeatureRow], kind: ModelKind, cfg: &BenchConfig, case_seed: u64) -> Result<ModelScore> {
    let (train, test) = ml::split_rows(rows, cfg.train_fraction, case_seed)?;
    let tc = TrainConfig {
        train_fraction: cfg.train_fraction,
        ..TrainConfig::default_for(kind).with_seed(case_seed)
    };
    let model = ml::train(&train, kind, &tc)?;
    Ok(ModelScore {
        model: kind,
        train_rows: train.len(),
        test_rows: test.len(),
        metrics: ml::evaluate(&model, &test)?,
        single_class: model.single_class,
    })
}

/// All builtin scenarios × all models. Output order is fixed regardless of
/// the thread count.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchCase>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;

    pool.install(|| {
        let specs = scenario::builtin_scenarios();
        let cases = specs
            .into_par_iter()
            .enumerate()
            .map(|(i, spec)| bench_case(spec, cfg, rng::child_seed(cfg.seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;

        let cells: Vec<(usize, ModelKind)> = (0..cases.len())
            .flat_map(|i| ModelKind::ALL.map(|k| (i, k)))
            .collect();
        let scores = cells
            .par_iter()
            .map(|&(i, kind)| score(&cases[i].1, kind, cfg, cases[i].0.seed))
            .collect::<Result<Vec<_>>>()?;

        let mut out: Vec<BenchCase> = cases.into_iter().map(|(c, _)| c).collect();
        for ((i, _), s) in cells.into_iter().zip(scores) {
            out[i].models.push(s);
        }
        Ok(out)
    })
}

/// Plain-text table: one block per scenario, one row per model.
pub fn render_bench(cfg: &BenchConfig, cases: &[BenchCase]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "seed={} sigma_db={} tolerance_m={} train_fraction={}",
        cfg.seed, cfg.sigma_db, cfg.tolerance, cfg.train_fraction
    );
    let _ = writeln!(s, "{:<12} {:>10} {:>9}", "MODEL", "ACCURACY %", "F1-SCORE");
    for c in cases {
        let p = &c.positioning;
        let _ = writeln!(
            s,
            "{}: frames={} avg_deviation_m={:.3} positioning_accuracy_pct={:.2}",
            c.scenario, p.n_frames, p.avg_deviation, p.accuracy_pct
        );
        for m in &c.models {
            let note = if m.single_class { "  (single-class training set)" } else { "" };
            let _ = writeln!(
                s,
                "{:<12} {:>10.2} {:>9.2}{note}",
                m.model.label(),
                100.0 * m.metrics.accuracy,
                m.metrics.f1
            );
        }
    }
    s
}
