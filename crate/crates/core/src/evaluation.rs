//! Regression metrics and bootstrap intervals.
//!
//! Each metric is reported as (low, mid, top): `mid` is the metric on the
//! full test set, `low`/`top` are percentiles of a pairs bootstrap over the
//! test rows.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DataRow;
use crate::matrix::TARGET_NAMES;
use crate::mtl::{predict_monitoring, MtlError, MtlModel, TrainReport};
use crate::region::RegionId;
use crate::seed::derive_seed;

pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("length mismatch: {actual} actuals vs {predicted} predictions")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("no observations")]
    Empty,
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("actual values have zero variance")]
    ZeroVariance,
    #[error("all {0} bootstrap replicates were degenerate")]
    AllReplicatesDegenerate(usize),
    #[error("bootstrap needs replicates >= 1 and level in (0, 1)")]
    BadBootstrapConfig,
}

fn check(y: &[f64], yhat: &[f64], min_len: usize) -> Result<(), MetricError> {
    if y.len() != yhat.len() {
        return Err(MetricError::LengthMismatch {
            actual: y.len(),
            predicted: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(MetricError::Empty);
    }
    if y.len() < min_len {
        return Err(MetricError::TooShort(y.len()));
    }
    Ok(())
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// Population variance.
fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs.iter().copied());
    mean(xs.iter().map(|x| (x - m) * (x - m)))
}

/// Coefficient of determination, `1 - SS_res / SS_tot`.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64, MetricError> {
    check(y, yhat, 2)?;
    let m = mean(y.iter().copied());
    let ss_tot: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Explained variance, `1 - Var(y - yhat) / Var(y)`.
pub fn evs(y: &[f64], yhat: &[f64]) -> Result<f64, MetricError> {
    check(y, yhat, 2)?;
    let var_y = variance(y);
    if var_y == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let resid: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| a - b).collect();
    Ok(1.0 - variance(&resid) / var_y)
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64, MetricError> {
    check(y, yhat, 1)?;
    Ok(mean(y.iter().zip(yhat).map(|(a, b)| (a - b).abs())))
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, MetricError> {
    check(y, yhat, 1)?;
    Ok(mean(y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b))).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    R2,
    Evs,
    Mae,
    Rmse,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::R2, Metric::Evs, Metric::Mae, Metric::Rmse];

    pub fn name(self) -> &'static str {
        match self {
            Metric::R2 => "r2",
            Metric::Evs => "evs",
            Metric::Mae => "mae",
            Metric::Rmse => "rmse",
        }
    }

    pub fn compute(self, y: &[f64], yhat: &[f64]) -> Result<f64, MetricError> {
        match self {
            Metric::R2 => r2(y, yhat),
            Metric::Evs => evs(y, yhat),
            Metric::Mae => mae(y, yhat),
            Metric::Rmse => rmse(y, yhat),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: DEFAULT_REPLICATES,
            level: DEFAULT_LEVEL,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.replicates == 0 || !(self.level > 0.0 && self.level < 1.0) {
            return Err(MetricError::BadBootstrapConfig);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub mid: f64,
    pub top: f64,
    /// Replicates skipped because the resample had zero variance.
    pub skipped: usize,
}

impl Interval {
    pub fn is_ordered(&self) -> bool {
        self.low <= self.mid && self.mid <= self.top
    }
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Resampled index sets; replicate `b` draws from its own derived seed.
fn resample(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn bootstrap_interval(
    y: &[f64],
    yhat: &[f64],
    metric: Metric,
    cfg: &BootstrapConfig,
) -> Result<Interval, MetricError> {
    cfg.validate()?;
    check(y, yhat, 2)?;
    let mid = metric.compute(y, yhat)?;
    let n = y.len();
    let outcomes: Vec<Result<f64, MetricError>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let idx = resample(n, cfg.seed, b);
            let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let ps: Vec<f64> = idx.iter().map(|&i| yhat[i]).collect();
            metric.compute(&ys, &ps)
        })
        .collect();
    let mut values = Vec::with_capacity(outcomes.len());
    let mut skipped = 0;
    for o in outcomes {
        match o {
            Ok(v) => values.push(v),
            Err(MetricError::ZeroVariance) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if values.is_empty() {
        return Err(MetricError::AllReplicatesDegenerate(skipped));
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - cfg.level) / 2.0;
    Ok(Interval {
        low: percentile(&values, tail),
        mid,
        top: percentile(&values, 1.0 - tail),
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub target: String,
    pub r2: Interval,
    pub evs: Interval,
    pub mae: Interval,
    pub rmse: Interval,
}

impl TargetMetrics {
    pub fn get(&self, metric: Metric) -> &Interval {
        match metric {
            Metric::R2 => &self.r2,
            Metric::Evs => &self.evs,
            Metric::Mae => &self.mae,
            Metric::Rmse => &self.rmse,
        }
    }
}

/// Metrics for one region, one entry per target in [I, H, R, D] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub region: RegionId,
    pub test_rows: usize,
    pub training_time_seconds: f64,
    pub targets: Vec<TargetMetrics>,
}

/// Scores predicted counts against actual counts for all four targets.
pub fn evaluate_predictions(
    region: RegionId,
    actual: &[[f64; 4]],
    predicted: &[[f64; 4]],
    training_time_seconds: f64,
    cfg: &BootstrapConfig,
) -> Result<MetricReport, MetricError> {
    let mut targets = Vec::with_capacity(4);
    for (k, name) in TARGET_NAMES.iter().enumerate() {
        let y: Vec<f64> = actual.iter().map(|r| r[k]).collect();
        let p: Vec<f64> = predicted.iter().map(|r| r[k]).collect();
        let iv = |m| bootstrap_interval(&y, &p, m, cfg);
        targets.push(TargetMetrics {
            target: name.to_string(),
            r2: iv(Metric::R2)?,
            evs: iv(Metric::Evs)?,
            mae: iv(Metric::Mae)?,
            rmse: iv(Metric::Rmse)?,
        });
    }
    Ok(MetricReport {
        region,
        test_rows: actual.len(),
        training_time_seconds,
        targets,
    })
}

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error(transparent)]
    Model(#[from] MtlError),
    #[error("{target}: {source}")]
    Metric {
        target: String,
        #[source]
        source: MetricError,
    },
}

/// Predicts the held-out rows (as counts) and scores them.
pub fn evaluate_model(
    model: &MtlModel,
    train_report: &TrainReport,
    test_rows: &[DataRow],
    cfg: &BootstrapConfig,
) -> Result<MetricReport, EvaluationError> {
    let preds = predict_monitoring(model, test_rows.iter().map(|r| &r.features))?;
    let actual: Vec<[f64; 4]> = test_rows.iter().map(DataRow::targets_f64).collect();
    let predicted: Vec<[f64; 4]> = preds.iter().map(|p| p.counts).collect();
    evaluate_predictions(
        model.case_study(),
        &actual,
        &predicted,
        train_report.total_seconds(),
        cfg,
    )
    .map_err(|source| EvaluationError::Metric {
        target: model.case_study().to_string(),
        source,
    })
}

pub const TABLE_HEADER: [&str; 6] = ["province", "metric", "low", "mid", "top", "tt_seconds"];

/// One target's table: a row per (region, metric).
pub fn write_target_table<W: Write>(
    reports: &[MetricReport],
    target: usize,
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TABLE_HEADER)?;
    for report in reports {
        let tm = &report.targets[target];
        for metric in Metric::ALL {
            let iv = tm.get(metric);
            w.write_record([
                report.region.name().to_string(),
                metric.name().to_string(),
                format!("{:.6}", iv.low),
                format!("{:.6}", iv.mid),
                format!("{:.6}", iv.top),
                format!("{:.6}", report.training_time_seconds),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
