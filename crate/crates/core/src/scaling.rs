//! Feature and target scaling.
//!
//! Features go through a quantile-normal transform (empirical CDF followed by
//! the standard-normal quantile function), then every row is rescaled to unit
//! Euclidean length. Targets are min-max scaled per column and inverted back
//! to counts after prediction.
//!
//! All fitted state is plain data and serializes to JSON inside model
//! artifacts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{FeatureMatrix, TargetMatrix};

/// CDF values are clipped to `[P_LO, P_HI]` so the normal quantile stays finite.
pub const P_LO: f64 = 1e-7;
pub const P_HI: f64 = 1.0 - 1e-7;

pub const MAX_DEFAULT_QUANTILES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalingError {
    #[error("need at least 2 rows to fit, got {0}")]
    TooFewRows(usize),
    #[error("need at least 2 quantiles, got {0}")]
    BadQuantileCount(usize),
    #[error("columns {got:?} do not match the fitted columns {expected:?}")]
    ColumnMismatch { expected: Vec<String>, got: Vec<String> },
    #[error("probability {0} is outside (0, 1)")]
    OutOfDomain(f64),
    #[error("cannot fit on an empty matrix")]
    EmptyMatrix,
}

// Wichura, algorithm AS 241 (PPND16).
#[allow(clippy::excessive_precision)]
const A: [f64; 8] = [
    3.387_132_872_796_366_608_0,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
#[allow(clippy::excessive_precision)]
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083_0e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061_0e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561_0e3,
];
#[allow(clippy::excessive_precision)]
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_90,
    5.769_497_221_460_691_405_50,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_70e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_40e-4,
];
#[allow(clippy::excessive_precision)]
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_40,
    6.897_673_349_851_000_045_50e-1,
    1.481_039_764_274_800_745_90e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946_00e-4,
    1.050_750_071_644_416_843_24e-9,
];
#[allow(clippy::excessive_precision)]
const E: [f64; 8] = [
    6.657_904_643_501_103_777_20,
    5.463_784_911_164_114_369_90,
    1.784_826_539_917_291_335_80,
    2.965_605_718_285_048_912_30e-1,
    2.653_218_952_657_612_309_30e-2,
    1.242_660_947_388_078_438_60e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
#[allow(clippy::excessive_precision)]
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_90e-1,
    1.369_298_809_227_358_053_10e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591_00e-4,
    1.846_318_317_510_054_681_80e-5,
    1.421_511_758_316_445_888_70e-7,
    2.044_263_103_389_939_785_64e-15,
];

#[inline]
fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Standard-normal quantile function Φ⁻¹(p), accurate to about 1e-16
/// relative over (0, 1).
pub fn inverse_normal_cdf(p: f64) -> Result<f64, ScalingError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(ScalingError::OutOfDomain(p));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -x } else { x })
}

/// Linear-interpolated empirical quantile of sorted data (the "linear"
/// definition: position `p * (n - 1)`).
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Per-column landmark quantiles fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileNormalScaler {
    columns: Vec<String>,
    /// Probabilities of the landmarks, equally spaced on [0, 1].
    references: Vec<f64>,
    /// Landmark values per column, non-decreasing.
    landmarks: Vec<Vec<f64>>,
    p_lo: f64,
    p_hi: f64,
}

pub fn default_quantile_count(rows: usize) -> usize {
    rows.min(MAX_DEFAULT_QUANTILES)
}

pub fn fit_quantile_scaler(
    train: &FeatureMatrix,
    n_quantiles: usize,
) -> Result<QuantileNormalScaler, ScalingError> {
    if train.nrows() < 2 {
        return Err(ScalingError::TooFewRows(train.nrows()));
    }
    if n_quantiles < 2 {
        return Err(ScalingError::BadQuantileCount(n_quantiles));
    }
    let references: Vec<f64> = (0..n_quantiles)
        .map(|i| i as f64 / (n_quantiles - 1) as f64)
        .collect();
    let landmarks = (0..train.ncols())
        .map(|j| {
            let mut col = train.column(j);
            col.sort_by(f64::total_cmp);
            let mut lm: Vec<f64> = references.iter().map(|&p| sorted_quantile(&col, p)).collect();
            // guard against rounding producing a decreasing step
            for i in 1..lm.len() {
                if lm[i] < lm[i - 1] {
                    lm[i] = lm[i - 1];
                }
            }
            lm
        })
        .collect();
    Ok(QuantileNormalScaler {
        columns: train.column_codes().to_vec(),
        references,
        landmarks,
        p_lo: P_LO,
        p_hi: P_HI,
    })
}

impl QuantileNormalScaler {
    /// Fits with `min(1000, rows)` landmarks.
    pub fn fit(train: &FeatureMatrix) -> Result<Self, ScalingError> {
        fit_quantile_scaler(train, default_quantile_count(train.nrows()))
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_quantiles(&self) -> usize {
        self.references.len()
    }

    pub fn landmarks(&self, col: usize) -> &[f64] {
        &self.landmarks[col]
    }

    /// Empirical CDF of column `col` at `x`, after clipping `x` to the
    /// training range. Runs of equal landmarks map to the midpoint of their
    /// probabilities.
    pub fn cdf(&self, col: usize, x: f64) -> f64 {
        let lm = &self.landmarks[col];
        let refs = &self.references;
        let x = x.clamp(lm[0], lm[lm.len() - 1]);
        let first_ge = lm.partition_point(|&l| l < x);
        let last_le = lm.partition_point(|&l| l <= x) - 1;
        if first_ge <= last_le {
            return 0.5 * (refs[first_ge] + refs[last_le]);
        }
        let (i, k) = (last_le, first_ge);
        refs[i] + (x - lm[i]) / (lm[k] - lm[i]) * (refs[k] - refs[i])
    }

    pub fn transform_value(&self, col: usize, x: f64) -> f64 {
        let p = self.cdf(col, x).clamp(self.p_lo, self.p_hi);
        inverse_normal_cdf(p).expect("clipped probability is inside (0, 1)")
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &x)| self.transform_value(j, x))
            .collect()
    }
}

/// Maps every column to an approximately standard-normal distribution.
pub fn apply_quantile_scaler(
    s: &QuantileNormalScaler,
    m: &FeatureMatrix,
) -> Result<FeatureMatrix, ScalingError> {
    if m.column_codes() != s.columns.as_slice() {
        return Err(ScalingError::ColumnMismatch {
            expected: s.columns.clone(),
            got: m.column_codes().to_vec(),
        });
    }
    let mut values = Vec::with_capacity(m.values().len());
    for row in m.rows() {
        values.extend(s.transform_row(row));
    }
    Ok(FeatureMatrix::from_parts_unchecked(
        m.nrows(),
        m.column_codes().to_vec(),
        values,
    ))
}

/// Rows rescaled to unit L2 norm. All-zero rows stay zero and are flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRowMatrix {
    pub matrix: FeatureMatrix,
    pub zero_rows: Vec<bool>,
}

impl UnitRowMatrix {
    pub fn zero_row_count(&self) -> usize {
        self.zero_rows.iter().filter(|&&z| z).count()
    }
}

/// Normalizes in place; returns false for an all-zero row.
pub fn l2_normalize(row: &mut [f64]) -> bool {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    row.iter_mut().for_each(|v| *v /= norm);
    true
}

pub fn l2_normalize_rows(m: &FeatureMatrix) -> UnitRowMatrix {
    let mut values = m.values().to_vec();
    let cols = m.ncols().max(1);
    let zero_rows = values
        .chunks_mut(cols)
        .take(m.nrows())
        .map(|row| !l2_normalize(row))
        .collect();
    UnitRowMatrix {
        matrix: FeatureMatrix::from_parts_unchecked(m.nrows(), m.column_codes().to_vec(), values),
        zero_rows,
    }
}

/// Training minima and maxima per target column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScalerState {
    pub min: [f64; 4],
    pub max: [f64; 4],
}

pub fn fit_minmax(train_targets: &TargetMatrix) -> Result<MinMaxScalerState, ScalingError> {
    if train_targets.is_empty() {
        return Err(ScalingError::EmptyMatrix);
    }
    let mut min = [f64::INFINITY; 4];
    let mut max = [f64::NEG_INFINITY; 4];
    for row in train_targets.rows() {
        for k in 0..4 {
            min[k] = min[k].min(row[k]);
            max[k] = max[k].max(row[k]);
        }
    }
    Ok(MinMaxScalerState { min, max })
}

impl MinMaxScalerState {
    /// `(y - min) / (max - min)`, or 0 for a constant training column.
    /// Values outside the training range are not clipped.
    pub fn scale_row(&self, y: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|k| {
            let span = self.max[k] - self.min[k];
            if span == 0.0 {
                0.0
            } else {
                (y[k] - self.min[k]) / span
            }
        })
    }

    pub fn invert_row(&self, scaled: &[f64; 4], count_mode: bool) -> [f64; 4] {
        std::array::from_fn(|k| {
            let y = scaled[k] * (self.max[k] - self.min[k]) + self.min[k];
            if count_mode {
                y.max(0.0)
            } else {
                y
            }
        })
    }
}

pub fn apply_minmax(s: &MinMaxScalerState, t: &TargetMatrix) -> TargetMatrix {
    TargetMatrix::new(t.rows().iter().map(|r| s.scale_row(r)).collect())
}

/// With `count_mode`, negative results are floored at 0.
pub fn invert_minmax(s: &MinMaxScalerState, scaled: &TargetMatrix, count_mode: bool) -> TargetMatrix {
    TargetMatrix::new(
        scaled
            .rows()
            .iter()
            .map(|r| s.invert_row(r, count_mode))
            .collect(),
    )
}
