//! Regional daily datasets: CSV ingest, validation, train/test splitting and
//! cross-region pooling.
//!
//! One file per region, named `<region_slug>.csv`, with the header
//!
//! ```text
//! date,feat_01,...,feat_27,infections,hospitalizations,recoveries,deaths
//! ```
//!
//! Dates are ISO-8601 (`YYYY-MM-DD`). An empty feature cell is forward-filled
//! from the previous day; an empty cell on the first day rejects the file.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{FeatureMatrix, TargetMatrix, TARGET_NAMES};
use crate::region::RegionId;

pub const NUM_PRIMARY: usize = 27;

pub const PRIMARY_CODES: [&str; NUM_PRIMARY] = [
    "feat_01", "feat_02", "feat_03", "feat_04", "feat_05", "feat_06", "feat_07", "feat_08", "feat_09",
    "feat_10", "feat_11", "feat_12", "feat_13", "feat_14", "feat_15", "feat_16", "feat_17", "feat_18",
    "feat_19", "feat_20", "feat_21", "feat_22", "feat_23", "feat_24", "feat_25", "feat_26", "feat_27",
];

/// Enumerated categorical columns: (index into the primary features, allowed codes).
const CATEGORICAL: [(usize, &[i64]); 7] = [
    (1, &[1, 2, 3, 4]),                   // feat_02 climate season
    (3, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]), // feat_04 region
    (4, &[1, 2]),                         // feat_05 wave
    (6, &[1, 2, 3]),                      // feat_07 lockdown stage
    (7, &[0, 1, 2]),                      // feat_08 travel restriction
    (8, &[0, 1]),                         // feat_09 face covering
    (9, &[0, 1]),                         // feat_10 holiday
];

const REGION_COLUMN: usize = 3;

pub const DEFAULT_TEST_DAYS: usize = 54;

pub fn primary_codes() -> Vec<String> {
    PRIMARY_CODES.iter().map(|s| s.to_string()).collect()
}

fn header() -> Vec<&'static str> {
    let mut h = vec!["date"];
    h.extend_from_slice(&PRIMARY_CODES);
    h.extend_from_slice(&TARGET_NAMES);
    h
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("bad value {value:?} at line {line}, column {column:?}: {reason}")]
    BadValue {
        line: usize,
        column: String,
        value: String,
        reason: &'static str,
    },
    #[error("first row has no value for {column:?}; nothing to forward-fill from")]
    MissingInitialValue { column: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("file has no data rows")]
    EmptyFile,
    #[error("test size {test_size} must be in 1..{rows}")]
    BadTestSize { test_size: usize, rows: usize },
    #[error("no rows left after excluding {0}")]
    EmptyPool(RegionId),
}

/// One day of records for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub date: NaiveDate,
    pub features: [f64; NUM_PRIMARY],
    /// [infections, hospitalizations, recoveries, deaths]
    pub targets: [i64; 4],
}

impl DataRow {
    pub fn feature(&self, code: &str) -> Option<f64> {
        PRIMARY_CODES
            .iter()
            .position(|c| *c == code)
            .map(|i| self.features[i])
    }

    pub fn targets_f64(&self) -> [f64; 4] {
        self.targets.map(|t| t as f64)
    }
}

/// Date plus primary features, without targets (prediction inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub date: NaiveDate,
    pub features: [f64; NUM_PRIMARY],
}

impl From<&DataRow> for FeatureRow {
    fn from(row: &DataRow) -> Self {
        FeatureRow {
            date: row.date,
            features: row.features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalDataset {
    region: RegionId,
    rows: Vec<DataRow>,
}

impl RegionalDataset {
    /// Wraps rows without checking them; see [`validate_dataset`].
    pub fn new(region: RegionId, rows: Vec<DataRow>) -> Self {
        RegionalDataset { region, rows }
    }

    pub fn region(&self) -> RegionId {
        self.region
    }

    pub fn rows(&self) -> &[DataRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<DataRow> {
        indices.iter().map(|&i| self.rows[i].clone()).collect()
    }
}

pub fn primary_matrix<'a>(rows: impl IntoIterator<Item = &'a [f64; NUM_PRIMARY]>) -> FeatureMatrix {
    let mut values = Vec::new();
    let mut n = 0;
    for r in rows {
        values.extend_from_slice(r);
        n += 1;
    }
    FeatureMatrix::from_parts_unchecked(n, primary_codes(), values)
}

pub fn target_matrix<'a>(rows: impl IntoIterator<Item = &'a DataRow>) -> TargetMatrix {
    TargetMatrix::new(rows.into_iter().map(DataRow::targets_f64).collect())
}

struct RawRecord {
    line: usize,
    date: NaiveDate,
    features: [Option<f64>; NUM_PRIMARY],
    targets: [i64; 4],
}

fn column_map(headers: &csv::StringRecord, wanted: &[&str]) -> Result<Vec<usize>, IngestError> {
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    wanted
        .iter()
        .map(|w| {
            index
                .get(w)
                .copied()
                .ok_or_else(|| IngestError::MissingColumn(w.to_string()))
        })
        .collect()
}

fn bad(line: usize, column: &str, value: &str, reason: &'static str) -> IngestError {
    IngestError::BadValue {
        line,
        column: column.to_string(),
        value: value.to_string(),
        reason,
    }
}

fn read_records<R: Read>(reader: R, with_targets: bool) -> Result<Vec<RawRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let wanted: Vec<&str> = if with_targets {
        header()
    } else {
        header()[..1 + NUM_PRIMARY].to_vec()
    };
    let cols = column_map(&headers, &wanted)?;

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let cell = |c: usize| rec.get(cols[c]).unwrap_or("").trim();

        let date_s = cell(0);
        let date = NaiveDate::parse_from_str(date_s, "%Y-%m-%d")
            .map_err(|_| bad(line, "date", date_s, "expected YYYY-MM-DD"))?;

        let mut features = [None; NUM_PRIMARY];
        for (j, slot) in features.iter_mut().enumerate() {
            let s = cell(1 + j);
            if s.is_empty() {
                continue;
            }
            let v: f64 = s
                .parse()
                .map_err(|_| bad(line, PRIMARY_CODES[j], s, "not a number"))?;
            if !v.is_finite() {
                return Err(bad(line, PRIMARY_CODES[j], s, "not finite"));
            }
            *slot = Some(v);
        }

        let mut targets = [0i64; 4];
        if with_targets {
            for (k, t) in targets.iter_mut().enumerate() {
                let s = cell(1 + NUM_PRIMARY + k);
                *t = parse_count(s)
                    .ok_or_else(|| bad(line, TARGET_NAMES[k], s, "expected a non-negative integer count"))?;
            }
        }
        out.push(RawRecord {
            line,
            date,
            features,
            targets,
        });
    }
    if out.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    out.sort_by_key(|r| r.date);
    if let Some(w) = out.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(IngestError::DuplicateDate(w[0].date));
    }
    Ok(out)
}

/// Integer counts; integral floats such as `12.0` are accepted.
fn parse_count(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return (v >= 0).then_some(v);
    }
    let v: f64 = s.parse().ok()?;
    (v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < 9.0e15).then_some(v as i64)
}

fn fill_forward(records: &[RawRecord]) -> Result<Vec<[f64; NUM_PRIMARY]>, IngestError> {
    let mut out: Vec<[f64; NUM_PRIMARY]> = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let mut row = [0.0; NUM_PRIMARY];
        for j in 0..NUM_PRIMARY {
            row[j] = match rec.features[j] {
                Some(v) => v,
                None if i == 0 => {
                    return Err(IngestError::MissingInitialValue {
                        column: PRIMARY_CODES[j].to_string(),
                    })
                }
                None => out[i - 1][j],
            };
        }
        out.push(row);
    }
    Ok(out)
}

fn check_categoricals(line: usize, features: &[f64; NUM_PRIMARY]) -> Result<(), IngestError> {
    for (j, allowed) in CATEGORICAL {
        let v = features[j];
        if v.fract() != 0.0 || !allowed.contains(&(v as i64)) {
            return Err(bad(
                line,
                PRIMARY_CODES[j],
                &v.to_string(),
                "outside enumerated range",
            ));
        }
    }
    Ok(())
}

/// Parses one region's CSV from any reader.
pub fn read_regional_csv<R: Read>(reader: R, region: RegionId) -> Result<RegionalDataset, IngestError> {
    let records = read_records(reader, true)?;
    let filled = fill_forward(&records)?;
    let mut rows = Vec::with_capacity(records.len());
    for (rec, features) in records.iter().zip(filled) {
        check_categoricals(rec.line, &features)?;
        if features[REGION_COLUMN] as i64 != region.code() as i64 {
            return Err(bad(
                rec.line,
                PRIMARY_CODES[REGION_COLUMN],
                &features[REGION_COLUMN].to_string(),
                "region code does not match the dataset region",
            ));
        }
        rows.push(DataRow {
            date: rec.date,
            features,
            targets: rec.targets,
        });
    }
    Ok(RegionalDataset::new(region, rows))
}

pub fn parse_regional_csv(path: &Path, region: RegionId) -> Result<RegionalDataset, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_regional_csv(file, region)
}

/// Reads dates and primary features only; target columns may be absent.
pub fn read_feature_rows<R: Read>(reader: R) -> Result<Vec<FeatureRow>, IngestError> {
    let records = read_records(reader, false)?;
    let filled = fill_forward(&records)?;
    records
        .iter()
        .zip(filled)
        .map(|(rec, features)| {
            check_categoricals(rec.line, &features)?;
            Ok(FeatureRow {
                date: rec.date,
                features,
            })
        })
        .collect()
}

pub fn parse_feature_csv(path: &Path) -> Result<Vec<FeatureRow>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_feature_rows(file)
}

/// Writes a dataset in the ingest schema. Reals use the shortest
/// representation that parses back to the same bits.
pub fn write_regional_csv<W: Write>(ds: &RegionalDataset, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header())?;
    for row in &ds.rows {
        let mut rec: Vec<String> = Vec::with_capacity(1 + NUM_PRIMARY + 4);
        rec.push(row.date.format("%Y-%m-%d").to_string());
        rec.extend(row.features.iter().map(|v| v.to_string()));
        rec.extend(row.targets.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeTarget {
        row: usize,
        target: &'static str,
        value: i64,
    },
    DuplicateDate {
        row: usize,
        date: NaiveDate,
    },
    DateOrder {
        row: usize,
        date: NaiveDate,
    },
    NonFinite {
        row: usize,
        column: &'static str,
    },
    OutOfRange {
        row: usize,
        column: &'static str,
        value: f64,
    },
    RegionMismatch {
        row: usize,
        code: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_dataset(ds: &RegionalDataset) -> ValidationReport {
    let mut violations = Vec::new();
    for (i, row) in ds.rows.iter().enumerate() {
        if i > 0 {
            let prev = ds.rows[i - 1].date;
            if row.date == prev {
                violations.push(Violation::DuplicateDate {
                    row: i,
                    date: row.date,
                });
            } else if row.date < prev {
                violations.push(Violation::DateOrder {
                    row: i,
                    date: row.date,
                });
            }
        }
        for (j, &v) in row.features.iter().enumerate() {
            if !v.is_finite() {
                violations.push(Violation::NonFinite {
                    row: i,
                    column: PRIMARY_CODES[j],
                });
            }
        }
        for (j, allowed) in CATEGORICAL {
            let v = row.features[j];
            if v.is_finite() && (v.fract() != 0.0 || !allowed.contains(&(v as i64))) {
                violations.push(Violation::OutOfRange {
                    row: i,
                    column: PRIMARY_CODES[j],
                    value: v,
                });
            }
        }
        let code = row.features[REGION_COLUMN];
        if code.is_finite() && code != ds.region.code() as f64 {
            violations.push(Violation::RegionMismatch { row: i, code });
        }
        for (k, &t) in row.targets.iter().enumerate() {
            if t < 0 {
                violations.push(Violation::NegativeTarget {
                    row: i,
                    target: TARGET_NAMES[k],
                    value: t,
                });
            }
        }
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainTestSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Samples `test_size` distinct rows uniformly for testing; the rest train.
/// Both index lists come back sorted.
pub fn split_train_test(
    ds: &RegionalDataset,
    test_size: usize,
    seed: u64,
) -> Result<TrainTestSplit, IngestError> {
    split_indices(ds.len(), test_size, seed)
}

pub fn split_indices(n: usize, test_size: usize, seed: u64) -> Result<TrainTestSplit, IngestError> {
    if test_size == 0 || test_size >= n {
        return Err(IngestError::BadTestSize { test_size, rows: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_indices = sample(&mut rng, n, test_size).into_vec();
    test_indices.sort_unstable();
    let mut is_test = vec![false; n];
    for &i in &test_indices {
        is_test[i] = true;
    }
    let train_indices = (0..n).filter(|&i| !is_test[i]).collect();
    Ok(TrainTestSplit {
        train_indices,
        test_indices,
        seed,
    })
}

/// A row tagged with the region it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledRow {
    pub region: RegionId,
    pub row: DataRow,
}

/// Concatenates every dataset except `exclude`'s, preserving order.
pub fn pool_regions(datasets: &[RegionalDataset], exclude: RegionId) -> Result<Vec<PooledRow>, IngestError> {
    let pool: Vec<PooledRow> = datasets
        .iter()
        .filter(|ds| ds.region != exclude)
        .flat_map(|ds| {
            ds.rows.iter().map(move |row| PooledRow {
                region: ds.region,
                row: row.clone(),
            })
        })
        .collect();
    if pool.is_empty() {
        return Err(IngestError::EmptyPool(exclude));
    }
    Ok(pool)
}
