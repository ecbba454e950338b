//! Derived features, relevance scoring and feature selection.

use std::io::Write;

use thiserror::Error;

use crate::dataset::{NUM_PRIMARY, PRIMARY_CODES};
use crate::matrix::{FeatureMatrix, TargetMatrix, TARGET_NAMES};

/// The 13 features kept for modelling, in relevance-table order.
pub const TABLE2_FEATURES: [&str; 13] = [
    "feat_05", "feat_23", "feat_21", "feat_24", "feat_27", "feat_26", "feat_22", "feat_25", "feat_11",
    "feat_06", "feat_03", "feat_17", "feat_07",
];

pub const NUM_DERIVED: usize = 17;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("primary column {0:?} is missing")]
    MissingPrimaryColumn(String),
    #[error("row counts differ: {left} vs {right}")]
    RowCountMismatch { left: usize, right: usize },
    #[error("relevance scoring needs at least 3 rows, got {0}")]
    TooFewRows(usize),
    #[error("unknown feature code {0:?}")]
    UnknownFeatureCode(String),
    #[error("top_n = {top_n} is not in 1..={available}")]
    BadTopN { top_n: usize, available: usize },
    #[error("registry must have {NUM_DERIVED} uniquely coded entries, got {0}")]
    BadRegistry(usize),
    #[error("column {0:?} appears in both inputs")]
    DuplicateColumn(String),
    #[error("derived feature {code:?} is not finite on row {row}")]
    NonFinite { code: String, row: usize },
}

/// Primary feature `feat_NN` (1-based) of a row.
#[inline]
fn f(p: &[f64; NUM_PRIMARY], n: usize) -> f64 {
    p[n - 1]
}

/// Division with a zero denominator mapped to 0.
#[inline]
pub fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn total_population(p: &[f64; NUM_PRIMARY]) -> f64 {
    (22..=27).map(|n| f(p, n)).sum()
}

fn mobility_composite(p: &[f64; NUM_PRIMARY]) -> f64 {
    (12..=17).map(|n| f(p, n)).sum::<f64>() / 6.0
}

#[derive(Clone, Copy)]
pub struct DerivedFeature {
    pub code: &'static str,
    pub name: &'static str,
    pub formula: fn(&[f64; NUM_PRIMARY]) -> f64,
}

impl std::fmt::Debug for DerivedFeature {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("DerivedFeature")
            .field("code", &self.code)
            .field("name", &self.name)
            .finish()
    }
}

/// Ordered list of ratio/proportion features computed row by row from the
/// primary columns.
#[derive(Debug, Clone)]
pub struct DerivedFeatureRegistry {
    entries: Vec<DerivedFeature>,
}

impl DerivedFeatureRegistry {
    pub fn new(entries: Vec<DerivedFeature>) -> Result<Self, FeatureError> {
        let unique = entries
            .iter()
            .enumerate()
            .all(|(i, e)| entries[..i].iter().all(|o| o.code != e.code));
        if entries.len() != NUM_DERIVED || !unique {
            return Err(FeatureError::BadRegistry(entries.len()));
        }
        Ok(DerivedFeatureRegistry { entries })
    }

    pub fn standard() -> Self {
        let entries = vec![
            DerivedFeature {
                code: "d01",
                name: "total_population",
                formula: total_population,
            },
            DerivedFeature {
                code: "d02",
                name: "male_fraction",
                formula: |p| safe_div(f(p, 22) + f(p, 23) + f(p, 24), total_population(p)),
            },
            DerivedFeature {
                code: "d03",
                name: "female_fraction",
                formula: |p| safe_div(f(p, 25) + f(p, 26) + f(p, 27), total_population(p)),
            },
            DerivedFeature {
                code: "d04",
                name: "youth_fraction",
                formula: |p| safe_div(f(p, 22) + f(p, 25), total_population(p)),
            },
            DerivedFeature {
                code: "d05",
                name: "middle_fraction",
                formula: |p| safe_div(f(p, 23) + f(p, 26), total_population(p)),
            },
            DerivedFeature {
                code: "d06",
                name: "senior_fraction",
                formula: |p| safe_div(f(p, 24) + f(p, 27), total_population(p)),
            },
            DerivedFeature {
                code: "d07",
                name: "population_density",
                formula: |p| safe_div(total_population(p), f(p, 3)),
            },
            DerivedFeature {
                code: "d08",
                name: "chc_per_100k",
                formula: |p| safe_div(1e5 * f(p, 11), total_population(p)),
            },
            DerivedFeature {
                code: "d09",
                name: "vaccine_coverage",
                formula: |p| safe_div(f(p, 6), total_population(p)),
            },
            DerivedFeature {
                code: "d10",
                name: "labor_participation",
                formula: |p| safe_div(f(p, 21), total_population(p)),
            },
            DerivedFeature {
                code: "d11",
                name: "employ_unemploy_ratio",
                formula: |p| safe_div(f(p, 19), f(p, 20) + 1e-9),
            },
            DerivedFeature {
                code: "d12",
                name: "travelers_per_100k",
                formula: |p| safe_div(1e5 * f(p, 18), total_population(p)),
            },
            DerivedFeature {
                code: "d13",
                name: "mobility_composite",
                formula: mobility_composite,
            },
            DerivedFeature {
                code: "d14",
                name: "retail_residential_ratio",
                formula: |p| safe_div(f(p, 12), f(p, 17).abs() + 1.0),
            },
            DerivedFeature {
                code: "d15",
                name: "workplace_residential_ratio",
                formula: |p| safe_div(f(p, 16), f(p, 17).abs() + 1.0),
            },
            DerivedFeature {
                code: "d16",
                name: "transit_per_labor",
                formula: |p| safe_div(f(p, 15), f(p, 21) + 1e-9),
            },
            DerivedFeature {
                code: "d17",
                name: "rt_mobility",
                formula: |p| f(p, 1) * mobility_composite(p),
            },
        ];
        DerivedFeatureRegistry::new(entries).expect("standard registry is well formed")
    }

    pub fn entries(&self) -> &[DerivedFeature] {
        &self.entries
    }

    pub fn codes(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.code.to_string()).collect()
    }

    pub fn compute(&self, primary: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
        let idx: Vec<usize> = PRIMARY_CODES
            .iter()
            .map(|c| {
                primary
                    .column_index(c)
                    .ok_or_else(|| FeatureError::MissingPrimaryColumn(c.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let mut values = Vec::with_capacity(primary.nrows() * self.entries.len());
        let mut p = [0.0; NUM_PRIMARY];
        for (i, row) in primary.rows().enumerate() {
            for (slot, &j) in p.iter_mut().zip(&idx) {
                *slot = row[j];
            }
            for e in &self.entries {
                let v = (e.formula)(&p);
                if !v.is_finite() {
                    return Err(FeatureError::NonFinite {
                        code: e.code.to_string(),
                        row: i,
                    });
                }
                values.push(v);
            }
        }
        Ok(FeatureMatrix::from_parts_unchecked(
            primary.nrows(),
            self.codes(),
            values,
        ))
    }
}

/// Derived features under the standard registry.
pub fn compute_derived_features(primary: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
    DerivedFeatureRegistry::standard().compute(primary)
}

pub fn concat_features(
    primary: &FeatureMatrix,
    derived: &FeatureMatrix,
) -> Result<FeatureMatrix, FeatureError> {
    if primary.nrows() != derived.nrows() {
        return Err(FeatureError::RowCountMismatch {
            left: primary.nrows(),
            right: derived.nrows(),
        });
    }
    let mut codes = primary.column_codes().to_vec();
    codes.extend_from_slice(derived.column_codes());
    let mut values = Vec::with_capacity(primary.values().len() + derived.values().len());
    for (a, b) in primary.rows().zip(derived.rows()) {
        values.extend_from_slice(a);
        values.extend_from_slice(b);
    }
    if let Some(dup) = derived
        .column_codes()
        .iter()
        .find(|c| primary.column_codes().contains(c))
    {
        return Err(FeatureError::DuplicateColumn(dup.clone()));
    }
    Ok(FeatureMatrix::from_parts_unchecked(
        primary.nrows(),
        codes,
        values,
    ))
}

/// Primary ++ derived (27 + 17 = 44 columns).
pub fn expand_features(primary: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
    let derived = compute_derived_features(primary)?;
    concat_features(primary, &derived)
}

/// Average ranks (1-based), ties share the mean of their positions.
pub(crate) fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceReport {
    codes: Vec<String>,
    /// Per feature, per target, in [0, 1].
    scores: Vec<[f64; 4]>,
}

impl RelevanceReport {
    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn scores(&self) -> &[[f64; 4]] {
        &self.scores
    }

    pub fn score(&self, code: &str, target: usize) -> Option<f64> {
        self.codes
            .iter()
            .position(|c| c == code)
            .map(|i| self.scores[i][target])
    }

    /// Feature indices ordered by descending score for `target`.
    pub fn ranking(&self, target: usize) -> Vec<usize> {
        self.rank_by(|s| s[target])
    }

    /// Feature indices ordered by descending mean score over all targets.
    pub fn mean_ranking(&self) -> Vec<usize> {
        self.rank_by(|s| s.iter().sum::<f64>() / 4.0)
    }

    fn rank_by(&self, key: impl Fn(&[f64; 4]) -> f64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.codes.len()).collect();
        // stable sort keeps column order among ties
        idx.sort_by(|&a, &b| key(&self.scores[b]).total_cmp(&key(&self.scores[a])));
        idx
    }

    /// CSV with scores as percentages.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["feature"];
        header.extend_from_slice(&TARGET_NAMES);
        w.write_record(&header)?;
        for (code, s) in self.codes.iter().zip(&self.scores) {
            let mut rec = vec![code.clone()];
            rec.extend(s.iter().map(|v| format!("{:.2}", v * 100.0)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// |Spearman| per (feature, target), divided by the per-target maximum.
pub fn score_relevance(
    features: &FeatureMatrix,
    targets: &TargetMatrix,
) -> Result<RelevanceReport, FeatureError> {
    if features.nrows() != targets.nrows() {
        return Err(FeatureError::RowCountMismatch {
            left: features.nrows(),
            right: targets.nrows(),
        });
    }
    if features.nrows() < 3 {
        return Err(FeatureError::TooFewRows(features.nrows()));
    }
    let target_ranks: Vec<Vec<f64>> = (0..4).map(|k| average_ranks(&targets.column(k))).collect();
    let mut raw: Vec<[f64; 4]> = (0..features.ncols())
        .map(|j| {
            let fr = average_ranks(&features.column(j));
            let mut s = [0.0; 4];
            for (k, tr) in target_ranks.iter().enumerate() {
                s[k] = pearson(&fr, tr).abs();
            }
            s
        })
        .collect();
    for k in 0..4 {
        let max = raw.iter().map(|s| s[k]).fold(0.0, f64::max);
        for s in &mut raw {
            s[k] = if max > 0.0 { s[k] / max } else { 0.0 };
        }
    }
    Ok(RelevanceReport {
        codes: features.column_codes().to_vec(),
        scores: raw,
    })
}

#[derive(Debug, Clone, Copy)]
pub enum Selection<'a> {
    /// Exactly these columns, in this order.
    Explicit(&'a [&'a str]),
    /// The `top_n` columns by mean relevance across targets.
    Ranked {
        report: &'a RelevanceReport,
        top_n: usize,
    },
}

impl Selection<'static> {
    pub fn table2() -> Self {
        Selection::Explicit(&TABLE2_FEATURES)
    }
}

/// Resolves a selection to an ordered list of column codes.
pub fn selected_codes(available: &[String], selection: Selection<'_>) -> Result<Vec<String>, FeatureError> {
    let codes: Vec<String> = match selection {
        Selection::Explicit(list) => list.iter().map(|s| s.to_string()).collect(),
        Selection::Ranked { report, top_n } => {
            if top_n == 0 || top_n > report.codes.len() {
                return Err(FeatureError::BadTopN {
                    top_n,
                    available: report.codes.len(),
                });
            }
            report.mean_ranking()[..top_n]
                .iter()
                .map(|&i| report.codes[i].clone())
                .collect()
        }
    };
    for c in &codes {
        if !available.contains(c) {
            return Err(FeatureError::UnknownFeatureCode(c.clone()));
        }
    }
    Ok(codes)
}

/// Copies the chosen columns; values are not recomputed.
pub fn select_columns(features: &FeatureMatrix, codes: &[String]) -> Result<FeatureMatrix, FeatureError> {
    let idx: Vec<usize> = codes
        .iter()
        .map(|c| {
            features
                .column_index(c)
                .ok_or_else(|| FeatureError::UnknownFeatureCode(c.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut values = Vec::with_capacity(features.nrows() * idx.len());
    for row in features.rows() {
        values.extend(idx.iter().map(|&j| row[j]));
    }
    Ok(FeatureMatrix::from_parts_unchecked(
        features.nrows(),
        codes.to_vec(),
        values,
    ))
}

pub fn select_features(
    features: &FeatureMatrix,
    selection: Selection<'_>,
) -> Result<FeatureMatrix, FeatureError> {
    let codes = selected_codes(features.column_codes(), selection)?;
    select_columns(features, &codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::primary_codes;

    fn primary(rows: &[[f64; NUM_PRIMARY]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(primary_codes(), rows).unwrap()
    }

    fn base_row() -> [f64; NUM_PRIMARY] {
        let mut p = [1.0; NUM_PRIMARY];
        for (j, v) in p.iter_mut().enumerate() {
            *v = 1.0 + j as f64;
        }
        p
    }

    #[test]
    fn registry_hand_evaluated() {
        let mut p = base_row();
        p[21..27].copy_from_slice(&[100.0; 6]);
        let d = compute_derived_features(&primary(&[p])).unwrap();
        assert_eq!(d.ncols(), 17);
        let get = |code: &str| d.get(0, d.column_index(code).unwrap());
        assert_eq!(get("d01"), 600.0);
        assert!((get("d04") - 200.0 / 600.0).abs() < 1e-15);
        assert!((get("d02") - 0.5).abs() < 1e-15);
        assert!((get("d06") - 1.0 / 3.0).abs() < 1e-15);
        // feat_03 = 3 in base row
        assert_eq!(get("d07"), 200.0);
        assert_eq!(get("d08"), 1e5 * 11.0 / 600.0);
        // mean of feat_12..feat_17 = 14.5, times feat_01 = 1
        assert_eq!(get("d13"), 14.5);
        assert_eq!(get("d17"), 14.5);
        assert_eq!(get("d14"), 12.0 / 18.0);
    }

    #[test]
    fn zero_land_area_guarded() {
        let mut p = base_row();
        p[2] = 0.0;
        let d = compute_derived_features(&primary(&[p])).unwrap();
        assert_eq!(d.get(0, d.column_index("d07").unwrap()), 0.0);
    }

    #[test]
    fn zero_population_guarded() {
        let mut p = base_row();
        p[21..27].copy_from_slice(&[0.0; 6]);
        let d = compute_derived_features(&primary(&[p])).unwrap();
        assert!(d.values().iter().all(|v| v.is_finite()));
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.get(0, 1), 0.0);
    }

    #[test]
    fn zero_mobility() {
        let mut p = base_row();
        p[11..17].copy_from_slice(&[0.0; 6]);
        let d = compute_derived_features(&primary(&[p])).unwrap();
        assert_eq!(d.get(0, d.column_index("d13").unwrap()), 0.0);
        assert_eq!(d.get(0, d.column_index("d17").unwrap()), 0.0);
    }

    #[test]
    fn missing_primary_column() {
        let m = FeatureMatrix::from_rows(vec!["feat_01".into()], &[[1.0]]).unwrap();
        assert_eq!(
            compute_derived_features(&m).unwrap_err(),
            FeatureError::MissingPrimaryColumn("feat_02".into())
        );
    }

    #[test]
    fn concat_shape_and_order() {
        let p = primary(&[base_row(), base_row()]);
        let d = compute_derived_features(&p).unwrap();
        let all = concat_features(&p, &d).unwrap();
        assert_eq!((all.nrows(), all.ncols()), (2, 44));
        let mut expected = primary_codes();
        expected.extend(d.column_codes().iter().cloned());
        assert_eq!(all.column_codes(), &expected[..]);

        let short = primary(&[base_row()]);
        assert_eq!(
            concat_features(&short, &d).unwrap_err(),
            FeatureError::RowCountMismatch { left: 1, right: 2 }
        );
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    fn toy_scores() -> (FeatureMatrix, TargetMatrix) {
        let n = 20;
        let t: Vec<[f64; 4]> = (0..n)
            .map(|i| {
                let x = i as f64;
                [x, (x - 10.0).powi(2), -x, (x * 0.7).sin()]
            })
            .collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![i as f64, 3.0, ((i * 7) % 11) as f64])
            .collect();
        let fm =
            FeatureMatrix::from_rows(vec!["same".into(), "const".into(), "noise".into()], &rows).unwrap();
        (fm, TargetMatrix::new(t))
    }

    #[test]
    fn relevance_basics() {
        let (fm, tm) = toy_scores();
        let r = score_relevance(&fm, &tm).unwrap();
        assert_eq!(r.score("same", 0), Some(1.0));
        assert_eq!(r.score("same", 2), Some(1.0));
        for k in 0..4 {
            assert_eq!(r.score("const", k), Some(0.0));
            let max = r.scores().iter().map(|s| s[k]).fold(0.0, f64::max);
            assert!(max == 1.0 || max == 0.0);
        }
        assert!(r.scores().iter().flatten().all(|&s| (0.0..=1.0).contains(&s)));
        assert_eq!(r.ranking(0)[0], 0);
    }

    #[test]
    fn relevance_too_few_rows() {
        let fm = FeatureMatrix::from_rows(vec!["a".into()], &[[1.0], [2.0]]).unwrap();
        let tm = TargetMatrix::new(vec![[0.0; 4]; 2]);
        assert_eq!(
            score_relevance(&fm, &tm).unwrap_err(),
            FeatureError::TooFewRows(2)
        );
    }

    #[test]
    fn relevance_csv_in_percent() {
        let (fm, tm) = toy_scores();
        let r = score_relevance(&fm, &tm).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "feature,infections,hospitalizations,recoveries,deaths"
        );
        assert!(lines.next().unwrap().starts_with("same,100.00,"));
    }

    #[test]
    fn explicit_table2_selection() {
        let p = primary(&[base_row(), base_row()]);
        let all = expand_features(&p).unwrap();
        let sel = select_features(&all, Selection::table2()).unwrap();
        assert_eq!(sel.ncols(), 13);
        assert_eq!(sel.column_codes(), &TABLE2_FEATURES.map(String::from)[..]);
        // feat_05 is the 5th primary value in base_row
        assert_eq!(sel.get(0, 0), 5.0);
        assert_eq!(sel.get(1, 12), 7.0);

        assert_eq!(
            select_features(&all, Selection::Explicit(&["feat_99"])).unwrap_err(),
            FeatureError::UnknownFeatureCode("feat_99".into())
        );
    }

    #[test]
    fn ranked_selection() {
        let (fm, tm) = toy_scores();
        let r = score_relevance(&fm, &tm).unwrap();
        let all = select_features(&fm, Selection::Ranked { report: &r, top_n: 3 }).unwrap();
        assert_eq!(all.ncols(), 3);
        assert_eq!(all.column_codes()[0], "same");
        assert_eq!(all.column_codes()[2], "const");
        assert!(matches!(
            select_features(&fm, Selection::Ranked { report: &r, top_n: 4 }),
            Err(FeatureError::BadTopN { .. })
        ));
        assert!(select_features(&fm, Selection::Ranked { report: &r, top_n: 0 }).is_err());
    }
}
