//! Synthetic regional datasets in the ingest schema.
//!
//! All regions share one national timeline: epidemic waves, policy stages,
//! demographic drift and vaccination. Each region scales the shared case
//! curves by its own factor and adds iid daily noise to a few features and
//! to the targets. Region identity is visible only through feat_04 and
//! features outside the default selection, so rows from other regions on the
//! same day are good neighbours and transfer helps when the case study has
//! few training days.

use chrono::{Datelike, Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataRow, RegionalDataset, NUM_PRIMARY};
use crate::region::RegionId;
use crate::seed::derive_seed;

pub const DEFAULT_ROWS: usize = 362;
pub const MIN_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("bad synthetic spec: {0}")]
    BadSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// 1..=10. The seven benchmark provinces come first.
    pub regions: usize,
    pub rows: usize,
    /// Relative noise level; 0 gives smooth, exactly shared features.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            regions: RegionId::BENCHMARK.len(),
            rows: DEFAULT_ROWS,
            noise: 0.1,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.regions == 0 || self.regions > 10 {
            return Err(SynthError::BadSpec(format!(
                "region count {} not in 1..=10",
                self.regions
            )));
        }
        if self.rows < MIN_ROWS {
            return Err(SynthError::BadSpec(format!("rows {} < {MIN_ROWS}", self.rows)));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(SynthError::BadSpec(format!("noise {} must be >= 0", self.noise)));
        }
        Ok(())
    }

    pub fn region_ids(&self) -> Vec<RegionId> {
        let mut ids = RegionId::BENCHMARK.to_vec();
        ids.extend(RegionId::all().filter(|r| !RegionId::BENCHMARK.contains(r)));
        ids.truncate(self.regions);
        ids
    }
}

fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 25).expect("valid date")
}

fn bump(t: f64, centre: f64, width: f64) -> f64 {
    let z = (t - centre) / width;
    (-0.5 * z * z).exp()
}

/// Shared daily infection curve at fractional position `u` in [0, 1].
fn wave_curve(u: f64) -> f64 {
    bump(u, 0.22, 0.06) + 1.6 * bump(u, 0.85, 0.09)
}

/// Curve value `lag` days earlier.
fn lagged(day: usize, lag: usize, n: usize) -> f64 {
    let d = day.saturating_sub(lag);
    wave_curve(d as f64 / (n - 1) as f64)
}

fn lockdown_stage(u: f64) -> f64 {
    match u {
        u if u < 0.14 => 3.0,
        u if u < 0.33 => 1.0,
        u if u < 0.64 => 2.0,
        u if u < 0.83 => 1.0,
        _ => 2.0,
    }
}

fn season(date: NaiveDate) -> f64 {
    match date.month() {
        3..=5 => 1.0,
        6..=8 => 2.0,
        9..=11 => 3.0,
        _ => 4.0,
    }
}

fn holiday(date: NaiveDate) -> f64 {
    const FIXED: [(u32, u32); 6] = [(1, 1), (7, 1), (9, 7), (10, 12), (12, 25), (12, 26)];
    let md = (date.month(), date.day());
    f64::from(u8::from(
        FIXED.contains(&md) || date.weekday().number_from_monday() == 7,
    ))
}

/// Per-region constants that never enter the selected features.
struct RegionProfile {
    scale: f64,
    rt_bias: f64,
    mobility_bias: f64,
    travellers: f64,
    employ: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn region_rows(region: RegionId, spec: &SyntheticSpec) -> Vec<DataRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 100 + region.code() as u64));
    let profile = RegionProfile {
        scale: 1.0 + 0.05 * rng.random_range(-1.0..=1.0),
        rt_bias: rng.random_range(-0.1..=0.1),
        mobility_bias: rng.random_range(-5.0..=5.0),
        travellers: rng.random_range(200.0..2000.0),
        employ: rng.random_range(55.0..65.0),
    };
    let n = spec.rows;
    let noise = spec.noise;
    let vaccine_start = (0.89 * n as f64) as usize;
    (0..n)
        .map(|day| {
            let u = day as f64 / (n - 1) as f64;
            let t = day as f64;
            let date = start_date() + Days::new(day as u64);
            let stage = lockdown_stage(u);
            let mut f = [0.0; NUM_PRIMARY];

            let growth = (lagged(day, 0, n) + 0.02) / (lagged(day, 5, n) + 0.02);
            f[0] = (growth.powf(0.8) + profile.rt_bias + 0.05 * noise * normal(&mut rng)).clamp(0.1, 4.0);
            f[1] = season(date);
            f[2] = 250_000.0;
            f[3] = f64::from(region.code());
            f[4] = if u < 0.55 { 1.0 } else { 2.0 };
            f[5] = if day < vaccine_start {
                0.0
            } else {
                let d = (day - vaccine_start + 1) as f64;
                150.0 * d * d
            };
            f[6] = stage;
            f[7] = if u < 0.14 {
                0.0
            } else if u < 0.5 {
                1.0
            } else {
                2.0
            };
            f[8] = if u < 0.47 { 0.0 } else { 1.0 };
            f[9] = holiday(date);
            f[10] = 40.0;

            let restriction = 4.0 - stage;
            let weekly = (t * std::f64::consts::TAU / 7.0).sin();
            for (j, depth) in [(11, -18.0), (12, -6.0), (13, 10.0), (14, -22.0), (15, -15.0)] {
                f[j] = depth * restriction
                    + profile.mobility_bias
                    + 2.0 * weekly
                    + 3.0 * noise * normal(&mut rng);
            }
            f[16] = 5.0 * restriction + 4.0 * wave_curve(u) + 10.0 * noise * normal(&mut rng);
            f[17] = (profile.travellers * (1.0 - 0.25 * restriction).max(0.05)).round();
            f[18] = profile.employ - 2.0 * restriction + 0.3 * noise * normal(&mut rng);
            f[19] = 100.0 - f[18] - 30.0;
            f[20] = (2_000_000.0 * (1.0 + 2e-4 * t) * (1.0 + 2e-3 * noise * normal(&mut rng))).round();

            for (j, base, drift) in [
                (21, 600_000.0, 1.0e-4),
                (22, 550_000.0, 0.6e-4),
                (23, 120_000.0, 2.0e-4),
                (24, 580_000.0, 0.9e-4),
                (25, 560_000.0, 0.5e-4),
                (26, 160_000.0, 2.2e-4),
            ] {
                f[j] = (base * (1.0 + drift * t)).round();
            }

            let cases = 1000.0 * profile.scale;
            let mut jitter = |v: f64| ((v * (1.0 + noise * normal(&mut rng))).max(0.0)).round() as i64;
            let targets = [
                jitter(cases * lagged(day, 0, n) + 2.0),
                jitter(0.08 * cases * lagged(day, 7, n) + 1.0),
                jitter(0.9 * cases * lagged(day, 14, n)),
                jitter(0.02 * cases * lagged(day, 18, n)),
            ];
            DataRow {
                date,
                features: f,
                targets,
            }
        })
        .collect()
}

/// One dataset per region in `spec.region_ids()` order.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<RegionalDataset>, SynthError> {
    spec.validate()?;
    Ok(spec
        .region_ids()
        .into_iter()
        .map(|r| RegionalDataset::new(r, region_rows(r, spec)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{read_regional_csv, validate_dataset, write_regional_csv};

    #[test]
    fn shape_and_schema() {
        let data = generate(&SyntheticSpec::default()).unwrap();
        assert_eq!(data.len(), 7);
        assert_eq!(data[0].region(), RegionId::ALBERTA);
        for ds in &data {
            assert_eq!(ds.len(), 362);
            assert!(validate_dataset(ds).violations.is_empty());
            let mut buf = Vec::new();
            write_regional_csv(ds, &mut buf).unwrap();
            let back = read_regional_csv(buf.as_slice(), ds.region()).unwrap();
            assert_eq!(back.rows(), ds.rows());
        }
        let last = data[0].rows().last().unwrap().date;
        assert_eq!(last, NaiveDate::from_ymd_opt(2021, 1, 20).unwrap());
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec {
            seed: 9,
            ..SyntheticSpec::default()
        };
        assert_eq!(
            generate(&spec).unwrap()[3].rows(),
            generate(&spec).unwrap()[3].rows()
        );
        let other = SyntheticSpec { seed: 10, ..spec };
        assert_ne!(
            generate(&spec).unwrap()[3].rows(),
            generate(&other).unwrap()[3].rows()
        );
    }

    #[test]
    fn all_ten_regions() {
        let spec = SyntheticSpec {
            regions: 10,
            rows: 12,
            ..SyntheticSpec::default()
        };
        let ids: Vec<_> = generate(&spec).unwrap().iter().map(|d| d.region()).collect();
        let mut sorted: Vec<_> = ids.iter().map(|r| r.code()).collect();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert_eq!(&ids[..7], &RegionId::BENCHMARK);
    }

    #[test]
    fn bad_specs() {
        for spec in [
            SyntheticSpec {
                regions: 0,
                ..SyntheticSpec::default()
            },
            SyntheticSpec {
                regions: 11,
                ..SyntheticSpec::default()
            },
            SyntheticSpec {
                rows: 9,
                ..SyntheticSpec::default()
            },
            SyntheticSpec {
                noise: -0.1,
                ..SyntheticSpec::default()
            },
        ] {
            assert!(matches!(generate(&spec), Err(SynthError::BadSpec(_))));
        }
    }
}
