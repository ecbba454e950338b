//! Daily PPE-kit demand for community health centres, driven by predicted
//! hospitalizations.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeatureRow;
use crate::mtl::{predict_monitoring, MtlError, MtlModel};

/// Column of feat_11 (CHC count) in the primary feature array.
const CHC_COLUMN: usize = 10;
const HOSPITALIZED: usize = 1;

#[derive(Debug, Error)]
pub enum PpeError {
    #[error("operating capacity {0} is outside [0, 1]")]
    InvalidCapacity(f64),
    #[error("community health centre count must be at least 1, got {0}")]
    ZeroChcCount(f64),
    #[error("hospitalized count {0} must be finite and >= 0")]
    InvalidHospitalized(f64),
    #[error("staffing series has {got} days, expected {expected}")]
    StaffingLength { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] MtlError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpeInputs {
    hospitalized: f64,
    chc_count: u64,
    operating_capacity: f64,
    personnel: u64,
}

pub fn check_capacity(cap: f64) -> Result<(), PpeError> {
    if (0.0..=1.0).contains(&cap) {
        Ok(())
    } else {
        Err(PpeError::InvalidCapacity(cap))
    }
}

impl PpeInputs {
    pub fn new(
        hospitalized: f64,
        chc_count: u64,
        operating_capacity: f64,
        personnel: u64,
    ) -> Result<Self, PpeError> {
        if !(hospitalized.is_finite() && hospitalized >= 0.0) {
            return Err(PpeError::InvalidHospitalized(hospitalized));
        }
        if chc_count == 0 {
            return Err(PpeError::ZeroChcCount(0.0));
        }
        check_capacity(operating_capacity)?;
        Ok(PpeInputs {
            hospitalized,
            chc_count,
            operating_capacity,
            personnel,
        })
    }

    pub fn hospitalized(&self) -> f64 {
        self.hospitalized
    }

    pub fn chc_count(&self) -> u64 {
        self.chc_count
    }

    pub fn operating_capacity(&self) -> f64 {
        self.operating_capacity
    }

    pub fn personnel(&self) -> u64 {
        self.personnel
    }

    /// Average hospitalized patients per centre.
    pub fn hospital_ratio(&self) -> f64 {
        self.hospitalized / self.chc_count as f64
    }
}

/// Kits needed for one day. Saturates at `capacity * personnel` once there
/// is more than one patient per centre.
pub fn predict_ppe_kits(inputs: &PpeInputs) -> f64 {
    let staffed = inputs.operating_capacity * inputs.personnel as f64;
    let r = inputs.hospital_ratio();
    if r > 1.0 {
        staffed
    } else {
        staffed * r
    }
}

/// Items per kit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KitComposition {
    pub face_shields: u32,
    pub n95: u32,
    pub glove_pairs: u32,
    pub shoe_cover_pairs: u32,
    pub gowns: u32,
}

impl Default for KitComposition {
    fn default() -> Self {
        KitComposition {
            face_shields: 1,
            n95: 1,
            glove_pairs: 1,
            shoe_cover_pairs: 1,
            gowns: 1,
        }
    }
}

impl KitComposition {
    pub fn items_per_kit(&self) -> u64 {
        [
            self.face_shields,
            self.n95,
            self.glove_pairs,
            self.shoe_cover_pairs,
            self.gowns,
        ]
        .iter()
        .map(|&m| u64::from(m))
        .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemDemand {
    pub face_shields: u64,
    pub n95: u64,
    pub glove_pairs: u64,
    pub shoe_cover_pairs: u64,
    pub gowns: u64,
}

/// Whole kits first, then per-item counts.
pub fn expand_kit_items(kits: f64, comp: &KitComposition) -> ItemDemand {
    let whole = kits.max(0.0).ceil() as u64;
    ItemDemand {
        face_shields: whole * u64::from(comp.face_shields),
        n95: whole * u64::from(comp.n95),
        glove_pairs: whole * u64::from(comp.glove_pairs),
        shoe_cover_pairs: whole * u64::from(comp.shoe_cover_pairs),
        gowns: whole * u64::from(comp.gowns),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyStaffing {
    pub operating_capacity: f64,
    pub personnel: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Staffing {
    Constant(DailyStaffing),
    Daily(Vec<DailyStaffing>),
}

impl Staffing {
    fn for_day(&self, i: usize) -> DailyStaffing {
        match self {
            Staffing::Constant(s) => *s,
            Staffing::Daily(v) => v[i],
        }
    }

    fn validate(&self, days: usize) -> Result<(), PpeError> {
        match self {
            Staffing::Constant(s) => check_capacity(s.operating_capacity),
            Staffing::Daily(v) => {
                if v.len() != days {
                    return Err(PpeError::StaffingLength {
                        expected: days,
                        got: v.len(),
                    });
                }
                v.iter().try_for_each(|s| check_capacity(s.operating_capacity))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpeDay {
    pub date: NaiveDate,
    pub predicted_hospitalized: f64,
    pub hsp_ratio: f64,
    pub kits: f64,
    pub kits_ceil: u64,
    pub items: ItemDemand,
}

/// Kits for a known hospitalization series, one entry per day.
pub fn kits_for_series(
    days: &[(NaiveDate, f64, f64)],
    staffing: &Staffing,
    comp: &KitComposition,
) -> Result<Vec<PpeDay>, PpeError> {
    staffing.validate(days.len())?;
    days.iter()
        .enumerate()
        .map(|(i, &(date, hospitalized, chc))| {
            let chc_count = chc.round();
            if chc_count.is_nan() || chc_count < 1.0 {
                return Err(PpeError::ZeroChcCount(chc));
            }
            let s = staffing.for_day(i);
            let inputs = PpeInputs::new(hospitalized, chc_count as u64, s.operating_capacity, s.personnel)?;
            let kits = predict_ppe_kits(&inputs);
            Ok(PpeDay {
                date,
                predicted_hospitalized: hospitalized,
                hsp_ratio: inputs.hospital_ratio(),
                kits,
                kits_ceil: kits.ceil() as u64,
                items: expand_kit_items(kits, comp),
            })
        })
        .collect()
}

/// Predicts hospitalizations with `model` and converts each day to kits.
/// The CHC count comes from feat_11 of each row.
pub fn forecast_series(
    model: &MtlModel,
    rows: &[FeatureRow],
    staffing: &Staffing,
    comp: &KitComposition,
) -> Result<Vec<PpeDay>, PpeError> {
    staffing.validate(rows.len())?;
    let preds = predict_monitoring(model, rows.iter().map(|r| &r.features))?;
    let days: Vec<(NaiveDate, f64, f64)> = rows
        .iter()
        .zip(&preds)
        .map(|(r, p)| (r.date, p.counts[HOSPITALIZED], r.features[CHC_COLUMN]))
        .collect();
    kits_for_series(&days, staffing, comp)
}

pub const PPE_HEADER: [&str; 10] = [
    "date",
    "predicted_hospitalized",
    "hsp_ratio",
    "kits",
    "kits_ceil",
    "face_shields",
    "n95",
    "glove_pairs",
    "shoe_cover_pairs",
    "gowns",
];

pub fn write_ppe_csv<W: Write>(days: &[PpeDay], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PPE_HEADER)?;
    for d in days {
        w.write_record([
            d.date.to_string(),
            format!("{:.6}", d.predicted_hospitalized),
            format!("{:.6}", d.hsp_ratio),
            format!("{:.6}", d.kits),
            d.kits_ceil.to_string(),
            d.items.face_shields.to_string(),
            d.items.n95.to_string(),
            d.items.glove_pairs.to_string(),
            d.items.shoe_cover_pairs.to_string(),
            d.items.gowns.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kits(h: f64, chc: u64, cap: f64, personnel: u64) -> f64 {
        predict_ppe_kits(&PpeInputs::new(h, chc, cap, personnel).unwrap())
    }

    #[test]
    fn worked_examples() {
        assert_eq!(kits(120.0, 40, 0.75, 200), 150.0);
        assert_eq!(kits(20.0, 40, 0.75, 200), 75.0);
        assert_eq!(kits(0.0, 40, 0.75, 200), 0.0);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(
            PpeInputs::new(1.0, 1, 1.2, 5),
            Err(PpeError::InvalidCapacity(_))
        ));
        assert!(matches!(
            PpeInputs::new(1.0, 1, -0.1, 5),
            Err(PpeError::InvalidCapacity(_))
        ));
        assert!(matches!(
            PpeInputs::new(1.0, 0, 0.5, 5),
            Err(PpeError::ZeroChcCount(_))
        ));
        assert!(matches!(
            PpeInputs::new(-1.0, 3, 0.5, 5),
            Err(PpeError::InvalidHospitalized(_))
        ));
    }

    #[test]
    fn item_expansion() {
        let c = KitComposition::default();
        assert_eq!(c.items_per_kit(), 5);
        let d = expand_kit_items(150.0, &c);
        assert_eq!(
            (d.face_shields, d.n95, d.glove_pairs, d.shoe_cover_pairs, d.gowns),
            (150, 150, 150, 150, 150)
        );
        assert_eq!(expand_kit_items(0.0, &c).gowns, 0);
        assert_eq!(expand_kit_items(74.2, &c).n95, 75);
        let double = KitComposition { glove_pairs: 2, ..c };
        assert_eq!(expand_kit_items(74.2, &double).glove_pairs, 150);
    }

    #[test]
    fn series_with_staffing() {
        let d0 = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let days: Vec<_> = (0..3).map(|i| (d0 + chrono::Days::new(i), 50.0, 10.0)).collect();
        let daily = Staffing::Daily(vec![
            DailyStaffing {
                operating_capacity: 1.0,
                personnel: 30,
            },
            DailyStaffing {
                operating_capacity: 1.0,
                personnel: 0,
            },
            DailyStaffing {
                operating_capacity: 0.5,
                personnel: 30,
            },
        ]);
        let out = kits_for_series(&days, &daily, &KitComposition::default()).unwrap();
        assert_eq!(
            out.iter().map(|d| d.kits).collect::<Vec<_>>(),
            vec![30.0, 0.0, 15.0]
        );
        assert_eq!(out[0].hsp_ratio, 5.0);

        let short = Staffing::Daily(vec![DailyStaffing {
            operating_capacity: 1.0,
            personnel: 1,
        }]);
        assert!(matches!(
            kits_for_series(&days, &short, &KitComposition::default()),
            Err(PpeError::StaffingLength { expected: 3, got: 1 })
        ));

        let mut buf = Vec::new();
        write_ppe_csv(&out, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), PPE_HEADER.join(","));
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "2020-03-01,50.000000,5.000000,30.000000,30,30,30,30,30,30"
        );
    }

    #[test]
    fn zero_centres_in_series() {
        let d0 = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let s = Staffing::Constant(DailyStaffing {
            operating_capacity: 0.5,
            personnel: 10,
        });
        assert!(matches!(
            kits_for_series(&[(d0, 3.0, 0.2)], &s, &KitComposition::default()),
            Err(PpeError::ZeroChcCount(_))
        ));
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(
            h1 in 0.0f64..500.0, h2 in 0.0f64..500.0,
            chc in 1u64..100, cap in 0.0f64..=1.0, personnel in 0u64..10_000,
        ) {
            let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
            let a = kits(lo, chc, cap, personnel);
            let b = kits(hi, chc, cap, personnel);
            prop_assert!(a <= b);
            prop_assert!(b <= cap * personnel as f64);
        }

        #[test]
        fn linear_below_saturation(chc in 1u64..100, cap in 0.0f64..=1.0, personnel in 0u64..10_000, f in 0.0f64..1.0) {
            let h = f * chc as f64;
            let slope = cap * personnel as f64 / chc as f64;
            prop_assert!((kits(h, chc, cap, personnel) - slope * h).abs() <= 1e-9 * (1.0 + slope * h));
        }
    }
}
