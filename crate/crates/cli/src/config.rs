use std::fs;
use std::path::{Path, PathBuf};

use regio_forecast_core::dataset::DEFAULT_TEST_DAYS;
use regio_forecast_core::evaluation::{DEFAULT_LEVEL, DEFAULT_REPLICATES};
use regio_forecast_core::knn::{KnnConfig, DEFAULT_K};
use regio_forecast_core::mtl::{ExperimentPlan, MtlConfig, SelectionMode};
use regio_forecast_core::ppe::{check_capacity, DailyStaffing};
use regio_forecast_core::RegionId;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpeDefaults {
    pub operating_capacity: f64,
    pub personnel: u64,
}

impl Default for PpeDefaults {
    fn default() -> Self {
        PpeDefaults {
            operating_capacity: 0.75,
            personnel: 200,
        }
    }
}

/// Effective run settings. Precedence: flag, then config file, then default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub case_study: Option<RegionId>,
    pub k: usize,
    pub generic_weight: f64,
    pub test_days: usize,
    pub seed: u64,
    pub bootstrap: usize,
    pub confidence_level: f64,
    pub selection: SelectionMode,
    pub n_quantiles: Option<usize>,
    pub case_train_limit: Option<usize>,
    pub out: PathBuf,
    /// Write measured training time; off gives byte-identical reruns.
    pub record_timing: bool,
    pub ppe: PpeDefaults,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            case_study: None,
            k: DEFAULT_K,
            generic_weight: 1.0,
            test_days: DEFAULT_TEST_DAYS,
            seed: 0,
            bootstrap: DEFAULT_REPLICATES,
            confidence_level: DEFAULT_LEVEL,
            selection: SelectionMode::Table2,
            n_quantiles: None,
            case_train_limit: None,
            out: PathBuf::from("out"),
            record_timing: true,
            ppe: PpeDefaults::default(),
        }
    }
}

/// Flag values; `None` leaves the file or default value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub case_study: Option<RegionId>,
    pub k: Option<usize>,
    pub generic_weight: Option<f64>,
    pub test_days: Option<usize>,
    pub seed: Option<u64>,
    pub bootstrap: Option<usize>,
    pub top_n: Option<usize>,
    pub case_train_limit: Option<usize>,
    pub out: Option<PathBuf>,
    pub no_timing: bool,
    pub operating_capacity: Option<f64>,
    pub personnel: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn apply(mut self, o: Overrides) -> Self {
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = o.$field { self.$field = v; } )* };
        }
        set!(data_dir, k, generic_weight, test_days, seed, bootstrap, out);
        if o.case_study.is_some() {
            self.case_study = o.case_study;
        }
        if o.case_train_limit.is_some() {
            self.case_train_limit = o.case_train_limit;
        }
        if let Some(n) = o.top_n {
            self.selection = SelectionMode::Ranked { top_n: n };
        }
        if o.no_timing {
            self.record_timing = false;
        }
        if let Some(c) = o.operating_capacity {
            self.ppe.operating_capacity = c;
        }
        if let Some(p) = o.personnel {
            self.ppe.personnel = p;
        }
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.generic_weight.is_finite() && self.generic_weight >= 0.0) {
            return bad(format!("generic weight {} must be >= 0", self.generic_weight));
        }
        if self.test_days == 0 {
            return bad("test days must be at least 1".into());
        }
        if self.bootstrap == 0 {
            return bad("bootstrap replicates must be at least 1".into());
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return bad(format!(
                "confidence level {} not in (0, 1)",
                self.confidence_level
            ));
        }
        if let SelectionMode::Ranked { top_n: 0 } = self.selection {
            return bad("top-n must be at least 1".into());
        }
        if self.n_quantiles == Some(0) || self.case_train_limit == Some(0) {
            return bad("quantile count and case training limit must be positive".into());
        }
        check_capacity(self.ppe.operating_capacity).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn require_case_study(&self) -> Result<RegionId, CliError> {
        self.case_study
            .ok_or_else(|| CliError::Config("no case study given (use --case-study)".into()))
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            mtl: MtlConfig {
                knn: KnnConfig { k: self.k },
                generic_weight: self.generic_weight,
                selection: self.selection.clone(),
                n_quantiles: self.n_quantiles,
            },
            test_days: self.test_days,
            seed: self.seed,
            bootstrap_replicates: self.bootstrap,
            confidence_level: self.confidence_level,
            case_train_limit: self.case_train_limit,
        }
    }

    pub fn staffing(&self) -> DailyStaffing {
        DailyStaffing {
            operating_capacity: self.ppe.operating_capacity,
            personnel: self.ppe.personnel,
        }
    }
}
