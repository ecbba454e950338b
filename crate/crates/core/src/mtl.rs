//! Generic/dedicated transfer model.
//!
//! The generic component memorizes every row pooled from the other regions.
//! The dedicated component starts from those instances, each source weight
//! multiplied by the generic weight λ, and then memorizes the case-study
//! training rows with weight 1. Predictions for the case study come from the
//! dedicated store. With λ = 1 this is plain kNN on the union of both row
//! sets; with λ = 0 the generic rows are inert and the model is a
//! dedicated-only kNN.
//!
//! Row pipeline: 27 primary features, 17 derived, select (13 by default),
//! quantile-normal per column, unit L2 norm per row. Targets are min-max
//! scaled and inverted back to non-negative counts after prediction.
//! Scalers are fitted once on the pool and refitted on pool plus case-study
//! training rows before the dedicated store is built.

use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    pool_regions, primary_matrix, split_train_test, target_matrix, DataRow, IngestError, PooledRow,
    RegionalDataset, TrainTestSplit, NUM_PRIMARY,
};
use crate::evaluation::{evaluate_predictions, BootstrapConfig, MetricError, MetricReport};
use crate::features::{
    expand_features, score_relevance, select_columns, selected_codes, FeatureError, Selection,
};
use crate::knn::{predict_batch, Instance, InstanceStore, KnnConfig, KnnError, SourceTag};
use crate::matrix::{FeatureMatrix, TargetMatrix};
use crate::region::RegionId;
use crate::scaling::{
    apply_minmax, apply_quantile_scaler, default_quantile_count, fit_minmax, fit_quantile_scaler,
    l2_normalize_rows, MinMaxScalerState, QuantileNormalScaler, ScalingError,
};
use crate::seed::derive_seed;

pub const MODEL_VERSION: &str = "regio-forecast-model/1";

#[derive(Debug, Error)]
pub enum MtlError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("generic pool is empty")]
    EmptyPool,
    #[error("generic pool contains rows of the case study {0}")]
    CaseStudyLeak(RegionId),
    #[error("no case-study training rows")]
    EmptyCaseData,
    #[error("generic weight {0} must be finite and >= 0")]
    NegativeWeight(f64),
    #[error("need at least 2 regional datasets, got {0}")]
    TooFewRegions(usize),
    #[error("no dataset for case study {0}")]
    MissingCaseStudy(RegionId),
}

/// How the modelling features are chosen from the 44 candidates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SelectionMode {
    /// The fixed 13-feature list.
    #[default]
    Table2,
    /// Top-n by mean relevance on the generic pool.
    Ranked {
        top_n: usize,
    },
    Explicit {
        codes: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlConfig {
    pub knn: KnnConfig,
    /// Multiplier λ on generic instance weights in the dedicated store.
    pub generic_weight: f64,
    pub selection: SelectionMode,
    /// Landmark count; `None` means `min(1000, rows)`.
    pub n_quantiles: Option<usize>,
}

impl Default for MtlConfig {
    fn default() -> Self {
        MtlConfig {
            knn: KnnConfig::default(),
            generic_weight: 1.0,
            selection: SelectionMode::Table2,
            n_quantiles: None,
        }
    }
}

impl MtlConfig {
    pub fn validate(&self) -> Result<(), MtlError> {
        self.knn.validate()?;
        if !(self.generic_weight.is_finite() && self.generic_weight >= 0.0) {
            return Err(MtlError::NegativeWeight(self.generic_weight));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedScalers {
    pub features: QuantileNormalScaler,
    pub targets: MinMaxScalerState,
}

fn expand<'a>(rows: impl IntoIterator<Item = &'a [f64; NUM_PRIMARY]>) -> Result<FeatureMatrix, MtlError> {
    Ok(expand_features(&primary_matrix(rows))?)
}

fn fit_scalers(
    selected: &FeatureMatrix,
    targets: &TargetMatrix,
    n_quantiles: Option<usize>,
) -> Result<FittedScalers, MtlError> {
    let nq = n_quantiles.unwrap_or_else(|| default_quantile_count(selected.nrows()));
    Ok(FittedScalers {
        features: fit_quantile_scaler(selected, nq)?,
        targets: fit_minmax(targets)?,
    })
}

/// Quantile-normal then unit-norm rows.
fn encode(scalers: &FittedScalers, selected: &FeatureMatrix) -> Result<Vec<Vec<f64>>, MtlError> {
    let z = apply_quantile_scaler(&scalers.features, selected)?;
    let unit = l2_normalize_rows(&z);
    if unit.zero_row_count() > 0 {
        log::warn!("{} all-zero feature rows after scaling", unit.zero_row_count());
    }
    Ok(unit.matrix.rows().map(<[f64]>::to_vec).collect())
}

fn build_store(
    scalers: &FittedScalers,
    selected: &FeatureMatrix,
    targets: &TargetMatrix,
    regions: &[RegionId],
) -> Result<InstanceStore, MtlError> {
    let encoded = encode(scalers, selected)?;
    let scaled = apply_minmax(&scalers.targets, targets);
    let instances = encoded
        .into_iter()
        .zip(scaled.rows())
        .zip(regions)
        .map(|((features, t), &region)| Instance {
            features,
            targets: *t,
            source: SourceTag {
                region: Some(region),
                weight: 1.0,
            },
        })
        .collect();
    Ok(InstanceStore::from_instances(instances)?)
}

/// Pool-side state kept until the dedicated component is trained.
#[derive(Debug, Clone)]
pub struct GenericComponent {
    case_study: RegionId,
    config: MtlConfig,
    selected_features: Vec<String>,
    regions: Vec<RegionId>,
    raw_features: FeatureMatrix,
    raw_targets: TargetMatrix,
    scalers: FittedScalers,
    store: InstanceStore,
    fit_seconds: f64,
}

impl GenericComponent {
    pub fn store(&self) -> &InstanceStore {
        &self.store
    }

    pub fn scalers(&self) -> &FittedScalers {
        &self.scalers
    }

    pub fn selected_features(&self) -> &[String] {
        &self.selected_features
    }

    pub fn regions(&self) -> &[RegionId] {
        &self.regions
    }

    pub fn fit_seconds(&self) -> f64 {
        self.fit_seconds
    }
}

/// Fits the generic component on rows pooled from regions other than
/// `case_study`.
pub fn train_generic(
    pool: &[PooledRow],
    case_study: RegionId,
    cfg: &MtlConfig,
) -> Result<GenericComponent, MtlError> {
    let start = Instant::now();
    cfg.validate()?;
    if pool.is_empty() {
        return Err(MtlError::EmptyPool);
    }
    if pool.iter().any(|p| p.region == case_study) {
        return Err(MtlError::CaseStudyLeak(case_study));
    }
    let all = expand(pool.iter().map(|p| &p.row.features))?;
    let targets = target_matrix(pool.iter().map(|p| &p.row));
    let codes = match &cfg.selection {
        SelectionMode::Table2 => selected_codes(all.column_codes(), Selection::table2())?,
        SelectionMode::Explicit { codes } => {
            let refs: Vec<&str> = codes.iter().map(String::as_str).collect();
            selected_codes(all.column_codes(), Selection::Explicit(&refs))?
        }
        SelectionMode::Ranked { top_n } => {
            let report = score_relevance(&all, &targets)?;
            selected_codes(
                all.column_codes(),
                Selection::Ranked {
                    report: &report,
                    top_n: *top_n,
                },
            )?
        }
    };
    let raw_features = select_columns(&all, &codes)?;
    let regions: Vec<RegionId> = pool.iter().map(|p| p.region).collect();
    let scalers = fit_scalers(&raw_features, &targets, cfg.n_quantiles)?;
    let store = build_store(&scalers, &raw_features, &targets, &regions)?;
    Ok(GenericComponent {
        case_study,
        config: cfg.clone(),
        selected_features: codes,
        regions,
        raw_features,
        raw_targets: targets,
        scalers,
        store,
        fit_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Seeds the dedicated store: generic instances with weights scaled by λ.
/// λ = 0 keeps the instances (and their tags) but makes them inert.
pub fn transfer_to_dedicated(generic: &InstanceStore, weight: f64) -> Result<InstanceStore, MtlError> {
    if !(weight.is_finite() && weight >= 0.0) {
        return Err(MtlError::NegativeWeight(weight));
    }
    Ok(generic.reweighted(weight)?)
}

/// A trained model; immutable, serializable as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlModel {
    version: String,
    case_study: RegionId,
    config: KnnConfig,
    generic_weight: f64,
    selected_features: Vec<String>,
    scalers: FittedScalers,
    generic_store: InstanceStore,
    dedicated_store: InstanceStore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub case_study: RegionId,
    pub pool_regions: Vec<RegionId>,
    pub generic_seconds: f64,
    pub dedicated_seconds: f64,
    pub generic_instances: usize,
    pub case_train_rows: usize,
    pub dedicated_instances: usize,
    pub n_quantiles: usize,
    pub target_min: [f64; 4],
    pub target_max: [f64; 4],
}

impl TrainReport {
    pub fn total_seconds(&self) -> f64 {
        self.generic_seconds + self.dedicated_seconds
    }
}

/// Refits scalers on pool plus case rows, then builds the dedicated store.
pub fn train_dedicated(
    generic: &GenericComponent,
    case_rows: &[DataRow],
) -> Result<(MtlModel, TrainReport), MtlError> {
    let start = Instant::now();
    if case_rows.is_empty() {
        return Err(MtlError::EmptyCaseData);
    }
    let cfg = &generic.config;
    let case_all = expand(case_rows.iter().map(|r| &r.features))?;
    let case_features = select_columns(&case_all, &generic.selected_features)?;
    let case_targets = target_matrix(case_rows);

    let union_features = generic
        .raw_features
        .vstack(&case_features)
        .expect("same selected columns");
    let union_targets = generic.raw_targets.vstack(&case_targets);
    let scalers = fit_scalers(&union_features, &union_targets, cfg.n_quantiles)?;

    let generic_store = build_store(
        &scalers,
        &generic.raw_features,
        &generic.raw_targets,
        &generic.regions,
    )?;
    let mut dedicated_store = transfer_to_dedicated(&generic_store, cfg.generic_weight)?;
    let case_regions = vec![generic.case_study; case_rows.len()];
    dedicated_store.extend(build_store(
        &scalers,
        &case_features,
        &case_targets,
        &case_regions,
    )?)?;

    let mut pool_regions = generic.regions.clone();
    pool_regions.dedup();
    let report = TrainReport {
        case_study: generic.case_study,
        pool_regions,
        generic_seconds: generic.fit_seconds,
        dedicated_seconds: start.elapsed().as_secs_f64(),
        generic_instances: generic_store.len(),
        case_train_rows: case_rows.len(),
        dedicated_instances: dedicated_store.len(),
        n_quantiles: scalers.features.n_quantiles(),
        target_min: scalers.targets.min,
        target_max: scalers.targets.max,
    };
    let model = MtlModel {
        version: MODEL_VERSION.to_string(),
        case_study: generic.case_study,
        config: cfg.knn,
        generic_weight: cfg.generic_weight,
        selected_features: generic.selected_features.clone(),
        scalers,
        generic_store,
        dedicated_store,
    };
    Ok((model, report))
}

/// Generic on `pool`, then dedicated on `case_rows`.
pub fn train_mtl(
    pool: &[PooledRow],
    case_rows: &[DataRow],
    case_study: RegionId,
    cfg: &MtlConfig,
) -> Result<(MtlModel, TrainReport), MtlError> {
    let generic = train_generic(pool, case_study, cfg)?;
    train_dedicated(&generic, case_rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitoringPrediction {
    /// [I, H, R, D] as non-negative reals.
    pub counts: [f64; 4],
    pub rounded: [i64; 4],
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("malformed model artifact: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model artifact version {found:?} is not supported (expected {expected:?})")]
    VersionMismatch { found: String, expected: &'static str },
    #[error("inconsistent model artifact: {0}")]
    Invalid(String),
}

impl MtlModel {
    pub fn case_study(&self) -> RegionId {
        self.case_study
    }

    pub fn knn_config(&self) -> &KnnConfig {
        &self.config
    }

    pub fn generic_weight(&self) -> f64 {
        self.generic_weight
    }

    pub fn selected_features(&self) -> &[String] {
        &self.selected_features
    }

    pub fn scalers(&self) -> &FittedScalers {
        &self.scalers
    }

    pub fn generic_store(&self) -> &InstanceStore {
        &self.generic_store
    }

    pub fn dedicated_store(&self) -> &InstanceStore {
        &self.dedicated_store
    }

    /// Unit-norm scaled feature vectors for raw primary rows, exactly as the
    /// stores see them.
    pub fn encode_rows<'a>(
        &self,
        rows: impl IntoIterator<Item = &'a [f64; NUM_PRIMARY]>,
    ) -> Result<Vec<Vec<f64>>, MtlError> {
        let all = expand(rows)?;
        let selected = select_columns(&all, &self.selected_features)?;
        encode(&self.scalers, &selected)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("version")
            .and_then(|v| v.as_str())
            .unwrap_or("<missing>");
        if found != MODEL_VERSION {
            return Err(ArtifactError::VersionMismatch {
                found: found.to_string(),
                expected: MODEL_VERSION,
            });
        }
        let model: MtlModel = serde_json::from_value(value)?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<(), ArtifactError> {
        let dim = self.selected_features.len();
        if self.scalers.features.columns() != self.selected_features.as_slice() {
            return Err(ArtifactError::Invalid(
                "scaler columns differ from selected features".into(),
            ));
        }
        for (name, store) in [
            ("generic", &self.generic_store),
            ("dedicated", &self.dedicated_store),
        ] {
            if store.dim() != dim {
                return Err(ArtifactError::Invalid(format!(
                    "{name} store has dimension {}, expected {dim}",
                    store.dim()
                )));
            }
        }
        self.config
            .validate()
            .map_err(|e| ArtifactError::Invalid(e.to_string()))
    }
}

/// Predicted (I, H, R, D) counts for raw primary feature rows.
pub fn predict_monitoring<'a>(
    model: &MtlModel,
    rows: impl IntoIterator<Item = &'a [f64; NUM_PRIMARY]>,
) -> Result<Vec<MonitoringPrediction>, MtlError> {
    let encoded = model.encode_rows(rows)?;
    let scaled = predict_batch(&model.dedicated_store, &encoded, &model.config)?;
    Ok(scaled
        .iter()
        .map(|p| {
            let counts = model.scalers.targets.invert_row(&p.0, true);
            MonitoringPrediction {
                counts,
                rounded: counts.map(|c| c.round() as i64),
            }
        })
        .collect())
}

/// Settings for a held-out evaluation of one or more case studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub mtl: MtlConfig,
    pub test_days: usize,
    pub seed: u64,
    pub bootstrap_replicates: usize,
    pub confidence_level: f64,
    /// Keep at most this many case-study training rows (random subset).
    pub case_train_limit: Option<usize>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            mtl: MtlConfig::default(),
            test_days: crate::dataset::DEFAULT_TEST_DAYS,
            seed: 0,
            bootstrap_replicates: crate::evaluation::DEFAULT_REPLICATES,
            confidence_level: crate::evaluation::DEFAULT_LEVEL,
            case_train_limit: None,
        }
    }
}

impl ExperimentPlan {
    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            replicates: self.bootstrap_replicates,
            level: self.confidence_level,
            seed: derive_seed(self.seed, 1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaseEvaluation {
    pub region: RegionId,
    pub split: TrainTestSplit,
    /// Case-study rows actually used for training (after any limit).
    pub case_train_indices: Vec<usize>,
    pub model: MtlModel,
    pub train_report: TrainReport,
    pub metrics: MetricReport,
}

/// A case-study model with the split it was trained on.
#[derive(Debug, Clone)]
pub struct CaseTraining {
    pub split: TrainTestSplit,
    /// Case-study rows actually used for training (after any limit).
    pub case_train_indices: Vec<usize>,
    pub model: MtlModel,
    pub train_report: TrainReport,
}

/// Splits the case study and trains on the other regions plus its
/// training rows.
pub fn train_case(
    datasets: &[RegionalDataset],
    case_study: RegionId,
    plan: &ExperimentPlan,
) -> Result<CaseTraining, MtlError> {
    plan.mtl.validate()?;
    let case = datasets
        .iter()
        .find(|d| d.region() == case_study)
        .ok_or(MtlError::MissingCaseStudy(case_study))?;
    let split = split_train_test(case, plan.test_days, plan.seed)?;
    let mut train_idx = split.train_indices.clone();
    if let Some(limit) = plan.case_train_limit {
        if limit == 0 {
            return Err(MtlError::EmptyCaseData);
        }
        if limit < train_idx.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, 2));
            let mut keep: Vec<usize> = sample(&mut rng, train_idx.len(), limit)
                .into_iter()
                .map(|i| train_idx[i])
                .collect();
            keep.sort_unstable();
            train_idx = keep;
        }
    }
    let pool = pool_regions(datasets, case_study).map_err(|e| match e {
        IngestError::EmptyPool(_) => MtlError::EmptyPool,
        other => other.into(),
    })?;
    let (model, train_report) = train_mtl(&pool, &case.select(&train_idx), case_study, &plan.mtl)?;
    Ok(CaseTraining {
        split,
        case_train_indices: train_idx,
        model,
        train_report,
    })
}

/// [`train_case`], then scores the held-out days.
pub fn evaluate_case(
    datasets: &[RegionalDataset],
    case_study: RegionId,
    plan: &ExperimentPlan,
) -> Result<CaseEvaluation, MtlError> {
    plan.bootstrap().validate()?;
    let trained = train_case(datasets, case_study, plan)?;
    let case = datasets
        .iter()
        .find(|d| d.region() == case_study)
        .expect("checked by train_case");
    let test_rows = case.select(&trained.split.test_indices);
    let preds = predict_monitoring(&trained.model, test_rows.iter().map(|r| &r.features))?;
    let actual: Vec<[f64; 4]> = test_rows.iter().map(DataRow::targets_f64).collect();
    let predicted: Vec<[f64; 4]> = preds.iter().map(|p| p.counts).collect();
    let metrics = evaluate_predictions(
        case_study,
        &actual,
        &predicted,
        trained.train_report.total_seconds(),
        &plan.bootstrap(),
    )?;
    Ok(CaseEvaluation {
        region: case_study,
        split: trained.split,
        case_train_indices: trained.case_train_indices,
        model: trained.model,
        train_report: trained.train_report,
        metrics,
    })
}

/// Every region takes a turn as the case study; results follow input order.
pub fn rotate_regions(
    datasets: &[RegionalDataset],
    plan: &ExperimentPlan,
) -> Result<Vec<CaseEvaluation>, MtlError> {
    if datasets.len() < 2 {
        return Err(MtlError::TooFewRegions(datasets.len()));
    }
    datasets
        .par_iter()
        .map(|ds| evaluate_case(datasets, ds.region(), plan))
        .collect()
}
