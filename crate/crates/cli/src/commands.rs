use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use regio_forecast_core::dataset::{
    parse_feature_csv, parse_regional_csv, pool_regions, primary_matrix, target_matrix, write_regional_csv,
    PooledRow,
};
use regio_forecast_core::evaluation::write_target_table;
use regio_forecast_core::features::{expand_features, score_relevance};
use regio_forecast_core::mtl::{predict_monitoring, rotate_regions, train_case, CaseEvaluation, MtlModel};
use regio_forecast_core::ppe::{forecast_series, write_ppe_csv, DailyStaffing, KitComposition, Staffing};
use regio_forecast_core::synth::{generate, SyntheticSpec};
use regio_forecast_core::{MetricReport, RegionId, RegionalDataset, TrainReport, TARGET_NAMES};
use serde::Deserialize;
use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::error::CliError;

pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const PPE_FILE: &str = "ppe.csv";
pub const RELEVANCE_FILE: &str = "relevance.csv";

pub fn metrics_file(target: usize) -> String {
    format!("{}_metrics.csv", TARGET_NAMES[target])
}

/// Writes through a temp file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| CliError::Internal(format!("cannot write {}: {e}", path.display()));
    fs::create_dir_all(dir).map_err(fail)?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents).map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(buf)
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

/// Every `<region>.csv` present in `dir`, in region-code order.
pub fn load_datasets(dir: &Path) -> Result<Vec<RegionalDataset>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!(
            "data directory {} does not exist",
            dir.display()
        )));
    }
    let mut out = Vec::new();
    for region in RegionId::all() {
        let path = dir.join(region.file_name());
        if path.is_file() {
            log::info!("loading {}", path.display());
            let ds = parse_regional_csv(&path, region)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            out.push(ds);
        }
    }
    Ok(out)
}

fn load_for_case(cfg: &RunConfig) -> Result<(Vec<RegionalDataset>, RegionId), CliError> {
    let case = cfg.require_case_study()?;
    let case_file = cfg.data_dir.join(case.file_name());
    if !case_file.is_file() {
        return Err(CliError::Data(format!(
            "case-study file {} not found",
            case_file.display()
        )));
    }
    let datasets = load_datasets(&cfg.data_dir)?;
    require_two(&datasets)?;
    Ok((datasets, case))
}

fn require_two(datasets: &[RegionalDataset]) -> Result<(), CliError> {
    if datasets.len() < 2 {
        return Err(CliError::Data(format!(
            "need at least 2 regional CSV files, found {}",
            datasets.len()
        )));
    }
    Ok(())
}

fn scrub_timing(report: &mut TrainReport) {
    report.generic_seconds = 0.0;
    report.dedicated_seconds = 0.0;
}

pub fn cmd_synth(cfg: &RunConfig, regions: usize, rows: usize, noise: f64) -> Result<Vec<PathBuf>, CliError> {
    let spec = SyntheticSpec {
        regions,
        rows,
        noise,
        seed: cfg.seed,
    };
    let mut written = Vec::new();
    for ds in generate(&spec)? {
        let path = cfg.out.join(ds.region().file_name());
        write_atomic(&path, &csv_bytes(|b| write_regional_csv(&ds, b))?)?;
        written.push(path);
    }
    Ok(written)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let (datasets, case) = load_for_case(cfg)?;
    let mut trained = train_case(&datasets, case, &cfg.plan())?;
    if !cfg.record_timing {
        scrub_timing(&mut trained.train_report);
    }
    log::info!(
        "{case}: {} generic + {} case-study instances",
        trained.train_report.generic_instances,
        trained.train_report.case_train_rows
    );
    let model_path = cfg.out.join(MODEL_FILE);
    let report_path = cfg.out.join(TRAIN_REPORT_FILE);
    write_atomic(&model_path, trained.model.to_json().as_bytes())?;
    write_atomic(&report_path, &json_bytes(&trained.train_report))?;
    Ok(vec![model_path, report_path])
}

fn write_metric_reports(cfg: &RunConfig, evals: Vec<CaseEvaluation>) -> Result<Vec<PathBuf>, CliError> {
    let reports: Vec<MetricReport> = evals
        .into_iter()
        .map(|e| {
            let mut m = e.metrics;
            if !cfg.record_timing {
                m.training_time_seconds = 0.0;
            }
            m
        })
        .collect();
    let mut written = Vec::new();
    for target in 0..TARGET_NAMES.len() {
        let path = cfg.out.join(metrics_file(target));
        write_atomic(&path, &csv_bytes(|b| write_target_table(&reports, target, b))?)?;
        written.push(path);
    }
    let json = cfg.out.join(METRICS_JSON);
    write_atomic(&json, &json_bytes(&reports))?;
    written.push(json);
    Ok(written)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let (datasets, case) = load_for_case(cfg)?;
    let eval = regio_forecast_core::mtl::evaluate_case(&datasets, case, &cfg.plan())?;
    write_metric_reports(cfg, vec![eval])
}

pub fn cmd_rotate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let datasets = load_datasets(&cfg.data_dir)?;
    require_two(&datasets)?;
    let evals = rotate_regions(&datasets, &cfg.plan())?;
    write_metric_reports(cfg, evals)
}

fn load_model(path: &Path) -> Result<MtlModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read model {}: {e}", path.display())))?;
    MtlModel::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn cmd_predict(cfg: &RunConfig, model: &Path, input: &Path) -> Result<Vec<PathBuf>, CliError> {
    let model = load_model(model)?;
    let rows = parse_feature_csv(input)?;
    let preds = predict_monitoring(&model, rows.iter().map(|r| &r.features))?;
    let bytes = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        let mut header = vec!["date".to_string()];
        header.extend(TARGET_NAMES.iter().map(|t| t.to_string()));
        header.extend(TARGET_NAMES.iter().map(|t| format!("{t}_rounded")));
        w.write_record(&header)?;
        for (row, p) in rows.iter().zip(&preds) {
            let mut rec = vec![row.date.to_string()];
            rec.extend(p.counts.iter().map(|c| format!("{c:.6}")));
            rec.extend(p.rounded.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let path = cfg.out.join(PREDICTIONS_FILE);
    write_atomic(&path, &bytes)?;
    Ok(vec![path])
}

#[derive(Debug, Deserialize)]
struct StaffingRecord {
    #[allow(dead_code)]
    date: String,
    operating_capacity: f64,
    personnel: u64,
}

fn read_staffing(path: &Path) -> Result<Staffing, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read staffing {}: {e}", path.display())))?;
    let days = r
        .deserialize::<StaffingRecord>()
        .map(|rec| {
            rec.map(|s| DailyStaffing {
                operating_capacity: s.operating_capacity,
                personnel: s.personnel,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Staffing::Daily(days))
}

pub fn cmd_ppe(
    cfg: &RunConfig,
    model: &Path,
    input: &Path,
    staffing: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let staffing = match staffing {
        Some(p) => read_staffing(p)?,
        None => Staffing::Constant(cfg.staffing()),
    };
    let model = load_model(model)?;
    let rows = parse_feature_csv(input)?;
    let days = forecast_series(&model, &rows, &staffing, &KitComposition::default())?;
    let path = cfg.out.join(PPE_FILE);
    write_atomic(&path, &csv_bytes(|b| write_ppe_csv(&days, b))?)?;
    Ok(vec![path])
}

/// Relevance of all 44 features over every loaded region, or over the
/// generic pool when a case study is set.
pub fn cmd_relevance(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let datasets = load_datasets(&cfg.data_dir)?;
    if datasets.is_empty() {
        return Err(CliError::Data(format!(
            "no regional CSV files in {}",
            cfg.data_dir.display()
        )));
    }
    let rows: Vec<PooledRow> = match cfg.case_study {
        Some(case) => pool_regions(&datasets, case)?,
        None => datasets
            .iter()
            .flat_map(|d| {
                d.rows().iter().map(|r| PooledRow {
                    region: d.region(),
                    row: r.clone(),
                })
            })
            .collect(),
    };
    let features = expand_features(&primary_matrix(rows.iter().map(|p| &p.row.features)))
        .map_err(|e| CliError::Data(e.to_string()))?;
    let targets = target_matrix(rows.iter().map(|p| &p.row));
    let report = score_relevance(&features, &targets).map_err(|e| CliError::Data(e.to_string()))?;
    let path = cfg.out.join(RELEVANCE_FILE);
    write_atomic(&path, &csv_bytes(|b| report.write_csv(b))?)?;
    Ok(vec![path])
}
