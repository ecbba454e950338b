use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regio_forecast_core::dataset::parse_regional_csv;
use regio_forecast_core::{MetricReport, RegionId};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regio-forecast"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let data = dir.join("data");
    let mut args = vec!["synth", "--seed", "1", "--out", p(&data)];
    args.extend_from_slice(extra);
    ok(&args);
    data
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn synth_writes_parseable_files() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), &[]);
    let again = tmp.path().join("again");
    ok(&["synth", "--seed", "1", "--out", p(&again)]);
    for r in RegionId::BENCHMARK {
        let ds = parse_regional_csv(&data.join(r.file_name()), r).unwrap();
        assert_eq!(ds.len(), 362);
        assert_eq!(
            fs::read(data.join(r.file_name())).unwrap(),
            fs::read(again.join(r.file_name())).unwrap()
        );
    }
    assert_eq!(fs::read_dir(&data).unwrap().count(), 7);

    let bad = run(&["synth", "--rows", "5", "--out", p(&tmp.path().join("x"))]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn train_and_predict() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), &[]);
    let out = tmp.path().join("model");
    ok(&[
        "train",
        "--data-dir",
        p(&data),
        "--case-study",
        "ontario",
        "--out",
        p(&out),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("train_report.json")).unwrap()).unwrap();
    assert_eq!(report["pool_regions"].as_array().unwrap().len(), 6);
    assert_eq!(report["case_train_rows"], 362 - 54);
    assert_eq!(report["dedicated_instances"], 6 * 362 + 308);

    // 54 feature rows in, 54 predictions out
    let text = fs::read_to_string(data.join("quebec.csv")).unwrap();
    let input = tmp.path().join("input.csv");
    fs::write(&input, text.lines().take(55).collect::<Vec<_>>().join("\n")).unwrap();
    let model = out.join("model.json");
    ok(&[
        "predict",
        "--model",
        p(&model),
        "--input",
        p(&input),
        "--out",
        p(&out),
    ]);
    let pred = out.join("predictions.csv");
    assert_eq!(line_count(&pred), 55);
    assert!(fs::read_to_string(&pred)
        .unwrap()
        .starts_with("date,infections,hospitalizations,recoveries,deaths,infections_rounded"));

    ok(&[
        "ppe",
        "--model",
        p(&model),
        "--input",
        p(&input),
        "--out",
        p(&out),
    ]);
    assert_eq!(line_count(&out.join("ppe.csv")), 55);
    let bad_cap = run(&[
        "ppe",
        "--model",
        p(&model),
        "--input",
        p(&input),
        "--out",
        p(&out),
        "--capacity",
        "1.2",
    ]);
    assert_eq!(bad_cap.status.code(), Some(2));

    let bumped = tmp.path().join("old.json");
    let json =
        fs::read_to_string(&model)
            .unwrap()
            .replacen("regio-forecast-model/1", "regio-forecast-model/0", 1);
    fs::write(&bumped, json).unwrap();
    let stale = run(&[
        "predict",
        "--model",
        p(&bumped),
        "--input",
        p(&input),
        "--out",
        p(&out),
    ]);
    assert_eq!(stale.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&stale.stderr).contains("version"));
}

#[test]
fn staffing_series() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), &["--regions", "3", "--rows", "80"]);
    let out = tmp.path().join("m");
    ok(&[
        "train",
        "--data-dir",
        p(&data),
        "--case-study",
        "0",
        "--test-days",
        "10",
        "--out",
        p(&out),
    ]);
    let text = fs::read_to_string(data.join("alberta.csv")).unwrap();
    let input = tmp.path().join("in.csv");
    fs::write(&input, text.lines().take(4).collect::<Vec<_>>().join("\n")).unwrap();
    let staffing = tmp.path().join("staff.csv");
    fs::write(
        &staffing,
        "date,operating_capacity,personnel\n2020-01-25,1.0,0\n2020-01-26,1.0,10\n2020-01-27,0.5,10\n",
    )
    .unwrap();
    ok(&[
        "ppe",
        "--model",
        p(&out.join("model.json")),
        "--input",
        p(&input),
        "--staffing",
        p(&staffing),
        "--out",
        p(&out),
    ]);
    let rows: Vec<String> = fs::read_to_string(out.join("ppe.csv"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(rows.len(), 4);
    let kits: Vec<f64> = rows[1..]
        .iter()
        .map(|r| r.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(kits[0], 0.0);
    assert!(kits[1] <= 10.0 && kits[2] <= 5.0);

    fs::write(&staffing, "date,operating_capacity,personnel\n2020-01-25,1.0,3\n").unwrap();
    let short = run(&[
        "ppe",
        "--model",
        p(&out.join("model.json")),
        "--input",
        p(&input),
        "--staffing",
        p(&staffing),
        "--out",
        p(&out),
    ]);
    assert_eq!(short.status.code(), Some(3));
}

#[test]
fn config_and_data_errors() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), &[]);
    let out = tmp.path().join("out");

    let missing = run(&[
        "train",
        "--data-dir",
        p(&data),
        "--case-study",
        "nova_scotia",
        "--out",
        p(&out),
    ]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nova_scotia.csv"));

    let zero_k = run(&[
        "train",
        "--data-dir",
        p(&data),
        "--case-study",
        "ontario",
        "--k",
        "0",
        "--out",
        p(&out),
    ]);
    assert_eq!(zero_k.status.code(), Some(2));

    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"k": 0}"#).unwrap();
    let from_file = run(&[
        "train",
        "--config",
        p(&cfg),
        "--data-dir",
        p(&data),
        "--case-study",
        "ontario",
        "--out",
        p(&out),
    ]);
    assert_eq!(from_file.status.code(), Some(2));
    // flag beats file
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--k",
        "3",
        "--data-dir",
        p(&data),
        "--case-study",
        "ontario",
        "--out",
        p(&out),
    ]);
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["config"]["k"], 3);

    fs::write(&cfg, r#"{"not_a_key": 1}"#).unwrap();
    assert_eq!(run(&["rotate", "--config", p(&cfg)]).status.code(), Some(2));

    let no_case = run(&["evaluate", "--data-dir", p(&data), "--out", p(&out)]);
    assert_eq!(no_case.status.code(), Some(2));

    let lonely = tmp.path().join("lonely");
    fs::create_dir_all(&lonely).unwrap();
    fs::copy(data.join("ontario.csv"), lonely.join("ontario.csv")).unwrap();
    let one = run(&[
        "train",
        "--data-dir",
        p(&lonely),
        "--case-study",
        "ontario",
        "--out",
        p(&out),
    ]);
    assert_eq!(one.status.code(), Some(3));

    let broken = tmp.path().join("broken");
    fs::create_dir_all(&broken).unwrap();
    fs::copy(data.join("ontario.csv"), broken.join("ontario.csv")).unwrap();
    fs::write(broken.join("quebec.csv"), "date,feat_01\n2020-01-01,1\n").unwrap();
    let bad = run(&["rotate", "--data-dir", p(&broken), "--out", p(&out)]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("quebec.csv"));
}

#[test]
fn evaluate_and_rotate_tables() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), &[]);
    let one = tmp.path().join("one");
    ok(&[
        "evaluate",
        "--data-dir",
        p(&data),
        "--case-study",
        "quebec",
        "--bootstrap",
        "100",
        "--out",
        p(&one),
    ]);
    for t in ["infections", "hospitalizations", "recoveries", "deaths"] {
        assert_eq!(line_count(&one.join(format!("{t}_metrics.csv"))), 5);
    }

    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        ok(&[
            "rotate",
            "--data-dir",
            p(&data),
            "--bootstrap",
            "100",
            "--seed",
            "5",
            "--no-timing",
            "--out",
            p(dir),
        ]);
    }
    for f in ["infections_metrics.csv", "deaths_metrics.csv", "metrics.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(line_count(&a.join("recoveries_metrics.csv")), 1 + 7 * 4);
}

#[test]
fn noiseless_dedicated_model_fits() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), &["--noise", "0"]);
    let out = tmp.path().join("out");
    ok(&[
        "evaluate",
        "--data-dir",
        p(&data),
        "--case-study",
        "alberta",
        "--generic-weight",
        "0",
        "--bootstrap",
        "50",
        "--out",
        p(&out),
    ]);
    let reports: Vec<MetricReport> =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    for t in &reports[0].targets {
        assert!(t.r2.mid > 0.99, "{}: {}", t.target, t.r2.mid);
    }
}

#[test]
fn relevance_table() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), &["--regions", "3", "--rows", "60"]);
    let out = tmp.path().join("rel");
    ok(&["relevance", "--data-dir", p(&data), "--out", p(&out)]);
    let text = fs::read_to_string(out.join("relevance.csv")).unwrap();
    assert_eq!(text.lines().count(), 45);
    assert_eq!(
        text.lines().next().unwrap(),
        "feature,infections,hospitalizations,recoveries,deaths"
    );
}
