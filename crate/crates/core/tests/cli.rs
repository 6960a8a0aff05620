mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::{Behavior, StubService};
use loadprompt::eval::{parse_report_csv, CellOutcome};
use loadprompt::export::read_pairs;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_loadprompt"));
    cmd.env_remove("LM_ENDPOINT");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn loadprompt")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth_file(dir: &Path, extra: &[&str]) -> PathBuf {
    let path = dir.join("load.csv");
    let mut args = vec!["synth", "--seed", "7", "--days", "90", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    path
}

const SPLIT: [&str; 2] = ["--split", "1,1,1"];

#[test]
fn synth_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth_file(dir.path(), &[]);
    let first = std::fs::read(&a).unwrap();
    let b = synth_file(dir.path(), &[]);
    assert_eq!(first, std::fs::read(&b).unwrap(), "same seed, same bytes");

    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("timestamp,building_id,consumption_kwh"));
    assert_eq!(lines.count(), 6 * 2160);

    let out = run(&["synth", "--seed", "8", "--days", "2"]);
    assert!(out.status.success());
    assert_ne!(stdout(&out).lines().nth(1), text.lines().nth(1));
}

#[test]
fn synth_zero_days_is_usage_error() {
    let out = run(&["synth", "--days", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--days"));
}

#[test]
fn unknown_flags_and_help() {
    assert_eq!(run(&["evaluate", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn export_finetune_counts_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), &[]);
    let pairs = dir.path().join("pairs.jsonl");
    let windows = dir.path().join("eval.jsonl");
    let out = run(&[
        "export-finetune",
        "--data",
        data.to_str().unwrap(),
        "--building",
        "C",
        "--n",
        "30",
        "--out",
        pairs.to_str().unwrap(),
        "--eval-windows",
        windows.to_str().unwrap(),
        SPLIT[0],
        SPLIT[1],
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    // January 2018 is the training month: 744 hours.
    assert!(stdout(&out).contains("714 fine-tuning pairs"), "{}", stdout(&out));
    assert!(stdout(&out).contains("29 evaluation windows"), "{}", stdout(&out));
    let parsed = read_pairs(std::io::BufReader::new(std::fs::File::open(&pairs).unwrap())).unwrap();
    assert_eq!(parsed.len(), 714);
    assert_eq!(parsed[0].input.lines().count(), 30);
}

#[test]
fn export_unknown_building_lists_ids() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), &[]);
    let out = run(&[
        "export-finetune",
        "--data",
        data.to_str().unwrap(),
        "--building",
        "Q",
        "--out",
        dir.path().join("p.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("A, B, C, D, E, F"), "{}", stderr(&out));
}

#[test]
fn missing_data_file_is_data_error() {
    let out = run(&["evaluate", "--data", "/nonexistent/load.csv", "--backend", "oracle"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn default_split_needs_two_years() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), &[]);
    let out = run(&["evaluate", "--data", data.to_str().unwrap(), "--backend", "oracle"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--split"), "{}", stderr(&out));
}

#[test]
fn evaluate_oracle_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), &[]);
    let report = dir.path().join("out.csv");
    let out = run(&[
        "evaluate",
        "--data",
        data.to_str().unwrap(),
        "--building",
        "A",
        "--backend",
        "oracle",
        "--n",
        "30",
        "--m",
        "24",
        "--stride",
        "24",
        "--report",
        report.to_str().unwrap(),
        SPLIT[0],
        SPLIT[1],
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("0.000"), "{table}");
    let csv = std::fs::read_to_string(&report).unwrap();
    assert_eq!(
        csv,
        "model,source_building,target_building,horizon,rmse,mae,windows,faults\n\
         oracle,A,A,24,0.000,0.000,29,0\n"
    );
}

#[test]
fn evaluate_seasonal_on_periodic_synth_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), &["--noise-frac", "0", "--weekly-frac", "0"]);
    let report = dir.path().join("out.csv");
    let out = run(&[
        "evaluate",
        "--data",
        data.to_str().unwrap(),
        "--backend",
        "seasonal:24",
        "--report",
        report.to_str().unwrap(),
        SPLIT[0],
        SPLIT[1],
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = parse_report_csv(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let m = row.metrics().unwrap();
        assert_eq!((m.rmse, m.mae, m.faults), (0.0, 0.0, 0), "{row:?}");
    }
}

#[test]
fn evaluate_dead_remote_exits_with_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("remote:http://127.0.0.1:{port}");
    let out = run(&[
        "evaluate",
        "--synth-days",
        "90",
        "--backend",
        &url,
        "--backoff-ms",
        "1",
        SPLIT[0],
        SPLIT[1],
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("transport error"), "{}", stderr(&out));
}

#[test]
fn evaluate_remote_via_environment() {
    let stub = StubService::start(Behavior::Persistence);
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), &[]);
    let remote = dir.path().join("remote.csv");
    let local = dir.path().join("local.csv");
    let base = ["evaluate", "--data", data.to_str().unwrap(), "--building", "B", "--m", "4", SPLIT[0], SPLIT[1]];

    let out = bin()
        .args(base)
        .args(["--backend", "remote:", "--report", remote.to_str().unwrap()])
        .env("LM_ENDPOINT", &stub.url)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[&base[..], &["--backend", "persistence", "--report", local.to_str().unwrap()]].concat());
    assert!(out.status.success(), "{}", stderr(&out));

    let metrics = |p: &Path| {
        let rows = parse_report_csv(&std::fs::read_to_string(p).unwrap()).unwrap();
        *rows[0].metrics().unwrap()
    };
    assert_eq!(metrics(&remote), metrics(&local));
    // floor((744 - 34) / 24) + 1 windows of 4 steps each.
    assert_eq!(stub.generate_calls(), 30 * 4);
}

#[test]
fn zeroshot_single_spec_fills_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), &[]);
    let report = dir.path().join("z.csv");
    let out = run(&[
        "zeroshot",
        "--data",
        data.to_str().unwrap(),
        "--backends",
        "seasonal:24",
        "--report",
        report.to_str().unwrap(),
        SPLIT[0],
        SPLIT[1],
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = parse_report_csv(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.source_building != r.target_building));
    assert_eq!(stdout(&out).matches("source: ").count(), 6);
}

#[test]
fn zeroshot_manifest_records_failed_cells() {
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), &["--buildings", "3"]);
    let manifest = dir.path().join("models.json");
    std::fs::write(
        &manifest,
        format!(
            r#"[
                {{"model": "ar", "source": "A", "backend": "linear-ar:24:0.5"}},
                {{"model": "lm", "source": "B", "backend": "remote:http://127.0.0.1:{dead}"}}
            ]"#
        ),
    )
    .unwrap();
    let report = dir.path().join("z.csv");
    let out = run(&[
        "zeroshot",
        "--data",
        data.to_str().unwrap(),
        "--backends",
        manifest.to_str().unwrap(),
        "--backoff-ms",
        "1",
        "--report",
        report.to_str().unwrap(),
        SPLIT[0],
        SPLIT[1],
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
    let csv = std::fs::read_to_string(&report).unwrap();
    let rows = parse_report_csv(&csv).unwrap();
    assert_eq!(rows.len(), 4);
    let failed: Vec<_> = rows.iter().filter(|r| matches!(r.outcome, CellOutcome::Failed(_))).collect();
    assert_eq!(failed.len(), 2);
    assert!(failed.iter().all(|r| r.model == "lm"));
    assert!(csv.contains("lm,B,A,24,error,error"));
}

#[test]
fn sweep_writes_plot_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), &[]);
    let plot = dir.path().join("plot.csv");
    let out = run(&[
        "sweep",
        "--data",
        data.to_str().unwrap(),
        "--building",
        "A",
        "--backend",
        "persistence",
        "--horizons",
        "1,4,12,24",
        "--plot-csv",
        plot.to_str().unwrap(),
        SPLIT[0],
        SPLIT[1],
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&plot).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "horizon,rmse,mae");
    assert_eq!(lines.len(), 5);
    let horizons: Vec<_> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(horizons, ["1", "4", "12", "24"]);

    let out = run(&[
        "sweep",
        "--data",
        data.to_str().unwrap(),
        "--building",
        "A",
        "--backend",
        "persistence",
        "--horizons",
        "24",
        "--plot-csv",
        plot.to_str().unwrap(),
        SPLIT[0],
        SPLIT[1],
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&plot).unwrap().lines().count(), 2);
}

#[test]
fn sweep_rejects_non_numeric_horizon() {
    let out = run(&["sweep", "--synth-days", "90", "--backend", "persistence", "--horizons", "1,x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_file(dir.path(), &[]);
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "data": data,
            "backend": "oracle",
            "split": "1,1,1",
            "m": 4,
            "stride": 48,
            "output_dir": dir.path(),
        })
        .to_string(),
    )
    .unwrap();
    let out = run(&["evaluate", "--config", config.to_str().unwrap(), "--building", "D", "--report", "r.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    // Window count with n=30, m=4, stride=48 over 744 hours.
    assert!(csv.contains("oracle,D,D,4,0.000,0.000,15,0"), "{csv}");

    let out = run(&[
        "evaluate",
        "--config",
        config.to_str().unwrap(),
        "--building",
        "D",
        "--backend",
        "persistence",
        "--stride",
        "24",
        "--report",
        "r.csv",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.contains("persistence,D,D,4,"), "{csv}");
    assert!(csv.trim_end().ends_with(",30,0"), "{csv}");

    std::fs::write(&config, r#"{"colour": "blue"}"#).unwrap();
    let out = run(&["evaluate", "--config", config.to_str().unwrap(), "--backend", "oracle"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn forecast_prints_audit_record() {
    let out = run(&[
        "forecast",
        "--synth-days",
        "90",
        "--building",
        "A",
        "--backend",
        "persistence",
        "--m",
        "3",
        SPLIT[0],
        SPLIT[1],
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["predictions"].as_array().unwrap().len(), 3);
    assert_eq!(json["transcript"].as_array().unwrap().len(), 3);
}
