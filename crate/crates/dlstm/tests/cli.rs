use std::fs;
use std::path::Path;
use std::process::Command;

use dlstm::commands::{cmd_compare, cmd_gen_data, cmd_run, CommandError};
use dlstm::config::ConfigError;
use dlstm::parse_series;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dlstm"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn gen_data_round_trips_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("nested/b.csv");
    assert_eq!(cmd_gen_data(730, 7, &a).unwrap(), 730);
    assert_eq!(cmd_gen_data(730, 7, &b).unwrap(), 730);
    let records = parse_series(&a).unwrap();
    assert_eq!(records.len(), 730);
    assert!(records.windows(2).all(|w| w[1].day == w[0].day + 1));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("date,load,temperature,day_type\n2016-01-04,"), "{}", &text[..60]);
}

#[test]
fn gen_data_rejects_short_series() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cmd_gen_data(20, 7, &dir.path().join("x.csv")).is_err());
    let status = bin()
        .args(["gen-data", "--days", "20", "--out"])
        .arg(dir.path().join("y.csv"))
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn run_from_csv_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    cmd_gen_data(120, 1, &dir.path().join("series.csv")).unwrap();
    let common = "data = \"series.csv\"\nepochs = 5\nhidden_size = 4\nbatch_size = 16\n";
    let central = write_config(
        dir.path(),
        "central.toml",
        &format!("{common}schedule = \"centralized\"\noutput_dir = \"central\"\n"),
    );
    let lbc = write_config(
        dir.path(),
        "lbc.toml",
        &format!("{common}schedule = \"lbc\"\ntopology = \"path\"\nn_agents = 3\noutput_dir = \"lbc\"\n"),
    );
    let c = cmd_run(&central).unwrap();
    assert_eq!(c.output_dir, dir.path().join("central"));
    for f in ["report.json", "history.csv", "predictions.csv", "timings.json"] {
        assert!(c.output_dir.join(f).is_file(), "{f}");
    }
    assert_eq!(c.report.training.n_agents, 1);
    assert_eq!(c.report.data.records, 120);

    let out = bin().arg("run").arg(&lbc).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let history = fs::read_to_string(dir.path().join("lbc/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 5 * 3);

    let reports = vec![dir.path().join("lbc/report.json"), c.report_path()];
    let table = cmd_compare(&reports).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.rows[0].schedule, "lbc");
    assert_eq!(table.rows[1].schedule, "centralized");
    assert!(table.to_markdown().lines().count() == 4);

    let out = bin().arg("compare").args(&reports).arg("--csv").arg(dir.path().join("t.csv")).output().unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("t.csv")).unwrap().lines().count(), 3);
}

#[test]
fn compare_names_the_file_missing_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    let bad = dir.path().join("bad.json");
    fs::write(&good, r#"{"training":{"schedule":"lbc"},"metrics":{"mape":0.1,"mae":1,"mse_plain":2,"mse_relative":0.01}}"#)
        .unwrap();
    fs::write(&bad, r#"{"training":{"schedule":"cbl"}}"#).unwrap();
    match cmd_compare(&[good.clone(), bad.clone()]) {
        Err(CommandError::Schema { path, .. }) => assert_eq!(path, bad),
        other => panic!("expected schema error, got {other:?}"),
    }
    assert!(matches!(cmd_compare(&[good]), Err(CommandError::TooFewReports(1))));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("learning_rate = 1.5\n", "learning_rate"),
        ("epochs = 0\n", "epochs"),
        ("workers = 0\n", "workers"),
        ("split = [0.5, 0.2, 0.2]\n", "split"),
        ("topology = \"ring\"\nedges = [[0, 1]]\n", "edges"),
        ("edges = [[0, 1], [2, 3]]\nn_agents = 4\n", "edges"),
        ("data = \"missing.csv\"\n", "data"),
    ];
    for (i, (body, want)) in cases.iter().enumerate() {
        let path = write_config(dir.path(), &format!("c{i}.toml"), body);
        match cmd_run(&path) {
            Err(CommandError::Config(ConfigError::Field { field, .. })) => assert_eq!(field, *want, "{body}"),
            other => panic!("{body}: expected field error, got {other:?}"),
        }
    }
    let unknown = write_config(dir.path(), "u.toml", "hiden_size = 4\n");
    assert!(matches!(cmd_run(&unknown), Err(CommandError::Config(ConfigError::Parse { .. }))));
}
