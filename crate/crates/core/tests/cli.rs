use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heartsense"))
}

fn cleveland() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/cleveland.csv")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn with_stdin(mut cmd: Command, input: &str) -> Output {
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

/// Tiny config so a full train finishes in seconds.
fn small_config(dir: &Path) -> PathBuf {
    let body = format!(
        "dataset = {:?}\noutput_dir = \"out\"\nseed = 11\n\
         [mcfa]\npopulation = 6\ngenerations = 2\n\
         [aeho]\nmax_generations = 4\n\
         [backprop]\nepochs = 5\n",
        cleveland()
    );
    let p = dir.join("small.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn train_small(dir: &Path) -> PathBuf {
    let cfg = small_config(dir);
    let out = bin().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    dir.join("out/model.json")
}

#[test]
fn no_arguments_prints_usage() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = bin().args(["train", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stdout).contains("stream"));
}

#[test]
fn missing_data_file_is_a_runtime_error() {
    let out = bin()
        .args(["preprocess", "--data", "/nonexistent/x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_csv_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "63,1,1,145\n").unwrap();
    let out = bin().args(["preprocess", "--data"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--set", "network.nonsense=3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn preprocess_fills_missing_cells() {
    let out = bin().args(["preprocess", "--data"]).arg(cleveland()).output().unwrap();
    assert!(out.status.success());
    let csv = text(&out.stdout);
    assert_eq!(csv.lines().count(), 304);
    assert!(!csv.contains('?'));
}

#[test]
fn train_writes_artifacts_and_stream_scores() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small(dir.path());
    for f in [
        "model.json",
        "report.txt",
        "selection_history.txt",
        "weight_search_history.txt",
        "loss_history.txt",
    ] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }

    let input = concat!(
        r#"{"id":"a","age":63,"sex":1,"cp":1,"trestbps":145,"chol":233,"fbs":1,"restecg":2,"thalach":150,"exang":0,"oldpeak":2.3,"slope":3,"ca":0,"thal":6}"#,
        "\n",
        "not json\n",
        "\n",
        r#"{"age":41}"#,
        "\n"
    );
    let mut cmd = bin();
    cmd.args(["stream", "--model"]).arg(&model);
    let out = with_stdin(cmd, input);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let lines: Vec<serde_json::Value> = text(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["id"], "a");
    let label = lines[0]["label"].as_u64().unwrap();
    let expected = if label == 1 { "ABNORMAL" } else { "NORMAL" };
    assert_eq!(lines[0]["severity"], expected);
    assert_eq!(lines[1]["line"], 2);
    assert!(lines[1]["error"].is_string());
    assert_eq!(lines[2]["line"], 4);
    assert!(text(&out.stderr).contains("processed=3"));
    assert!(text(&out.stderr).contains("malformed=2"));

    let clean = dir.path().join("clean.csv");
    let out = bin()
        .args(["preprocess", "--data"])
        .arg(cleveland())
        .arg("--out")
        .arg(&clean)
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = bin()
        .args(["report", "--model"])
        .arg(&model)
        .arg("--data")
        .arg(&clean)
        .args(["--format", "kv", "--sweep", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report = text(&out.stdout);
    assert!(report.contains("accuracy"));
    assert!(report.contains("prevalence ppv npv"));
    assert_eq!(report.lines().filter(|l| l.starts_with("0.")).count(), 3);
}

#[test]
fn predict_rejects_rows_with_missing_attributes() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small(dir.path());
    let out = bin()
        .args(["predict", "--model"])
        .arg(&model)
        .arg("--data")
        .arg(cleveland())
        .output()
        .unwrap();
    // the raw file has a few '?' cells that scoring must not invent values for
    assert_eq!(out.status.code(), Some(2));
    let csv = text(&out.stdout);
    assert!(csv.starts_with("row,label,score\n"));
    assert!(csv.lines().count() > 290);
}

#[test]
fn bench_opt_reports_both_optimizers() {
    let out = bin()
        .args([
            "bench-opt",
            "--function",
            "sphere",
            "--dim",
            "3",
            "--generations",
            "20",
            "--seed",
            "2",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    assert!(s.contains("mcfa.best=") && s.contains("aeho.best="));
    for line in s.lines() {
        let v: f64 = line.split('=').nth(1).unwrap().parse().unwrap();
        assert!(v >= 0.0);
    }
}

#[test]
fn shipped_config_matches_defaults() {
    use heartsense::pipeline::ExperimentConfig;
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/cleveland.toml");
    let mut shipped = ExperimentConfig::load(&path, &[]).unwrap();
    assert!(shipped.dataset_path().is_file());
    let mut defaults = ExperimentConfig::new(shipped.dataset.clone());
    shipped.output_dir = defaults.output_dir.clone();
    defaults.base_dir = shipped.base_dir.clone();
    assert_eq!(shipped, defaults);
}
