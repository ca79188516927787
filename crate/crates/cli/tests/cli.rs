use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn colf(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colf"))
        .args(args)
        .env("COLF_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY: &str = r#"
seeds = [4]
output_dir = "tiny"

[stream]
n_days = 3
n_users = 60
catalog_size = 80
impressions_per_day = 600

[[strategies]]
kind = "incremental"

[[strategies]]
kind = "colf"

[[strategies]]
kind = "cbrs"
[strategies.policy]
cap = 900
"#;

fn setup(config: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(&path, config).unwrap();
    (dir, path)
}

#[test]
fn gen_writes_expected_record_count() {
    let (dir, cfg) = setup("[stream]\nseed = 9\nn_days = 2\nimpressions_per_day = 100\n");
    let out_file = dir.path().join("stream.tsv");
    let out = colf(dir.path(), &["gen", "--config", cfg.to_str().unwrap(), "--out", out_file.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&out_file).unwrap();
    let records = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(records, 200);

    let again = dir.path().join("again.tsv");
    colf(dir.path(), &["gen", "--config", cfg.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(&out_file).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn missing_seed_exits_2_naming_seed() {
    let (dir, cfg) = setup("[stream]\nn_days = 2\n[[strategies]]\nkind = \"colf\"\n");
    let o = dir.path().join("s.tsv");
    let out = colf(dir.path(), &["gen", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("seed"));
    let out = colf(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("seed"));
}

#[test]
fn unknown_key_exits_2() {
    let (dir, cfg) = setup(&TINY.replace("n_users = 60", "n_user = 60"));
    let out = colf(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n_user"), "{}", stderr(&out));
}

#[test]
fn ablation_on_baseline_exits_2() {
    let (dir, cfg) = setup(&format!("{TINY}[strategies.ablations]\nno_new = true\n"));
    let out = colf(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn run_refuses_overwrite_and_force_is_reproducible() {
    let (dir, cfg) = setup(TINY);
    let cfg = cfg.to_str().unwrap();
    let out = colf(dir.path(), &["run", "--config", cfg]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let results = dir.path().join("tiny");
    let snapshot = |name: &str| fs::read(results.join(name)).unwrap();
    let first: Vec<Vec<u8>> = ["runs/colf__seed4.csv", "runs/cbrs__seed4.csv", "memory/colf__seed4.csv", "summary.csv"]
        .iter()
        .map(|n| snapshot(n))
        .collect();
    let header = String::from_utf8(first[0].clone()).unwrap();
    assert!(header.starts_with("strategy,seed,day,auc,logloss,memory_size,train_seconds\n"));
    assert_eq!(header.lines().count(), 3);

    let out = colf(dir.path(), &["run", "--config", cfg]);
    assert_eq!(code(&out), 3);

    let out = colf(dir.path(), &["run", "--config", cfg, "--force", "--jobs", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let second: Vec<Vec<u8>> = ["runs/colf__seed4.csv", "runs/cbrs__seed4.csv", "memory/colf__seed4.csv", "summary.csv"]
        .iter()
        .map(|n| snapshot(n))
        .collect();
    assert_eq!(first, second);
}

#[test]
fn report_on_results_and_on_empty_dir() {
    let (dir, cfg) = setup(TINY);
    let out = colf(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let results = dir.path().join("tiny");
    let out = colf(dir.path(), &["report", "--dir", results.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.lines().next().unwrap().contains("gain_vs_incremental"));

    let report = results.join("report");
    let files = ["summary.csv", "fig_daily_auc.csv", "fig_item_churn.csv", "fig_probe_auc.csv"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(report.join(f)).unwrap()).collect();
    colf(dir.path(), &["report", "--dir", results.to_str().unwrap()]);
    let second: Vec<Vec<u8>> = files.iter().map(|f| fs::read(report.join(f)).unwrap()).collect();
    assert_eq!(first, second);

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = colf(dir.path(), &["report", "--dir", empty.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn single_run_reports_one_row() {
    let cfg = TINY
        .split("[[strategies]]")
        .next()
        .unwrap()
        .to_string()
        + "[[strategies]]\nkind = \"colf\"\n";
    let (dir, path) = setup(&cfg);
    let out = colf(dir.path(), &["run", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = colf(dir.path(), &["report", "--dir", dir.path().join("tiny").to_str().unwrap()]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
}

#[test]
fn run_from_stream_file() {
    let (dir, cfg) = setup("[stream]\nseed = 2\nn_days = 3\nn_users = 50\ncatalog_size = 60\nimpressions_per_day = 500\n");
    let stream = dir.path().join("s.tsv");
    let out = colf(dir.path(), &["gen", "--config", cfg.to_str().unwrap(), "--out", stream.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let exp = dir.path().join("file.toml");
    fs::write(
        &exp,
        "seeds = [1, 2]\noutput_dir = \"from_file\"\nstream_file = \"s.tsv\"\n[[strategies]]\nkind = \"sliding_window\"\n",
    )
    .unwrap();
    let out = colf(dir.path(), &["run", "--config", exp.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("from_file/runs/sliding_window__seed2.csv").is_file());
}
