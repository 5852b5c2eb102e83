//! End-to-end checks of the command-line binary: flag handling, error
//! reporting, determinism of emitted files, and format equivalence.

use std::path::Path;
use std::process::{Command, Output};

fn fedsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedsim"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    fedsim()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary spawns")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const TINY_RUN_CONFIG: &str = r#"
rounds = 2
strategy = "fedavg"
val_frac = 0.25
master_seed = 42

[arch]
kind = "logistic"
input_dim = 2
num_classes = 2

[local]
local_epochs = 1
learning_rate = 0.2
batch_size = 32

[dataset]
kind = "synthetic"
num_classes = 2
input_dim = 2
per_class = 20
noise_sigma = 0.6

[partition]
num_clients = 3
alpha = 10.0
seed = 5
min_shard = 2
"#;

fn tiny_scenario(id: &str, alphas: &str, seeds: &str) -> String {
    format!(
        r#"
id = "{id}"
alphas = {alphas}
epochs = [1]
seeds = {seeds}
fedrandom_runs = 2

[base]
{TINY_RUN_CONFIG}
"#
    )
    .replace("[base]\n\nrounds", "[base]\nrounds")
    .replace("[arch]", "[base.arch]")
    .replace("[local]", "[base.local]")
    .replace("[dataset]", "[base.dataset]")
    .replace("[partition]", "[base.partition]")
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = fedsim().output().unwrap();
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("Usage"), "{}", stderr_of(&out));
}

#[test]
fn missing_out_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "partition",
            "--dataset",
            "synthetic:2,2,10,0.5",
            "--clients",
            "2",
            "--alpha",
            "1.0",
            "--seed",
            "1",
        ],
    );
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("--out"), "{}", stderr_of(&out));
}

#[test]
fn partition_concentrated_alpha_is_near_uniform_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "partition",
        "--dataset",
        "synthetic:4,2,250,0.5",
        "--clients",
        "5",
        "--alpha",
        "1e9",
        "--seed",
        "11",
        "--out",
        "parts.json",
    ];
    let out = run_in(dir.path(), &args);
    assert!(out.status.success(), "{}", stderr_of(&out));

    // The command prints the size-based ground truth to stdout.
    let shares: Vec<f64> = serde_json::from_str(stdout_of(&out).trim()).unwrap();
    assert_eq!(shares.len(), 5);
    let total: f64 = shares.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);

    let file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("parts.json")).unwrap())
            .unwrap();
    assert_eq!(file["num_records"], 1000);
    let sizes: Vec<usize> = file["client_sizes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as usize)
        .collect();
    assert_eq!(sizes.iter().sum::<usize>(), 1000);
    for &s in &sizes {
        // Dirichlet with alpha = 1e9 concentrates tightly on uniform;
        // largest-remainder rounding keeps each shard within one or two
        // records of 200.
        assert!((195..=205).contains(&s), "shard {s} far from uniform");
    }

    let first = std::fs::read(dir.path().join("parts.json")).unwrap();
    let out = run_in(dir.path(), &args);
    assert!(out.status.success());
    let second = std::fs::read(dir.path().join("parts.json")).unwrap();
    assert_eq!(first, second, "rerun changed the partition file bytes");
}

#[test]
fn run_records_are_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), TINY_RUN_CONFIG).unwrap();
    let args = ["run", "cfg.toml", "--out", "record.json"];
    let out = run_in(dir.path(), &args);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let first = std::fs::read(dir.path().join("record.json")).unwrap();
    let out = run_in(dir.path(), &args);
    assert!(out.status.success());
    let second = std::fs::read(dir.path().join("record.json")).unwrap();
    assert_eq!(first, second, "rerun changed the record bytes");
}

#[test]
fn single_client_run_takes_the_whole_share() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TINY_RUN_CONFIG.replace("num_clients = 3", "num_clients = 1");
    std::fs::write(dir.path().join("cfg.toml"), cfg).unwrap();
    let out = run_in(dir.path(), &["run", "cfg.toml", "--out", "record.json"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("record.json")).unwrap())
            .unwrap();
    let contributions = record["contributions"].as_array().unwrap();
    assert_eq!(contributions.len(), 1);
    assert_eq!(contributions[0].as_f64().unwrap(), 1.0);
}

#[test]
fn malformed_config_names_the_key_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let broken = TINY_RUN_CONFIG.replace("rounds = 2", "rounds = \"two\"");
    std::fs::write(dir.path().join("cfg.toml"), broken).unwrap();
    let out = run_in(dir.path(), &["run", "cfg.toml", "--out", "record.json"]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("rounds"), "{}", stderr_of(&out));
    assert!(!dir.path().join("record.json").exists());
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let broken = format!("{TINY_RUN_CONFIG}\nturbo = true\n");
    std::fs::write(dir.path().join("cfg.toml"), broken).unwrap();
    let out = run_in(dir.path(), &["run", "cfg.toml", "--out", "record.json"]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("turbo"), "{}", stderr_of(&out));
}

#[test]
fn one_cell_experiment_emits_exactly_two_report_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        tiny_scenario("onecell", "[10.0]", "[7]"),
    )
    .unwrap();
    let out = run_in(dir.path(), &["experiment", "s.toml", "--out", "exp"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let csv = std::fs::read_to_string(dir.path().join("exp/report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "{csv}");
    assert!(lines[1].contains(",MSM,"));
    assert!(lines[2].contains(",FR,"));
    // The comparison summary lands on stdout as well as in the directory.
    let summary: serde_json::Value = serde_json::from_str(stdout_of(&out).trim()).unwrap();
    assert_eq!(summary["cells"], 1);
    assert!(dir.path().join("exp/summary.json").exists());
    assert!(dir.path().join("exp/cells/cell_0000.json").exists());
}

#[test]
fn worker_count_does_not_change_experiment_bytes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        tiny_scenario("workers", "[1.0, 100.0]", "[7]"),
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &["experiment", "s.toml", "--out", "w1", "--workers", "1"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let out = run_in(
        dir.path(),
        &["experiment", "s.toml", "--out", "w8", "--workers", "8"],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let csv1 = std::fs::read(dir.path().join("w1/report.csv")).unwrap();
    let csv8 = std::fs::read(dir.path().join("w8/report.csv")).unwrap();
    assert_eq!(csv1, csv8, "worker count changed CSV bytes");
    let sum1 = std::fs::read(dir.path().join("w1/summary.json")).unwrap();
    let sum8 = std::fs::read(dir.path().join("w8/summary.json")).unwrap();
    assert_eq!(sum1, sum8, "worker count changed summary bytes");
}

#[test]
fn workers_env_var_supplies_the_default() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        tiny_scenario("envvar", "[10.0]", "[7]"),
    )
    .unwrap();
    let out = fedsim()
        .current_dir(dir.path())
        .env("FEDSIM_WORKERS", "3")
        .args(["experiment", "s.toml", "--out", "exp"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let out = fedsim()
        .current_dir(dir.path())
        .env("FEDSIM_WORKERS", "zero")
        .args(["experiment", "s.toml", "--out", "exp2"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(
        stderr_of(&out).contains("FEDSIM_WORKERS"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn summary_matches_recount_from_emitted_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        tiny_scenario("toy3", "[1.0, 10.0, 100.0]", "[7]"),
    )
    .unwrap();
    let out = run_in(dir.path(), &["experiment", "s.toml", "--out", "exp"]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let csv = std::fs::read_to_string(dir.path().join("exp/report.csv")).unwrap();
    let mut wins = 0usize;
    let mut losses = 0usize;
    let mut ties = 0usize;
    let rows: Vec<Vec<String>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for pair in rows.chunks(2) {
        let msm: f64 = pair[0][8].parse().unwrap(); // l2 column
        let fr: f64 = pair[1][8].parse().unwrap();
        if fr < msm {
            wins += 1;
        } else if fr > msm {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("exp/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["l2"]["wins"], wins as u64);
    assert_eq!(summary["l2"]["losses"], losses as u64);
    assert_eq!(summary["l2"]["ties"], ties as u64);
}

#[test]
fn report_on_empty_directory_is_an_explicit_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let out = run_in(dir.path(), &["report", "--in", "empty"]);
    assert!(!out.status.success());
    assert!(
        stderr_of(&out).contains("no records"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn report_formats_carry_identical_values_and_full_traces() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        tiny_scenario("fmt", "[10.0]", "[7]"),
    )
    .unwrap();
    let out = run_in(dir.path(), &["experiment", "s.toml", "--out", "exp"]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let csv_out = run_in(dir.path(), &["report", "--in", "exp", "--format", "csv"]);
    assert!(csv_out.status.success(), "{}", stderr_of(&csv_out));
    let csv = stdout_of(&csv_out);
    let json_out = run_in(dir.path(), &["report", "--in", "exp", "--format", "json"]);
    assert!(json_out.status.success());
    let json = stdout_of(&json_out);

    // Every trace point: one run per ensemble member plus the fedrandom
    // samples, each with the configured number of rounds.
    let trace_lines: Vec<&str> = csv
        .split("[traces]\n")
        .nth(1)
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .collect();
    assert_eq!(trace_lines.len(), (8 + 2) * 2);

    // The two renderings carry identical numeric values: every accuracy
    // and metric cell in the CSV appears verbatim in the JSON.
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed["rows"].as_array().unwrap().len(), 2);
    assert_eq!(parsed["traces"].as_array().unwrap().len(), 20);
    for line in &trace_lines {
        let accuracy = line.rsplit(',').next().unwrap();
        assert!(json.contains(accuracy), "json missing accuracy {accuracy}");
    }
    let row_lines: Vec<&str> = csv
        .split("[traces]")
        .next()
        .unwrap()
        .lines()
        .skip(2)
        .filter(|l| !l.is_empty())
        .collect();
    for line in &row_lines {
        for cell in line.split(',').skip(6) {
            if !cell.is_empty() {
                assert!(json.contains(cell), "json missing value {cell}");
            }
        }
    }

    // --out writes the same bytes the stdout path produced.
    let out = run_in(
        dir.path(),
        &["report", "--in", "exp", "--format", "csv", "--out", "r.csv"],
    );
    assert!(out.status.success());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("r.csv")).unwrap(),
        csv
    );
}

#[test]
fn corrupt_cell_record_is_listed_by_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        tiny_scenario("corrupt", "[10.0]", "[7]"),
    )
    .unwrap();
    let out = run_in(dir.path(), &["experiment", "s.toml", "--out", "exp"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    std::fs::write(dir.path().join("exp/cells/cell_0000.json"), "{ broken").unwrap();
    let out = run_in(dir.path(), &["report", "--in", "exp"]);
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("cell_0000.json"), "{err}");
}
