use std::path::Path;
use std::process::{Command, Output};

use antago_core::diagnostics::diagnostics;
use antago_core::presets::{load_preset, PRESET_DIR_ENV};
use antago_core::telemetry::{read_csv, COLUMNS};

fn antago(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_antago"))
        .args(args)
        .env_remove(PRESET_DIR_ENV)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_preset(name: &str, dir: &Path) -> std::path::PathBuf {
    let csv = dir.join(format!("{name}.csv"));
    let out = antago(&["run", "--preset", name, "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    csv
}

fn settle_time(csv: &Path, preset: &str) -> f64 {
    let sc = load_preset(preset, None).unwrap();
    let rec = read_csv(std::fs::File::open(csv).unwrap()).unwrap();
    diagnostics(&rec, &sc.gains, &sc.params).unwrap().settle_time.expect("settles")
}

#[test]
fn run_writes_lf_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run_preset("fig2-F1", dir.path());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with(&(COLUMNS.join(",") + "\n")));
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
    let rec = read_csv(text.as_bytes()).unwrap();
    let last = rec.last().unwrap();
    assert!((last.x - 1e-3).abs() < 1e-5, "final x {}", last.x);
    assert!(last.f_tilde.abs() < 1e-3, "final F_tilde {}", last.f_tilde);
    let summary = std::fs::read_to_string(dir.path().join("fig2-F1.summary.toml")).unwrap();
    assert!(summary.contains("[diagnostics]") && summary.contains("[stability]"));
    assert!(summary.contains("positive_definite = true"));
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(run_preset("fig2-F2", dir.path())).unwrap();
    let b = std::fs::read(run_preset("fig2-F2", dir.path())).unwrap();
    assert_eq!(a, b);
}

#[test]
fn spring_against_motion_settles_before_spring_with_it() {
    let dir = tempfile::tempdir().unwrap();
    let f2 = settle_time(&run_preset("fig2-F2", dir.path()), "fig2-F2");
    let f3 = settle_time(&run_preset("fig2-F3", dir.path()), "fig2-F3");
    assert!(f3 < f2, "F3 {f3} s, F2 {f2} s");
}

#[test]
fn misspelled_key_names_the_expected_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = antago(&["presets", "show", "fig2-F1"]).stdout;
    let text = String::from_utf8(text).unwrap().replace("Gamma0", "gamma0");
    let file = dir.path().join("bad.toml");
    std::fs::write(&file, text).unwrap();
    let out = antago(&["run", file.to_str().unwrap(), "--out", dir.path().join("bad.csv").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("`gamma0`") && err.contains("`Gamma0`") && err.contains("line "), "{err}");
    assert!(!dir.path().join("bad.csv").exists());
}

#[test]
fn invalid_value_is_reported_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(antago(&["presets", "show", "fig2-F1"]).stdout).unwrap();
    let text = text.replace("k_p = 1.0", "k_p = -1.0");
    let file = dir.path().join("neg.toml");
    std::fs::write(&file, text).unwrap();
    let out = antago(&["run", file.to_str().unwrap(), "--out", dir.path().join("neg.csv").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("k_p"), "{}", stderr(&out));
}

#[test]
fn domain_exit_writes_partial_csv_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(antago(&["presets", "show", "constant-force"]).stdout).unwrap();
    let text = text.replace("F0 = 0.01", "F0 = 0.1");
    let file = dir.path().join("push.toml");
    std::fs::write(&file, text).unwrap();
    let csv = dir.path().join("push.csv");
    let out = antago(&["run", file.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("admissible"), "{}", stderr(&out));
    let rec = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert!(!rec.is_empty());
    assert!(rec.last().unwrap().t < 10.0);
}

#[test]
fn preset_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = antago(&["presets", "export", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    std::fs::rename(dir.path().join("fig2-F1.toml"), dir.path().join("mine.toml")).unwrap();

    let list = Command::new(env!("CARGO_BIN_EXE_antago"))
        .args(["presets", "list"])
        .env(PRESET_DIR_ENV, dir.path())
        .output()
        .unwrap();
    let names = String::from_utf8(list.stdout).unwrap();
    assert!(names.lines().any(|l| l == "mine"));
    assert!(!names.lines().any(|l| l == "fig2-F1"));

    let csv = dir.path().join("mine.csv");
    let run = Command::new(env!("CARGO_BIN_EXE_antago"))
        .args(["run", "--preset", "mine", "--out", csv.to_str().unwrap()])
        .env(PRESET_DIR_ENV, dir.path())
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", stderr(&run));
    assert!(csv.is_file());

    let missing = Command::new(env!("CARGO_BIN_EXE_antago"))
        .args(["run", "--preset", "fig2-F1"])
        .env(PRESET_DIR_ENV, dir.path())
        .output()
        .unwrap();
    assert!(!missing.status.success());
}

#[test]
fn verify_exit_status() {
    let out = antago(&["verify", "gains", "matching"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[gains] passed") && text.contains("[matching] passed"));
    assert!(text.contains("49.37"));

    let bad = antago(&["verify", "bogus"]);
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("unknown suite"));
}

#[test]
fn verify_report_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("report.txt");
    let out = antago(&["verify", "gradients", "--seed", "3", "--out", file.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(&file).unwrap(), out.stdout);
}

#[test]
fn single_value_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run_preset("fig2-F1", dir.path());
    let sc = load_preset("fig2-F1", None).unwrap();
    let rec = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    let d = diagnostics(&rec, &sc.gains, &sc.params).unwrap();

    let table = dir.path().join("sweep.csv");
    let out = antago(&["sweep", "k_p", "--preset", "fig2-F1", "--values", "1.0", "--out", table.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut reader = csv::Reader::from_path(&table).unwrap();
    let header = reader.headers().unwrap().clone();
    let row = reader.records().next().unwrap().unwrap();
    let get = |name: &str| -> f64 { row[header.iter().position(|h| h == name).unwrap()].parse().unwrap() };
    assert_eq!(&row[header.iter().position(|h| h == "status").unwrap()], "ok");
    assert_eq!(get("final_x"), d.final_x);
    assert_eq!(get("position_error"), d.position_error);
    assert_eq!(get("final_f_tilde"), d.final_f_tilde);
    assert_eq!(get("max_psi_increment"), d.max_psi_increment);
    assert_eq!(get("settle_time"), d.settle_time.unwrap());
}

#[test]
fn alpha_sweep_flips_validity() {
    let out = antago(&["sweep", "alpha", "--preset", "fig2-F1", "--from", "1", "--to", "25", "--count", "25", "--no-sim"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    for row in reader.records() {
        let row = row.unwrap();
        let alpha: f64 = row[1].parse().unwrap();
        let valid = &row[2] == "true";
        assert_eq!(valid, alpha < 19.7, "alpha {alpha}");
    }
}

#[test]
fn unknown_sweep_parameter_fails() {
    let out = antago(&["sweep", "beta", "--preset", "fig2-F1", "--values", "1"]);
    assert!(!out.status.success());
}
