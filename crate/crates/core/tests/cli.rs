use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_lcg-rothe");

/// Small box and coarse steps so every command finishes in well under a second.
const SMALL: &[&str] = &["--grid-l", "40", "--grid-n", "512", "--h", "0.01", "--t-end", "0.5"];

/// `SMALL` with some flag values replaced.
fn small(overrides: &[(&'static str, &'static str)]) -> Vec<&'static str> {
    let mut args = SMALL.to_vec();
    for (flag, value) in overrides {
        let i = args.iter().position(|a| a == flag).expect("flag is in SMALL");
        args[i + 1] = value;
    }
    args
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", out.to_str().unwrap()]);
    run(&all)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

fn energy(dir: &Path) -> f64 {
    fs::read_to_string(dir.join("energy.txt")).unwrap().trim().parse().unwrap()
}

#[test]
fn invalid_settings_exit_2_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_file = tmp.path().join("bad.toml");
    fs::write(&bad_file, "[rothe]\nstep = 0.1\n").unwrap();
    let bad_file = bad_file.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["groundstate", "--h", "0"],
        vec!["reference", "--epsilon", "-1"],
        vec!["rothe", "--t-end", "0.0105"],
        vec!["fit", "--grid-n", "1000"],
        vec!["rothe", "--grid-l", "inf"],
        vec!["fit", "--k", "0"],
        vec!["rothe", "--config", bad_file],
        vec!["groundstate", "--config", "/nonexistent/config.toml"],
        vec!["rothe", "--threads", "0"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let out = tmp.path().join(format!("case{i}"));
        let o = run_in(&out, args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:"), "{args:?}");
        assert!(!out.exists(), "{args:?} created {}", out.display());
    }
}

#[test]
fn groundstate_creates_missing_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a/b/c");
    let o = run_in(&out, &["groundstate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["groundstate.gwf", "groundstate.csv", "energy.txt", "groundstate.toml"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!((energy(&out) + 0.5).abs() < 1e-3);
}

#[test]
fn groundstate_energy_is_converged_in_grid_size() {
    let tmp = tempfile::tempdir().unwrap();
    let coarse = tmp.path().join("coarse");
    let fine = tmp.path().join("fine");
    assert_eq!(code(&run_in(&coarse, &["groundstate"])), 0);
    assert_eq!(code(&run_in(&fine, &["groundstate", "--grid-n", "8192"])), 0);
    let (e1, e2) = (energy(&coarse), energy(&fine));
    assert!((e1 - e2).abs() <= 1e-6, "n=4096: {e1}, n=8192: {e2}");
}

#[test]
fn fit_writes_state_and_error_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["fit", "--k", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let state = lcg_rothe::LcgState::read(&tmp.path().join("fit_k4.lcg")).unwrap();
    assert_eq!(state.len(), 4);
    let profile = csv_rows(&tmp.path().join("fit_k4_error.csv"));
    assert_eq!(profile.len(), 4096);
    let dx = 1000.0 / 4096.0;
    let residual_sq: f64 = profile.iter().map(|r| r[1]).sum::<f64>() * dx;
    assert!(residual_sq <= 5e-7, "{residual_sq}");
}

#[test]
fn zero_duration_reference_has_only_the_initial_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["reference"];
    args.extend(small(&[("--t-end", "0")]));
    let o = run_in(tmp.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let index = fs::read_to_string(tmp.path().join("snapshots/index.csv")).unwrap();
    let lines: Vec<&str> = index.lines().collect();
    assert_eq!(lines.len(), 2, "{index}");
    assert!(lines[1].starts_with("0,0,"), "{index}");
}

#[test]
fn run_compared_with_itself_has_zero_error() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    let mut args = vec!["reference"];
    args.extend(SMALL);
    assert_eq!(code(&run_in(&run_dir, &args)), 0);
    let cmp = tmp.path().join("cmp");
    let r = run_dir.to_str().unwrap();
    let o = run_in(&cmp, &["compare", r, r]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let l2 = csv_rows(&cmp.join("l2_error.csv"));
    assert_eq!(l2.len(), 2);
    assert!(l2.iter().all(|row| row[1] == 0.0));
    assert!(csv_rows(&cmp.join("local_error.csv")).iter().all(|row| row[2] == 0.0));
    assert!(csv_rows(&cmp.join("final_comparison.csv")).iter().all(|row| row[3] == 0.0));
}

#[test]
fn mismatched_runs_are_rejected_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |name: &str| tmp.path().join(name);
    let mut base = vec!["reference"];
    base.extend(SMALL);
    assert_eq!(code(&run_in(&dir("a"), &base)), 0);
    for (name, overrides) in [
        ("b", vec![("--t-end", "1.5")]),
        ("c", vec![("--grid-n", "256")]),
        ("d", vec![("--h", "0.005"), ("--t-end", "0.25")]),
    ] {
        let mut args = vec!["reference"];
        args.extend(small(&overrides));
        assert_eq!(code(&run_in(&dir(name), &args)), 0, "{name}");
    }

    let a = dir("a");
    for (other, needle) in [("b", "snapshots"), ("c", "grid"), ("d", "t=")] {
        let o = run_in(&dir("cmp"), &["compare", a.to_str().unwrap(), dir(other).to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{other}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{other}: {}", stderr(&o));
    }
    let o = run_in(&dir("cmp"), &["compare", a.to_str().unwrap(), "/nonexistent/run"]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("/nonexistent/run"), "{}", stderr(&o));
}

#[test]
fn single_threaded_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["rothe", "--threads", "1", "--seed", "7"];
    args.extend(SMALL);
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    assert_eq!(code(&run_in(&first, &args)), 0);
    assert_eq!(code(&run_in(&second, &args)), 0);
    let a = files_under(&first);
    let b = files_under(&second);
    assert_eq!(a.len(), b.len());
    let mut compared = 0;
    for (fa, fb) in a.iter().zip(&b) {
        assert_eq!(fa.strip_prefix(&first).unwrap(), fb.strip_prefix(&second).unwrap());
        // The summary records wall-clock time.
        if fa.file_name().unwrap() == "rothe.toml" {
            continue;
        }
        assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap(), "{}", fa.display());
        compared += 1;
    }
    assert!(compared >= 6, "{a:?}");
}

#[test]
fn rothe_run_writes_trace_log_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["rothe"];
    args.extend(SMALL);
    let o = run_in(tmp.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = csv_rows(&tmp.path().join("trace.csv"));
    assert_eq!(trace.len(), 50);
    assert!(trace.iter().all(|row| row[1] < 1e-7 && row[2] >= 4.0));
    let log = fs::read_to_string(tmp.path().join("run.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 50);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["t", "F", "gn_iters", "backtracks", "K", "added"] {
        assert!(first.get(key).is_some(), "{key} missing from {first}");
    }
    for f in ["initial.lcg", "final.lcg", "final.csv", "rothe.toml", "snapshots/index.csv"] {
        assert!(tmp.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn unreachable_tolerance_exits_3_with_diagnostic_state() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("strict.toml");
    fs::write(&cfg, "[rothe]\nmax_additions = 1\n").unwrap();
    let out = tmp.path().join("out");
    let mut args = vec!["rothe", "--config", cfg.to_str().unwrap(), "--epsilon", "1e-40"];
    args.extend(SMALL);
    let o = run_in(&out, &args);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("step"), "{}", stderr(&o));
    assert!(out.join("failure_last_accepted.lcg").is_file());
    assert!(out.join("failure_best_attempt.lcg").is_file());
}

/// Full 100 000-step reference run on the default setup.
#[test]
#[ignore = "full-length reference run, about a minute in release mode"]
fn full_reference_run_conserves_norm_and_ionizes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["reference"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let final_state = csv_rows(&tmp.path().join("final.csv"));
    let dx = 1000.0 / 4096.0;
    let norm_sq: f64 = final_state.iter().map(|r| r[3]).sum::<f64>() * dx;
    let outside: f64 = final_state.iter().filter(|r| r[0].abs() > 100.0).map(|r| r[3]).sum::<f64>() * dx;
    assert!(outside > 1e-4, "probability beyond |x| = 100: {outside:e}");
    assert!((norm_sq - 1.0).abs() <= 1e-9, "final norm^2 {norm_sq}");
}
