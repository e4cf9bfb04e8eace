use std::path::Path;
use std::process::{Command, Output};

fn axiharm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_axiharm"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn bundled_solve_then_report_and_reconstruct() {
    let tmp = tempfile::tempdir().unwrap();
    let o = axiharm(&["solve", "--out", "a"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&tmp.path().join("a"));
    assert!(r["failure"].is_null());
    for d in r["diagnostics"].as_array().unwrap() {
        assert!(d["u_reg_sup"].as_f64().unwrap() <= 1e-8);
        assert!(d["v_sup"].as_f64().unwrap() <= 1e-8);
    }
    assert!(r["spacetime"]["conical"]["bounded"].as_array().unwrap().is_empty());

    // same out dir, same bytes
    let first = std::fs::read(tmp.path().join("a/report.json")).unwrap();
    let o = axiharm(&["solve", "--out", "a"], tmp.path());
    assert!(o.status.success());
    assert_eq!(first, std::fs::read(tmp.path().join("a/report.json")).unwrap());

    let o = axiharm(&["report", "--out", "a"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!stdout(&o).is_empty());

    let cp = r["checkpoints"].as_array().unwrap().last().unwrap().as_str().unwrap().to_string();
    let from = tmp.path().join("a").join(cp);
    let o = axiharm(&["reconstruct", "--from", from.to_str().unwrap(), "--out", "b"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("b/spacetime.json").is_file());
    assert!(tmp.path().join("b/metric_samples.csv").is_file());
}

#[test]
fn overlapping_gaps_are_rejected_with_a_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "k = 0\n\n[rods]\ngaps = [[-2.0, 0.5], [0.0, 1.0]]\n\n[[component]]\nv = 0.0\npsi = []\n\n[[component]]\nv = 0.0\npsi = []\n\n[[component]]\nv = 0.0\npsi = []\n",
    )
    .unwrap();
    let o = axiharm(&["solve", "--config", "bad.toml"], tmp.path());
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(e.contains("line 4"), "{e}");
    assert!(e.to_lowercase().contains("overlap") || e.contains("disjoint") || e.contains("increasing"), "{e}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn missing_report_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = axiharm(&["report", "--out", "nothing"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nothing"));
}

#[test]
fn help_lists_the_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let o = axiharm(&["--help"], tmp.path());
    assert!(o.status.success());
    let h = stdout(&o);
    for key in ["r_schedule", "tol = 1e-8", "AXIHARM_THREADS", "convention", "--refine"] {
        assert!(h.contains(key), "{key} missing from help");
    }
}

#[test]
fn config_subcommand_resolves_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let o = axiharm(&["config", "--r-schedule", "10,20", "--tol", "1e-9", "--refine", "2"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["solver"]["r_schedule"], serde_json::json!([10.0, 20.0]));
    assert_eq!(v["solver"]["tol"].as_f64(), Some(1e-9));
    assert_eq!(v["grid"]["level"].as_u64(), Some(2));

    let o = axiharm(&["config", "--r-schedule", "20,10"], tmp.path());
    assert!(!o.status.success());
}

#[test]
fn validate_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = axiharm(&["validate", "--out", "v"], tmp.path());
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{s}");
    assert!(tmp.path().join("v/validation.json").is_file());
}
