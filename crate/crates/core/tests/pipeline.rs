use axiharm::config::{parse_config, SCHWARZSCHILD_TOML};
use axiharm::pipeline::{self, read_report, write_solve_outputs, REPORT_FILE, SPACETIME_FILE};
use axiharm::solver::Checkpoint;

const ONE_ROD_K1: &str = r#"
k = 1
[rods]
gaps = [[-1.0, 1.0]]
[[component]]
v = 0.5
psi = [0.2]
[[component]]
v = -0.5
psi = [-0.2]
[solver]
r_schedule = [16.0, 32.0]
"#;

#[test]
fn schwarzschild_run_writes_every_output() {
    let cfg = parse_config(SCHWARZSCHILD_TOML).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut out = pipeline::solve(&cfg).unwrap();
    assert!(out.report.ok(), "{:?}", out.report.failure);
    assert_eq!(out.states.len(), cfg.solver.schedule(&cfg.rods).len());
    // static data: the seed is already harmonic
    for s in &out.states {
        assert!(s.sup_abs(0) <= 1e-8 && s.sup_abs(1) <= 1e-8);
    }
    write_solve_outputs(dir.path(), &mut out).unwrap();
    for f in [REPORT_FILE, SPACETIME_FILE, "fields.csv", "history.csv", "metric_samples.csv", "potentials.csv", "sigma_rays.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    assert_eq!(out.report.checkpoints.len(), out.states.len());
    let back = read_report(dir.path()).unwrap();
    assert_eq!(back, out.report);

    let cp = Checkpoint::read(&dir.path().join(&out.report.checkpoints[0])).unwrap();
    assert_eq!(cp.state.fields, out.states[0].fields);
    assert_eq!(cp.rods, cfg.rods);
}

#[test]
fn reports_are_deterministic() {
    let cfg = parse_config(ONE_ROD_K1).unwrap();
    let a = pipeline::solve(&cfg).unwrap();
    let b = pipeline::solve(&cfg).unwrap();
    assert!(a.report.ok());
    let ja = serde_json::to_string(&a.report).unwrap();
    let jb = serde_json::to_string(&b.report).unwrap();
    assert_eq!(ja, jb);
    let back: pipeline::RunReport = serde_json::from_str(&ja).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), ja);
    let s = a.report.spacetime.as_ref().unwrap();
    for c in [&s.closed_w, &s.closed_lambda].into_iter().chain(&s.closed_theta) {
        assert!(c.plaquettes > 0 && c.max_curl.is_finite());
    }
    assert_eq!(s.signature_violations, 0);
    assert!(s.det_relative_error <= 1e-12);
}

#[test]
fn report_reader_rejects_other_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(REPORT_FILE), "{\"format\": \"something\"}").unwrap();
    assert!(read_report(dir.path()).is_err());
}

#[test]
fn minimal_config_takes_the_defaults() {
    let cfg = parse_config(SCHWARZSCHILD_TOML).unwrap();
    let l = cfg.rods.diameter();
    assert_eq!(cfg.solver.schedule(&cfg.rods), vec![8.0 * l, 16.0 * l, 32.0 * l]);
    assert_eq!(cfg.grid.level, 1);
    assert!(cfg.gauge.is_identity());
}

#[test]
fn constants_are_normalised_and_checked() {
    let text = r#"
k = 2
[rods]
gaps = [[-2.0, -1.0], [1.0, 2.0]]
[[component]]
v = 1.0
psi = [0.5, -0.5]
[[component]]
v = 0.0
psi = [0.0, 0.0]
[[component]]
v = -1.0
psi = [-0.5, 0.5]
"#;
    let cfg = parse_config(text).unwrap();
    let first = &cfg.constants()[0];
    assert!(first.v.abs() <= 1e-12 && first.psi.iter().all(|x| x.abs() <= 1e-12));
    assert!(!cfg.gauge.is_identity());

    let bad = text.replacen("psi = [0.0, 0.0]", "psi = [0.0]", 1);
    let e = parse_config(&bad).unwrap_err().to_string();
    assert!(e.contains("k = 2") && e.contains("line"), "{e}");

    let overlap = text.replacen("[1.0, 2.0]", "[-1.5, 2.0]", 1);
    assert!(parse_config(&overlap).is_err());

    let missing = text.replacen("[[component]]\nv = -1.0\npsi = [-0.5, 0.5]\n", "", 1);
    assert!(parse_config(&missing).unwrap_err().to_string().contains("[[component]]"));
}
