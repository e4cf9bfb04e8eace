//! Seed, exhaustion solve, diagnostics and reconstruction for one
//! configuration, and the files written for it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::diagnostics::{
    check_dist_subharmonic, check_max_principle, decay_at_infinity, distance_field, seed_constant_on_grid,
    uniformity_across_r, BoundReport, DecayReport, SubharmonicReport, UniformityVerdict,
};
use crate::error::{Error, Result};
use crate::rod_structure::{axis_potential_u0, RodConfig, SingularMapSpec};
use crate::seed_map::{build_seed, default_decay_angles, default_decay_radii, seed_tension_report, SeedDecayReport, SeedMap};
use crate::solver::{
    cauchy_difference, discrete_euler_lagrange, solve_on_ball, step3_inequality_check, Checkpoint, FieldState, Grid,
    SolveReport, Step3Report,
};
use crate::spacetime::{
    assemble_metric, conical_deficit, reconstruct, Closedness, ReconstructOptions, ConicalReport, MetricRecord, SpacetimeFields,
    TwistConvention,
};
use crate::target_geometry::GaugeIsometry;

pub const REPORT_FORMAT: &str = "axiharm-run-report";
pub const REPORT_FILE: &str = "report.json";

/// Sparse factorisations run sequentially unless asked otherwise, which keeps
/// reports byte-identical between runs.
pub fn set_threads(n: usize) {
    let par = if n <= 1 { faer::Par::Seq } else { faer::Par::rayon(n) };
    faer::set_global_parallelism(par);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusDiagnostics {
    pub radius: f64,
    pub bound: BoundReport,
    pub subharmonic: SubharmonicReport,
    pub step3: Step3Report,
    pub u_reg_sup: f64,
    pub v_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeSummary {
    pub convention: TwistConvention,
    pub closed_w: Closedness,
    pub closed_lambda: Closedness,
    pub closed_theta: Vec<Closedness>,
    pub path_difference_w: f64,
    pub path_difference_lambda: f64,
    pub path_difference_theta: Vec<f64>,
    pub conical: ConicalReport,
    pub warning: bool,
    pub signature_violations: usize,
    /// `max |det + rho^2| / (|g_tt g_phiphi| + g_tphi^2)` over the samples.
    pub det_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub seed_decay: SeedDecayReport,
    /// Seed tension constant used by the distance bounds: the larger of the
    /// fitted constant and the sup over the cells of the largest ball.
    pub c_measured: f64,
    pub solves: Vec<SolveReport>,
    pub checkpoints: Vec<String>,
    pub probe_radius: f64,
    pub cauchy: Vec<f64>,
    pub cauchy_decreasing: bool,
    pub diagnostics: Vec<RadiusDiagnostics>,
    pub uniformity: Option<UniformityVerdict>,
    pub decay: Option<DecayReport>,
    pub spacetime: Option<SpacetimeSummary>,
    pub failure: Option<String>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

pub struct SolveOutcome {
    pub report: RunReport,
    pub seed: SeedMap,
    /// Converged states, one per radius reached.
    pub states: Vec<FieldState>,
    /// Spacetime of the last converged state.
    pub reconstruction: Option<Reconstruction>,
}

impl SolveOutcome {
    pub fn last_state(&self) -> Option<&FieldState> {
        self.states.last()
    }
}

/// Seed, solve on every radius of the schedule with warm starts, run the
/// diagnostics on each converged ball and reconstruct the spacetime of the
/// last one. A solver failure stops the schedule and is recorded in the
/// report.
pub fn solve(cfg: &RunConfig) -> Result<SolveOutcome> {
    let rods = &cfg.rods;
    let spec = &cfg.spec;
    let seed = build_seed(rods, spec, &cfg.seed)?;
    let seed_decay = seed_tension_report(
        &seed,
        &default_decay_radii(&seed, cfg.diagnostics.decay_radii),
        &default_decay_angles(&seed, 32),
    )?;
    let schedule = cfg.solver.schedule(rods);
    let probe_radius = 0.5 * schedule[0];

    let mut solves = Vec::new();
    let mut states: Vec<FieldState> = Vec::new();
    let mut failure = None;
    for &radius in &schedule {
        let grid = Grid::build(rods, radius, &cfg.grid)?;
        match solve_on_ball(&seed, rods, spec, &grid, &cfg.solver, states.last()) {
            Ok((state, report)) => {
                let converged = report.converged;
                solves.push(report);
                if !converged {
                    failure = Some(format!("no convergence at R = {radius}: residual {:.3e}", state.residual));
                    break;
                }
                states.push(state);
            }
            Err(e) => {
                failure = Some(format!("solver failed at R = {radius}: {e}"));
                break;
            }
        }
    }

    let mut c_measured = seed_decay.c_measured;
    if let Some(s) = states.last() {
        c_measured = c_measured.max(seed_constant_on_grid(&seed, &s.grid)?);
    }
    let tol = cfg.diagnostics.tol;
    let mut diagnostics = Vec::new();
    for s in &states {
        let field = distance_field(s, rods, &seed)?;
        let bound = check_max_principle(&field, &s.grid, c_measured, tol)?;
        let seed_state = FieldState::from_boundary(&s.grid, &seed)?;
        let subharmonic = check_dist_subharmonic(s, &seed_state, rods, spec, tol)?;
        let step3 = step3_inequality_check(&discrete_euler_lagrange(s, rods, spec)?, cfg.solver.tol);
        diagnostics.push(RadiusDiagnostics {
            radius: s.radius(),
            bound,
            subharmonic,
            step3,
            u_reg_sup: s.sup_abs(0),
            v_sup: s.sup_abs(1),
        });
    }
    let uniformity = if diagnostics.len() >= 3 {
        Some(uniformity_across_r(&diagnostics.iter().map(|d| d.bound.clone()).collect::<Vec<_>>())?)
    } else {
        None
    };
    let decay = match states.last() {
        Some(s) => {
            let field = distance_field(s, rods, &seed)?;
            let angles: Vec<f64> = (0..cfg.diagnostics.rays)
                .map(|i| std::f64::consts::PI * (i as f64 + 0.5) / cfg.diagnostics.rays as f64)
                .collect();
            Some(decay_at_infinity(&field, &s.grid, c_measured, &angles, cfg.diagnostics.samples_per_ray, tol)?)
        }
        None => None,
    };
    let mut cauchy = Vec::new();
    for w in states.windows(2) {
        cauchy.push(cauchy_difference(&w[0], &w[1], rods, probe_radius)?);
    }
    let report = RunReport {
        format: REPORT_FORMAT.into(),
        version: 1,
        config: cfg.clone(),
        seed_decay,
        c_measured,
        solves,
        checkpoints: Vec::new(),
        probe_radius,
        cauchy_decreasing: cauchy.windows(2).all(|w| w[1] <= w[0]),
        cauchy,
        diagnostics,
        uniformity,
        decay,
        spacetime: None,
        failure,
    };
    let mut out = SolveOutcome { report, seed, states, reconstruction: None };
    if let Some(s) = out.states.last() {
        match reconstruct_state(cfg, s) {
            Ok(rec) => {
                out.report.spacetime = Some(rec.summary.clone());
                out.reconstruction = Some(rec);
            }
            Err(e) => {
                log::warn!("reconstruction failed: {e}");
                out.report.failure.get_or_insert(format!("reconstruction failed: {e}"));
            }
        }
    }
    Ok(out)
}

/// Cells on a lattice of at most about `64 x 128` samples.
pub fn metric_sample_cells(state: &FieldState, fields: &SpacetimeFields) -> Vec<usize> {
    let grid = &state.grid;
    let si = grid.nr().div_ceil(64).max(1);
    let sj = grid.nz().div_ceil(128).max(1);
    let mut out = Vec::new();
    for j in (0..grid.nz()).step_by(sj) {
        for i in (0..grid.nr()).step_by(si) {
            let id = grid.id(i, j);
            if grid.is_active(id) && fields.w[id].is_finite() && fields.lambda[id].is_finite() {
                out.push(id);
            }
        }
    }
    out
}

pub struct Reconstruction {
    pub fields: SpacetimeFields,
    pub samples: Vec<MetricRecord>,
    pub summary: SpacetimeSummary,
}

pub fn reconstruct_state(cfg: &RunConfig, state: &FieldState) -> Result<Reconstruction> {
    reconstruct_with(&cfg.rods, &cfg.spec, &cfg.reconstruct, state)
}

pub fn reconstruct_with(
    rods: &RodConfig,
    spec: &SingularMapSpec,
    opts: &ReconstructOptions,
    state: &FieldState,
) -> Result<Reconstruction> {
    let fields = reconstruct(state, rods, spec, opts)?;
    let conical = conical_deficit(state, &fields, rods, opts.endpoint_margin)?;
    let cells = metric_sample_cells(state, &fields);
    let samples = assemble_metric(state, &fields, rods, &cells)?;
    let signature_violations = samples.iter().filter(|m| !m.signature_ok).count();
    if signature_violations > 0 {
        log::warn!("{signature_violations} metric samples violate the Lorentzian signature");
    }
    let det_relative_error = samples
        .iter()
        .map(|m| (m.det_tphi + m.rho * m.rho).abs() / ((m.g_tt * m.g_phiphi).abs() + m.g_tphi * m.g_tphi))
        .fold(0.0, f64::max);
    let summary = SpacetimeSummary {
        convention: opts.convention,
        closed_w: fields.closed_w.clone(),
        closed_lambda: fields.closed_lambda.clone(),
        closed_theta: fields.closed_theta.clone(),
        path_difference_w: fields.path_difference_w,
        path_difference_lambda: fields.path_difference_lambda,
        path_difference_theta: fields.path_difference_theta.clone(),
        conical,
        warning: fields.warning,
        signature_violations,
        det_relative_error,
    };
    Ok(Reconstruction { fields, samples, summary })
}

/// The state expressed in the gauge of the constants as written.
pub fn to_written_gauge(state: &FieldState, gauge: &GaugeIsometry) -> FieldState {
    let inv = gauge.inverse();
    let mut out = state.clone();
    for id in 0..state.grid.num_cells() {
        let p = inv.apply(&state.regular_point(id));
        for (f, x) in p.coords().into_iter().enumerate() {
            out.fields[f][id] = x;
        }
    }
    out
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv output: {e}"))
}

fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

fn write_fields_csv(path: &Path, cfg: &RunConfig, state: &FieldState, seed: &SeedMap) -> Result<()> {
    let k = state.k;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["rho".to_string(), "z".into(), "u".into()];
    header.extend(crate::solver::state::field_names(k));
    header.push("sigma".into());
    w.write_record(&header).map_err(csv_err)?;
    let field = distance_field(state, &cfg.rods, seed)?;
    let sig = field.sigma_grid(&state.grid);
    for &id in &state.grid.active {
        let x = state.grid.centre(id);
        let mut rec = vec![fmt(x.rho), fmt(x.z), fmt(state.fields[0][id] + axis_potential_u0(&cfg.rods, x)?)];
        rec.extend(state.fields.iter().map(|f| fmt(f[id])));
        rec.push(fmt(sig[id]));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_rays_csv(path: &Path, decay: &DecayReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["theta", "r", "sigma", "envelope"]).map_err(csv_err)?;
    for s in &decay.samples {
        w.write_record([fmt(s.theta), fmt(s.r), fmt(s.sigma), fmt(s.envelope)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_history_csv(path: &Path, solves: &[SolveReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["radius", "iteration", "energy", "residual"]).map_err(csv_err)?;
    for s in solves {
        for (i, (e, r)) in s.energy_history.iter().zip(&s.residual_history).enumerate() {
            w.write_record([fmt(s.radius), i.to_string(), fmt(*e), fmt(*r)]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_metric_csv(path: &Path, k: usize, samples: &[MetricRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = ["rho", "z", "g_tt", "g_tphi", "g_phiphi", "g_rhorho"].map(String::from).to_vec();
    header.extend((1..=k).map(|i| format!("A_t{i}")));
    header.extend((1..=k).map(|i| format!("A_phi{i}")));
    header.extend(["det_tphi".to_string(), "signature_ok".to_string()]);
    w.write_record(&header).map_err(csv_err)?;
    for m in samples {
        let mut rec = vec![fmt(m.rho), fmt(m.z), fmt(m.g_tt), fmt(m.g_tphi), fmt(m.g_phiphi), fmt(m.g_rhorho)];
        rec.extend(m.a_t.iter().chain(&m.a_phi).map(|x| fmt(*x)));
        rec.push(fmt(m.det_tphi));
        rec.push(m.signature_ok.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_potentials_csv(path: &Path, state: &FieldState, f: &SpacetimeFields) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = ["rho", "z", "w", "lambda"].map(String::from).to_vec();
    header.extend((1..=f.k).map(|i| format!("theta{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for &id in &state.grid.active {
        if !(f.w[id].is_finite() && f.lambda[id].is_finite()) {
            continue;
        }
        let x = state.grid.centre(id);
        let mut rec = vec![fmt(x.rho), fmt(x.z), fmt(f.w[id]), fmt(f.lambda[id])];
        rec.extend(f.theta.iter().map(|t| fmt(t[id])));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let f = std::io::BufWriter::new(std::fs::File::create(dir.join(REPORT_FILE))?);
    serde_json::to_writer_pretty(f, report)?;
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join(REPORT_FILE);
    let f = std::io::BufReader::new(std::fs::File::open(&path)?);
    let r: RunReport = serde_json::from_reader(f)?;
    if r.format != REPORT_FORMAT {
        return Err(Error::Config(format!("{} is not a run report", path.display())));
    }
    Ok(r)
}

/// Checkpoints, field, ray and metric tables, residual histories and the
/// report.
pub fn write_solve_outputs(dir: &Path, out: &mut SolveOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let cfg = out.report.config.clone();
    out.report.checkpoints.clear();
    if cfg.output.checkpoints {
        for (i, s) in out.states.iter().enumerate() {
            let name = format!("checkpoint_{i}.json");
            Checkpoint::new(&cfg.rods, &cfg.spec, s).write(&dir.join(&name))?;
            out.report.checkpoints.push(name);
        }
    }
    if let Some(s) = out.states.last() {
        write_fields_csv(&dir.join("fields.csv"), &cfg, s, &out.seed)?;
        if let Some(rec) = &out.reconstruction {
            write_spacetime_outputs(dir, s, rec)?;
        }
    }
    if let Some(d) = &out.report.decay {
        write_rays_csv(&dir.join("sigma_rays.csv"), d)?;
    }
    write_history_csv(&dir.join("history.csv"), &out.report.solves)?;
    write_report(dir, &out.report)
}

pub const SPACETIME_FILE: &str = "spacetime.json";

pub fn write_spacetime_outputs(dir: &Path, state: &FieldState, rec: &Reconstruction) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let f = std::io::BufWriter::new(std::fs::File::create(dir.join(SPACETIME_FILE))?);
    serde_json::to_writer_pretty(f, &rec.summary)?;
    write_metric_csv(&dir.join("metric_samples.csv"), state.k, &rec.samples)?;
    write_potentials_csv(&dir.join("potentials.csv"), state, &rec.fields)
}

pub fn summarize_spacetime(t: &SpacetimeSummary) -> String {
    let mut s = format!(
        "closedness (max curl) w {:.2e}, lambda {:.2e}, theta {:?}; warning {}\n",
        t.closed_w.max_curl,
        t.closed_lambda.max_curl,
        t.closed_theta.iter().map(|c| format!("{:.2e}", c.max_curl)).collect::<Vec<_>>(),
        t.warning
    );
    for e in &t.conical.bounded {
        s += &format!("bounded component {}: b = {:.4e} (regular {})\n", e.component, e.b, e.regular);
    }
    for e in &t.conical.unbounded {
        s += &format!("end ray {}: b = {:.4e}\n", e.component, e.b);
    }
    s += &format!("{}\n", t.conical.note);
    s
}

/// Human-readable digest of a report.
pub fn summarize(r: &RunReport) -> String {
    let mut s = String::new();
    let cfg = &r.config;
    s += &format!("rods {:?}, k = {}\n", cfg.rods.gaps(), cfg.k);
    s += &format!(
        "seed decay slope {:.3} (raw {:.3}), c_measured {:.3e}\n",
        r.seed_decay.slope, r.seed_decay.raw_slope, r.c_measured
    );
    for (sv, d) in r.solves.iter().zip(r.diagnostics.iter().map(Some).chain(std::iter::repeat(None))) {
        s += &format!(
            "R = {:<8} cells {:<7} converged {:<5} residual {:.2e} newton {} sweeps {}",
            sv.radius, sv.cells, sv.converged, sv.residual, sv.newton_steps, sv.relaxation_sweeps
        );
        if let Some(d) = d {
            s += &format!(
                "  sigma_max {:.3e} <= {:.3e}: {}  maxprinc {}  step3 2Q {}",
                d.bound.sigma_max, d.bound.bound, d.bound.pass_bound, d.bound.pass_maxprinc, d.step3.pass_two_q
            );
        }
        s += "\n";
    }
    if !r.cauchy.is_empty() {
        s += &format!(
            "Cauchy differences on B({}) {:?}, decreasing {}\n",
            r.probe_radius,
            r.cauchy.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(),
            r.cauchy_decreasing
        );
    }
    if let Some(u) = &r.uniformity {
        s += &format!("sigma_max slope across R {:.3} +- {:.3}, no growth {}\n", u.slope, u.slope_stderr, u.no_growth);
    }
    if let Some(t) = &r.spacetime {
        s += &summarize_spacetime(t);
    }
    match &r.failure {
        Some(f) => s += &format!("FAILED: {f}\n"),
        None => s += "status: ok\n",
    }
    s
}
