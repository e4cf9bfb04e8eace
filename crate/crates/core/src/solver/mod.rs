//! Energy minimisation on balls and the exhaustion `R -> infinity`.

pub mod energy;
pub mod grid;
pub mod newton;
pub mod pointwise;
pub mod state;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rod_structure::{axis_potential_u0, AxisPoint, RodConfig, SingularMapSpec};
use crate::target_geometry::distance;

pub use energy::Discretization;
pub use grid::{CellKind, Grid, GridParams};
pub use pointwise::{discrete_euler_lagrange, PointwiseTension};
pub use state::{BoundaryData, Checkpoint, FieldState};

fn default_tol() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    60
}
fn default_patience() -> usize {
    8
}
fn default_max_sweeps() -> usize {
    20000
}
fn default_check_every() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    /// Sup of the pointwise tension norm recovered from the energy gradient.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Newton iteration budget per ball.
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Iterations without a new best residual before giving up.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Gauss-Seidel sweep budget when Newton stalls.
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_check_every")]
    pub check_every: usize,
    /// Ball radii; empty means `{8, 16, 32}` times the configuration diameter.
    #[serde(default)]
    pub r_schedule: Vec<f64>,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iters: default_max_iters(),
            patience: default_patience(),
            max_sweeps: default_max_sweeps(),
            check_every: default_check_every(),
            r_schedule: Vec::new(),
        }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.check_every == 0 {
            return Err(Error::InvalidParameter("check_every must be at least 1".into()));
        }
        if self.r_schedule.windows(2).any(|w| !(w[1] > w[0])) || self.r_schedule.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "R schedule must be positive and strictly increasing, got {:?}",
                self.r_schedule
            )));
        }
        Ok(())
    }

    pub fn schedule(&self, rods: &RodConfig) -> Vec<f64> {
        if self.r_schedule.is_empty() {
            default_schedule(rods)
        } else {
            self.r_schedule.clone()
        }
    }
}

/// `{8, 16, 32} L` with `L` the configuration diameter.
pub fn default_schedule(rods: &RodConfig) -> Vec<f64> {
    let l = rods.diameter();
    vec![8.0 * l, 16.0 * l, 32.0 * l]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub radius: f64,
    pub cells: usize,
    pub converged: bool,
    pub residual: f64,
    pub energy_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub newton_steps: usize,
    pub relaxation_sweeps: usize,
    /// `sup (sqrt(1 + dist^2) - 1)` between the solution and the boundary data.
    pub sigma_max: f64,
}

/// Renormalised energy of a state.
pub fn discrete_energy(state: &FieldState, rods: &RodConfig, spec: &SingularMapSpec) -> Result<f64> {
    state.check_finite()?;
    let disc = Discretization::new(&state.grid, rods, spec)?;
    let f = disc.energy(&state.fields);
    if !f.is_finite() {
        return Err(Error::NonFinite("discrete energy"));
    }
    Ok(f)
}

/// `sqrt(1 + dist^2) - 1` between the state and the data at every active cell.
pub fn sigma_field(state: &FieldState, rods: &RodConfig, data: &dyn BoundaryData) -> Result<Vec<f64>> {
    state
        .grid
        .active
        .iter()
        .map(|&id| {
            let x = state.grid.centre(id);
            let u0 = axis_potential_u0(rods, x)?;
            let mut p = state.regular_point(id);
            let mut q = data.regular_value(x)?;
            p.u += u0;
            q.u += u0;
            let d = distance(&p, &q);
            Ok((1.0 + d * d).sqrt() - 1.0)
        })
        .collect()
}

/// Minimise the energy on the ball of `grid` with Dirichlet data from `data`.
pub fn solve_on_ball(
    data: &dyn BoundaryData,
    rods: &RodConfig,
    spec: &SingularMapSpec,
    grid: &Grid,
    params: &SolveParams,
    init: Option<&FieldState>,
) -> Result<(FieldState, SolveReport)> {
    params.validate()?;
    if data.k() != spec.k {
        return Err(Error::DimensionMismatch { expected: spec.k, found: data.k() });
    }
    let mut state = FieldState::from_boundary(grid, data)?;
    if let Some(prev) = init {
        if prev.k != spec.k {
            return Err(Error::DimensionMismatch { expected: spec.k, found: prev.k });
        }
        state.warm_start_from(prev);
    }
    state.check_finite()?;
    let disc = Discretization::new(grid, rods, spec)?;
    newton::check_coverage(&disc, &state)?;
    let res = newton::ResidualMap::new(&state, rods)?;
    let mut hist = newton::History::default();

    let mut converged = newton::newton(&disc, &mut state, &res, params, &mut hist)?;
    if !converged {
        log::warn!("Newton stalled at residual {:.3e}; switching to relaxation", state.residual);
        converged = newton::relax(&disc, &mut state, &res, params, &mut hist)?;
        if !converged {
            // relaxation may have brought the state back into Newton's basin
            converged = newton::newton(&disc, &mut state, &res, params, &mut hist)?;
        }
    }
    state.converged = converged;
    for w in hist.energy.windows(2) {
        let slack = 64.0 * f64::EPSILON * w[0].abs();
        if w[1] > w[0] + slack {
            return Err(Error::SolverFailure {
                reason: format!("energy increased from {} to {}", w[0], w[1]),
            });
        }
    }
    let sigma = sigma_field(&state, rods, data)?;
    let report = SolveReport {
        radius: grid.radius,
        cells: grid.active.len(),
        converged,
        residual: state.residual,
        energy_history: hist.energy,
        residual_history: hist.residual,
        newton_steps: hist.newton_steps,
        relaxation_sweeps: hist.relaxation_sweeps,
        sigma_max: sigma.into_iter().fold(0.0, f64::max),
    };
    log::info!(
        "R = {}: {} cells, residual {:.3e} after {} Newton steps and {} sweeps",
        grid.radius,
        report.cells,
        report.residual,
        report.newton_steps,
        report.relaxation_sweeps
    );
    Ok((state, report))
}

/// `sup_{B_{r0}} dist(a, b)` over the cells of `b` that also exist in `a`.
pub fn cauchy_difference(a: &FieldState, b: &FieldState, rods: &RodConfig, r0: f64) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for &id in &b.grid.active {
        let x = b.grid.centre(id);
        if x.r() >= r0 {
            continue;
        }
        let Some(aid) = b.grid.locate_in(id, &a.grid) else { continue };
        if !a.grid.has_value(aid) {
            continue;
        }
        let u0 = axis_potential_u0(rods, x)?;
        let mut p = a.regular_point(aid);
        let mut q = b.regular_point(id);
        p.u += u0;
        q.u += u0;
        sup = sup.max(distance(&p, &q));
    }
    Ok(sup)
}

#[derive(Debug, Clone)]
pub struct ExhaustRun {
    pub radius: f64,
    pub state: FieldState,
    pub report: SolveReport,
}

#[derive(Debug, Clone)]
pub struct ExhaustReport {
    pub runs: Vec<ExhaustRun>,
    pub probe_radius: f64,
    /// `sup_{B_{R0}} dist` between consecutive radii.
    pub cauchy: Vec<f64>,
}

impl ExhaustReport {
    pub fn cauchy_decreasing(&self) -> bool {
        self.cauchy.windows(2).all(|w| w[1] < w[0])
    }

    pub fn last(&self) -> &ExhaustRun {
        self.runs.last().expect("exhaustion has at least one radius")
    }
}

/// Solve on every radius of the schedule, warm-starting each ball from the
/// previous solution. The probe ball has half the smallest radius.
pub fn exhaust(
    data: &dyn BoundaryData,
    rods: &RodConfig,
    spec: &SingularMapSpec,
    grid_params: &GridParams,
    params: &SolveParams,
) -> Result<ExhaustReport> {
    params.validate()?;
    let schedule = params.schedule(rods);
    let probe_radius = 0.5 * schedule[0];
    let mut runs: Vec<ExhaustRun> = Vec::new();
    for &radius in &schedule {
        let grid = Grid::build(rods, radius, grid_params)?;
        let init = runs.last().map(|r| &r.state);
        let (state, report) = solve_on_ball(data, rods, spec, &grid, params, init)?;
        if !report.converged {
            return Err(Error::SolverFailure {
                reason: format!("no convergence at R = {radius}: residual {:.3e}", report.residual),
            });
        }
        runs.push(ExhaustRun { radius, state, report });
    }
    let mut cauchy = Vec::new();
    for w in runs.windows(2) {
        cauchy.push(cauchy_difference(&w[0].state, &w[1].state, rods, probe_radius)?);
    }
    Ok(ExhaustReport { runs, probe_radius, cauchy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step3Report {
    pub cells: usize,
    /// Cells where `lap(u - u0) < -slack`.
    pub subharmonic_violations: usize,
    /// Cells where `2Q > lap(u - u0) + slack`.
    pub two_q_violations: usize,
    /// Cells where `Q > lap(u - u0) + slack`.
    pub q_violations: usize,
    pub subharmonic_fraction: f64,
    pub two_q_fraction: f64,
    pub q_fraction: f64,
    /// `max (2Q - lap(u - u0))` and `max (Q - lap(u - u0))` over the cells.
    #[serde(with = "crate::nonfinite")]
    pub max_two_q_excess: f64,
    #[serde(with = "crate::nonfinite")]
    pub max_q_excess: f64,
    pub pass_subharmonic: bool,
    pub pass_two_q: bool,
}

/// Truncation-aware check of `2 Q <= lap(u - u0)` and `lap(u - u0) >= 0`.
///
/// The slack at each cell is twice the Richardson estimate of the
/// discretisation error (single versus doubled stride), never below
/// `10 tol`. Cells without the doubled stencil are skipped.
pub fn step3_inequality_check(pt: &PointwiseTension, tol: f64) -> Step3Report {
    let floor = 10.0 * tol;
    let (mut n, mut sub, mut two, mut one) = (0usize, 0usize, 0usize, 0usize);
    let (mut ex2, mut ex1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (&(lap, lap2), &(q, q2)) in pt.lap_ureg.iter().zip(&pt.q) {
        if !(lap2.is_finite() && q2.is_finite()) {
            continue;
        }
        n += 1;
        let err_lap = (lap - lap2).abs() / 3.0;
        let err_q = (q - q2).abs() / 3.0;
        if lap < -(2.0 * err_lap).max(floor) {
            sub += 1;
        }
        if 2.0 * q - lap > (2.0 * (err_lap + 2.0 * err_q)).max(floor) {
            two += 1;
        }
        if q - lap > (2.0 * (err_lap + err_q)).max(floor) {
            one += 1;
        }
        ex2 = ex2.max(2.0 * q - lap);
        ex1 = ex1.max(q - lap);
    }
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Step3Report {
        cells: n,
        subharmonic_violations: sub,
        two_q_violations: two,
        q_violations: one,
        subharmonic_fraction: frac(sub),
        two_q_fraction: frac(two),
        q_fraction: frac(one),
        max_two_q_excess: ex2,
        max_q_excess: ex1,
        pass_subharmonic: frac(sub) < 0.01,
        pass_two_q: frac(two) < 0.01,
    }
}

/// Whether `x` lies at least `margin` away from every gap endpoint.
pub fn away_from_endpoints(rods: &RodConfig, x: AxisPoint, margin: f64) -> bool {
    rods.endpoints().iter().all(|&e| (x.rho * x.rho + (x.z - e).powi(2)).sqrt() >= margin)
}
