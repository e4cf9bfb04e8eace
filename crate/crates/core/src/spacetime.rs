//! Reconstruction of the stationary axisymmetric metric
//!
//! ```text
//! ds^2 = -rho^2 e^{2u} dt^2 + e^{-2u} (dphi - w dt)^2 + e^{2 lambda} (drho^2 + dz^2)
//! A = -(chi dphi + theta dt)
//! ```
//!
//! from a harmonic map. With `xi = d/dphi` and the flat Hodge star the
//! potentials have
//!
//! ```text
//! dw     = rho e^{4u} (omega_rho dz - omega_z drho)
//! dtheta = rho e^{2u} (psi_rho dz - psi_z drho) - w dchi
//! ```
//!
//! and `dlambda` is the quadratic expression below. Forms are sampled at cell
//! centres from the pointwise stencils and integrated with the trapezoid
//! rule along a breadth-first spanning tree of the cell graph.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rod_structure::{axis_potential_u0, grad_u0, u0_regular_part, AxisPoint, AxisSite, RodConfig, SingularMapSpec};
use crate::solver::pointwise::{axis_clamp, field_derivatives};
use crate::solver::{FieldState, Grid};

/// Sign of the `psi . dchi` term in the twist form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TwistConvention {
    /// `omega = 2 (dv + chi.dpsi - psi.dchi)`, the form that is closed.
    #[default]
    Minus,
    /// `omega = 2 (dv + chi.dpsi + psi.dchi)`, kept for sensitivity runs.
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub convention: TwistConvention,
    /// Closedness is measured on plaquettes at least this far from every
    /// gap endpoint.
    pub endpoint_margin: f64,
    /// Discrete curl above which the reconstruction is flagged.
    pub warn_threshold: f64,
}

impl ReconstructOptions {
    pub fn default_for(rods: &RodConfig) -> Self {
        Self { convention: TwistConvention::Minus, endpoint_margin: 0.5 * rods.min_feature(), warn_threshold: 1e-2 }
    }
}

/// Derivatives and map values at one usable cell.
#[derive(Debug, Clone)]
struct CellData {
    rho: f64,
    u: f64,
    /// `(d_rho, d_z)` of `u` (including `u0`), `v`, `chi_i`, `psi_i`.
    du: [f64; 2],
    dv: [f64; 2],
    chi: Vec<f64>,
    psi: Vec<f64>,
    dchi: Vec<[f64; 2]>,
    dpsi: Vec<[f64; 2]>,
}

fn cell_data(state: &FieldState, rods: &RodConfig, spec: &SingularMapSpec) -> Result<Vec<Option<CellData>>> {
    let grid = &state.grid;
    let k = state.k;
    let clamp = axis_clamp(spec);
    let mut out = vec![None; grid.num_cells()];
    for &id in &grid.active {
        let Some(d) = field_derivatives(grid, &state.fields, id, 1, Some(&clamp)) else { continue };
        let x = grid.centre(id);
        let (g0r, g0z) = grad_u0(rods, x)?;
        let p = state.regular_point(id);
        out[id] = Some(CellData {
            rho: x.rho,
            u: p.u + axis_potential_u0(rods, x)?,
            du: [d[0][0] + g0r, d[0][1] + g0z],
            dv: [d[1][0], d[1][1]],
            dchi: (0..k).map(|i| [d[2 + i][0], d[2 + i][1]]).collect(),
            dpsi: (0..k).map(|i| [d[2 + k + i][0], d[2 + k + i][1]]).collect(),
            chi: p.chi,
            psi: p.psi,
        });
    }
    Ok(out)
}

fn omega_of(c: &CellData, conv: TwistConvention) -> [f64; 2] {
    let sign = match conv {
        TwistConvention::Minus => -1.0,
        TwistConvention::Plus => 1.0,
    };
    let mut om = [0.0; 2];
    for (d, o) in om.iter_mut().enumerate() {
        let mut x = c.dv[d];
        for i in 0..c.chi.len() {
            x += c.chi[i] * c.dpsi[i][d] + sign * c.psi[i] * c.dchi[i][d];
        }
        *o = 2.0 * x;
    }
    om
}

fn w_form(c: &CellData, om: [f64; 2]) -> [f64; 2] {
    let f = c.rho * (4.0 * c.u).exp();
    [-f * om[1], f * om[0]]
}

/// `dlambda` exactly as the quadratic expression in the map derivatives.
fn lambda_form(c: &CellData, om: [f64; 2]) -> [f64; 2] {
    let e2 = (2.0 * c.u).exp();
    let e4 = e2 * e2;
    let [ur, uz] = c.du;
    let mut cp_rr_zz = 0.0;
    let mut cp_rz = 0.0;
    for i in 0..c.chi.len() {
        let (a, b) = (c.dchi[i], c.dpsi[i]);
        cp_rr_zz += a[0] * a[0] - a[1] * a[1] + b[0] * b[0] - b[1] * b[1];
        cp_rz += a[0] * a[1] + b[0] * b[1];
    }
    let r = c.rho;
    [
        ur + r * (ur * ur - uz * uz + 0.25 * e4 * (om[0] * om[0] - om[1] * om[1]) + e2 * cp_rr_zz),
        uz + 2.0 * r * (ur * uz + 0.25 * e4 * om[0] * om[1] + e2 * cp_rz),
    ]
}

fn theta_form(c: &CellData, i: usize, w: f64) -> [f64; 2] {
    let f = c.rho * (2.0 * c.u).exp();
    [-f * c.dpsi[i][1] - w * c.dchi[i][0], f * c.dpsi[i][0] - w * c.dchi[i][1]]
}

/// A one-form sampled at cell centres (`None` where unavailable).
pub type Form = Vec<Option<[f64; 2]>>;

/// `omega`, `dw` and `dlambda` at cell centres.
#[derive(Debug, Clone)]
pub struct PotentialForms {
    pub omega: Form,
    pub w: Form,
    pub lambda: Form,
}

fn forms_from(data: &[Option<CellData>], conv: TwistConvention) -> PotentialForms {
    let omega: Form = data.iter().map(|c| c.as_ref().map(|c| omega_of(c, conv))).collect();
    let w = data.iter().zip(&omega).map(|(c, o)| c.as_ref().map(|c| w_form(c, o.unwrap()))).collect();
    let lambda = data.iter().zip(&omega).map(|(c, o)| c.as_ref().map(|c| lambda_form(c, o.unwrap()))).collect();
    PotentialForms { omega, w, lambda }
}

pub fn potential_forms(
    state: &FieldState,
    rods: &RodConfig,
    spec: &SingularMapSpec,
    conv: TwistConvention,
) -> Result<PotentialForms> {
    spec.check_against(rods)?;
    Ok(forms_from(&cell_data(state, rods, spec)?, conv))
}

fn increment(grid: &Grid, form: &Form, a: usize, b: usize) -> f64 {
    let (fa, fb) = (form[a].expect("usable"), form[b].expect("usable"));
    let (ia, ja) = grid.ij(a);
    let (ib, jb) = grid.ij(b);
    if ja == jb {
        0.5 * (fa[0] + fb[0]) * (grid.rho_c[ib] - grid.rho_c[ia])
    } else {
        debug_assert_eq!(ia, ib);
        0.5 * (fa[1] + fb[1]) * (grid.z_c[jb] - grid.z_c[ja])
    }
}

/// Order in which a breadth-first search visits neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathTree {
    /// Vertical moves first.
    ZFirst,
    /// Radial moves first.
    RhoFirst,
}

fn neighbours(grid: &Grid, id: usize, tree: PathTree) -> Vec<usize> {
    let (i, j) = grid.ij(id);
    let mut z = Vec::new();
    let mut r = Vec::new();
    if j + 1 < grid.nz() {
        z.push(grid.id(i, j + 1));
    }
    if j > 0 {
        z.push(grid.id(i, j - 1));
    }
    if i + 1 < grid.nr() {
        r.push(grid.id(i + 1, j));
    }
    if i > 0 {
        r.push(grid.id(i - 1, j));
    }
    match tree {
        PathTree::ZFirst => z.into_iter().chain(r).collect(),
        PathTree::RhoFirst => r.into_iter().chain(z).collect(),
    }
}

/// Integrate `form` from `base` (value 0) over the usable cells. The tree is
/// first grown through the cells passing `prefer` so that paths avoid the
/// singular endpoints, then extended to the rest. Unreached cells stay NaN.
fn integrate(grid: &Grid, form: &Form, base: usize, tree: PathTree, prefer: &dyn Fn(usize) -> bool) -> Vec<f64> {
    let mut out = vec![f64::NAN; grid.num_cells()];
    if form[base].is_none() {
        return out;
    }
    out[base] = 0.0;
    let mut visited = vec![base];
    for phase in 0..2 {
        let mut queue: VecDeque<usize> = visited.iter().copied().collect();
        while let Some(a) = queue.pop_front() {
            for b in neighbours(grid, a, tree) {
                if form[b].is_some() && out[b].is_nan() && (phase == 1 || prefer(b)) {
                    out[b] = out[a] + increment(grid, form, a, b);
                    queue.push_back(b);
                    visited.push(b);
                }
            }
        }
    }
    out
}

/// Same as [`integrate`] but the form may depend on the partially built
/// potential through `w` (used for `theta`).
fn integrate_theta(
    grid: &Grid,
    data: &[Option<CellData>],
    w: &[f64],
    i: usize,
    base: usize,
    tree: PathTree,
    prefer: &dyn Fn(usize) -> bool,
) -> (Vec<f64>, Form) {
    let form: Form = data
        .iter()
        .enumerate()
        .map(|(id, c)| c.as_ref().filter(|_| w[id].is_finite()).map(|c| theta_form(c, i, w[id])))
        .collect();
    (integrate(grid, &form, base, tree, prefer), form)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Closedness {
    /// Largest `|loop integral| / area` over the measured plaquettes off
    /// the axis column.
    pub max_curl: f64,
    /// The same on plaquettes touching the axis column. The radial stencil
    /// changes from one-sided to central there, so the form error, while
    /// `O(h^2)` on both sides, jumps and this is only `O(h)`; its loop
    /// integrals are still `O(h^3)`.
    pub axis_max_curl: f64,
    /// Centre of the plaquette attaining `max_curl`; `None` when every loop
    /// integral vanishes.
    pub max_at: Option<(f64, f64)>,
    /// Sum of `|loop integral|` over all plaquettes; bounds the difference
    /// between integrals along any two paths.
    pub total: f64,
    pub plaquettes: usize,
}

fn closedness(grid: &Grid, form: &Form, keep: &dyn Fn(AxisPoint) -> bool) -> Closedness {
    let mut max_curl: f64 = 0.0;
    let mut max_at = None;
    let mut axis_max_curl: f64 = 0.0;
    let mut total = 0.0;
    let mut n = 0;
    for j in 0..grid.nz().saturating_sub(1) {
        for i in 0..grid.nr().saturating_sub(1) {
            let c = [grid.id(i, j), grid.id(i + 1, j), grid.id(i + 1, j + 1), grid.id(i, j + 1)];
            if c.iter().any(|&x| form[x].is_none()) {
                continue;
            }
            let lp = increment(grid, form, c[0], c[1])
                + increment(grid, form, c[1], c[2])
                + increment(grid, form, c[2], c[3])
                + increment(grid, form, c[3], c[0]);
            total += lp.abs();
            if c.iter().all(|&x| keep(grid.centre(x))) {
                let area = (grid.rho_c[i + 1] - grid.rho_c[i]) * (grid.z_c[j + 1] - grid.z_c[j]);
                if i == 0 {
                    axis_max_curl = axis_max_curl.max(lp.abs() / area);
                } else if lp.abs() / area > max_curl {
                    max_curl = lp.abs() / area;
                    max_at = Some((0.5 * (grid.rho_c[i] + grid.rho_c[i + 1]), 0.5 * (grid.z_c[j] + grid.z_c[j + 1])));
                }
                n += 1;
            }
        }
    }
    Closedness { max_curl, axis_max_curl, max_at, total, plaquettes: n }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicalEntry {
    pub component: usize,
    pub bounded: bool,
    /// Axis value of `lambda + u + log rho`, averaged over the rows.
    pub b: f64,
    /// Spread `max - min` of the per-row values.
    pub spread: f64,
    pub rows: usize,
    pub regular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicalReport {
    /// Bounded components only.
    pub bounded: Vec<ConicalEntry>,
    /// The two end rays, where the defect must vanish.
    pub unbounded: Vec<ConicalEntry>,
    pub note: String,
}

pub const CONICAL_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SpacetimeFields {
    pub k: usize,
    pub omega: Vec<Option<[f64; 2]>>,
    pub w: Vec<f64>,
    pub lambda: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub closed_w: Closedness,
    pub closed_lambda: Closedness,
    pub closed_theta: Vec<Closedness>,
    /// `max |w_A - w_B|` etc. between the two path trees, on cells
    /// reached by both.
    pub path_difference_w: f64,
    pub path_difference_lambda: f64,
    pub path_difference_theta: Vec<f64>,
    pub w_base: usize,
    pub lambda_base: usize,
    pub theta_base: usize,
    pub warning: bool,
}

/// Row of the upper ray nearest to `b_N + L`, column 0.
pub fn top_axis_anchor(grid: &Grid, rods: &RodConfig) -> Result<usize> {
    let top = rods.endpoints().last().copied().expect("at least one gap");
    let target = top + rods.diameter();
    let top_comp = rods.num_components() - 1;
    (0..grid.nz())
        .filter(|&j| grid.row_site[j] == AxisSite::Component(top_comp) && grid.is_active(grid.id(0, j)))
        .min_by(|&a, &b| (grid.z_c[a] - target).abs().total_cmp(&(grid.z_c[b] - target).abs()))
        .map(|j| grid.id(0, j))
        .ok_or_else(|| Error::InvalidGrid("no active cell on the upper axis".into()))
}

/// Outermost active cell of the row nearest the equator.
pub fn outer_equator_cell(grid: &Grid) -> Result<usize> {
    let j = (0..grid.nz())
        .min_by(|&a, &b| grid.z_c[a].abs().total_cmp(&grid.z_c[b].abs()))
        .ok_or_else(|| Error::InvalidGrid("empty grid".into()))?;
    (0..grid.nr())
        .rev()
        .map(|i| grid.id(i, j))
        .find(|&id| grid.is_active(id))
        .ok_or_else(|| Error::InvalidGrid("no active cell on the equator".into()))
}

/// `lambda + u + log rho` at a cell.
fn defect_at(state: &FieldState, rods: &RodConfig, lambda: &[f64], id: usize) -> Result<f64> {
    let x = state.grid.centre(id);
    Ok(lambda[id] + state.fields[0][id] + u0_regular_part(rods, x)?)
}

/// Quadratic extrapolation in `rho^2` of the defect from columns 0..3.
fn axis_defect(state: &FieldState, rods: &RodConfig, lambda: &[f64], j: usize) -> Result<Option<f64>> {
    let grid = &state.grid;
    let ids = [grid.id(0, j), grid.id(1, j), grid.id(2, j)];
    if ids.iter().any(|&c| !lambda[c].is_finite()) {
        return Ok(None);
    }
    let s: Vec<f64> = (0..3).map(|i| grid.rho_c[i].powi(2)).collect();
    let mut b = 0.0;
    for a in 0..3 {
        let mut l = 1.0;
        for c in 0..3 {
            if c != a {
                l *= (0.0 - s[c]) / (s[a] - s[c]);
            }
        }
        b += l * defect_at(state, rods, lambda, ids[a])?;
    }
    Ok(Some(b))
}

pub fn reconstruct(
    state: &FieldState,
    rods: &RodConfig,
    spec: &SingularMapSpec,
    opts: &ReconstructOptions,
) -> Result<SpacetimeFields> {
    spec.check_against(rods)?;
    let grid = &state.grid;
    let data = cell_data(state, rods, spec)?;
    let PotentialForms { omega, w: wf, lambda: lf } = forms_from(&data, opts.convention);

    let margin = opts.endpoint_margin;
    let keep = |x: AxisPoint| crate::solver::away_from_endpoints(rods, x, margin);
    let prefer = |id: usize| keep(grid.centre(id));

    let w_base = top_axis_anchor(grid, rods)?;
    let w = integrate(grid, &wf, w_base, PathTree::ZFirst, &prefer);
    let w_b = integrate(grid, &wf, w_base, PathTree::RhoFirst, &prefer);

    let lambda_base = w_base;
    let mut lambda = integrate(grid, &lf, lambda_base, PathTree::ZFirst, &prefer);
    let mut lambda_b = integrate(grid, &lf, lambda_base, PathTree::RhoFirst, &prefer);
    let j_anchor = grid.ij(lambda_base).1;
    if let Some(b0) = axis_defect(state, rods, &lambda, j_anchor)? {
        lambda.iter_mut().for_each(|x| *x -= b0);
    }
    if let Some(b0) = axis_defect(state, rods, &lambda_b, j_anchor)? {
        lambda_b.iter_mut().for_each(|x| *x -= b0);
    }

    let theta_base = outer_equator_cell(grid)?;
    let mut theta = Vec::new();
    let mut closed_theta = Vec::new();
    let mut diff_theta = Vec::new();
    for i in 0..state.k {
        let (t, form) = integrate_theta(grid, &data, &w, i, theta_base, PathTree::ZFirst, &prefer);
        let (tb, _) = integrate_theta(grid, &data, &w, i, theta_base, PathTree::RhoFirst, &prefer);
        closed_theta.push(closedness(grid, &form, &keep));
        diff_theta.push(max_diff(&t, &tb));
        theta.push(t);
    }

    let closed_w = closedness(grid, &wf, &keep);
    let closed_lambda = closedness(grid, &lf, &keep);
    let warning = closed_w.max_curl > opts.warn_threshold
        || closed_lambda.max_curl > opts.warn_threshold
        || closed_theta.iter().any(|c| c.max_curl > opts.warn_threshold);
    if warning {
        log::warn!(
            "reconstruction forms are not closed: curl w {:.2e}, lambda {:.2e}",
            closed_w.max_curl,
            closed_lambda.max_curl
        );
    }
    Ok(SpacetimeFields {
        k: state.k,
        path_difference_w: max_diff(&w, &w_b),
        path_difference_lambda: max_diff(&lambda, &lambda_b),
        path_difference_theta: diff_theta,
        omega,
        w,
        lambda,
        theta,
        closed_w,
        closed_lambda,
        closed_theta,
        w_base,
        lambda_base,
        theta_base,
        warning,
    })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Axis defect per component from the rows at least `margin` from every
/// endpoint and inside half the ball radius.
pub fn conical_deficit(
    state: &FieldState,
    fields: &SpacetimeFields,
    rods: &RodConfig,
    margin: f64,
) -> Result<ConicalReport> {
    let grid = &state.grid;
    let mut bounded = Vec::new();
    let mut unbounded = Vec::new();
    for comp in 0..rods.num_components() {
        // short bounded rods would otherwise lose every row to the margin
        let (lo, hi) = rods.component_bounds(comp)?;
        let margin = if rods.is_bounded(comp) { margin.min(0.25 * (hi - lo)) } else { margin };
        let mut vals = Vec::new();
        for j in 0..grid.nz() {
            if grid.row_site[j] != AxisSite::Component(comp) {
                continue;
            }
            let x = AxisPoint::new(0.0, grid.z_c[j]);
            if !crate::solver::away_from_endpoints(rods, x, margin) || grid.z_c[j].abs() > 0.5 * grid.radius {
                continue;
            }
            if let Some(b) = axis_defect(state, rods, &fields.lambda, j)? {
                vals.push(b);
            }
        }
        if vals.is_empty() {
            continue;
        }
        let b = vals.iter().sum::<f64>() / vals.len() as f64;
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let entry = ConicalEntry {
            component: comp,
            bounded: rods.is_bounded(comp),
            b,
            spread: hi - lo,
            rows: vals.len(),
            regular: b.abs() < CONICAL_TOL,
        };
        if entry.bounded {
            bounded.push(entry);
        } else {
            unbounded.push(entry);
        }
    }
    let note = if bounded.is_empty() {
        "no bounded axis components".to_string()
    } else {
        "b != 0 on a bounded component is a conical singularity (strut) balancing the attraction between the neighbouring horizons".to_string()
    };
    Ok(ConicalReport { bounded, unbounded, note })
}

/// Metric and gauge potential at one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub rho: f64,
    pub z: f64,
    pub g_tt: f64,
    pub g_tphi: f64,
    pub g_phiphi: f64,
    /// `g_rhorho = g_zz`.
    pub g_rhorho: f64,
    pub a_t: Vec<f64>,
    pub a_phi: Vec<f64>,
    /// `g_tt g_phiphi - g_tphi^2`.
    pub det_tphi: f64,
    pub signature_ok: bool,
}

pub fn assemble_metric(
    state: &FieldState,
    fields: &SpacetimeFields,
    rods: &RodConfig,
    cells: &[usize],
) -> Result<Vec<MetricRecord>> {
    let grid = &state.grid;
    cells
        .iter()
        .map(|&id| {
            let x = grid.centre(id);
            let p = state.regular_point(id);
            let u = p.u + axis_potential_u0(rods, x)?;
            let w = fields.w[id];
            let em2 = (-2.0 * u).exp();
            let g_tt = -x.rho * x.rho * (2.0 * u).exp() + em2 * w * w;
            let g_tphi = -em2 * w;
            let g_phiphi = em2;
            let g_rhorho = (2.0 * fields.lambda[id]).exp();
            let det = g_tt * g_phiphi - g_tphi * g_tphi;
            Ok(MetricRecord {
                rho: x.rho,
                z: x.z,
                g_tt,
                g_tphi,
                g_phiphi,
                g_rhorho,
                a_t: fields.theta.iter().map(|t| -t[id]).collect(),
                a_phi: p.chi.iter().map(|c| -c).collect(),
                det_tphi: det,
                signature_ok: g_phiphi > 0.0 && g_rhorho > 0.0 && det < 0.0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::KerrNewman;
    use crate::solver::GridParams;

    struct Errors {
        w: f64,
        lambda: f64,
        theta: f64,
        curl_w: f64,
    }

    // The axis constants fix the orientation in which the reconstructed
    // spacetime is the time reverse of the closed form: w and theta flip.
    fn errors(o: &KerrNewman, level: u32, conv: TwistConvention) -> Errors {
        let rods = o.rods();
        let grid = Grid::build(&rods, 12.0, &GridParams::default_for(&rods).with_level(level)).unwrap();
        let st = FieldState::from_boundary(&grid, o).unwrap();
        let opts = ReconstructOptions { convention: conv, ..ReconstructOptions::default_for(&rods) };
        let f = reconstruct(&st, &rods, &o.spec(), &opts).unwrap();
        let (xb, xt) = (grid.centre(f.w_base), grid.centre(f.theta_base));
        let w0 = o.w(xb).unwrap();
        let chi = |x| o.point(x).unwrap().chi.first().copied().unwrap_or(0.0);
        let mut e = Errors { w: 0.0, lambda: 0.0, theta: 0.0, curl_w: f.closed_w.max_curl };
        for &id in &grid.active {
            let x = grid.centre(id);
            if !crate::solver::away_from_endpoints(&rods, x, 0.5) || x.rho.hypot(x.z) > 6.0 {
                continue;
            }
            let w = -(o.w(x).unwrap() - w0);
            e.w = e.w.max((f.w[id] - w).abs());
            e.lambda = e.lambda.max((f.lambda[id] - o.lambda(x).unwrap()).abs());
            if o.k == 1 {
                let th = -(o.theta(x).unwrap() - o.theta(xt).unwrap()) - w0 * (chi(x) - chi(xt));
                e.theta = e.theta.max((f.theta[0][id] - th).abs());
            }
        }
        e
    }

    #[test]
    fn schwarzschild_lambda_and_static() {
        let o = KerrNewman::schwarzschild(1.0).unwrap();
        let e0 = errors(&o, 1, TwistConvention::Minus);
        let e1 = errors(&o, 2, TwistConvention::Minus);
        assert_eq!(e0.w, 0.0);
        assert!(e1.lambda < e0.lambda / 3.0, "{} {}", e0.lambda, e1.lambda);
    }

    #[test]
    fn kerr_newman_potentials_converge() {
        let o = KerrNewman::new(1.0, 0.5, 0.4, 1).unwrap();
        let e0 = errors(&o, 0, TwistConvention::Minus);
        let e1 = errors(&o, 1, TwistConvention::Minus);
        for (a, b) in [(e0.w, e1.w), (e0.lambda, e1.lambda), (e0.theta, e1.theta)] {
            assert!(b < a / 3.0, "{a:.3e} -> {b:.3e}");
        }
    }

    #[test]
    fn opposite_twist_sign_is_not_closed() {
        let o = KerrNewman::new(1.0, 0.5, 0.4, 1).unwrap();
        let good = [0, 1].map(|l| errors(&o, l, TwistConvention::Minus).curl_w);
        let bad = [0, 1].map(|l| errors(&o, l, TwistConvention::Plus).curl_w);
        assert!(good[1] < good[0] && bad[1] > bad[0], "{good:?} {bad:?}");
        assert!(bad[0] > 10.0 * good[0]);
    }

    #[test]
    fn lorentzian_block_has_determinant_minus_rho_squared() {
        let o = KerrNewman::new(1.0, 0.6, 0.3, 1).unwrap();
        let rods = o.rods();
        let grid = Grid::build(&rods, 8.0, &GridParams::default_for(&rods)).unwrap();
        let st = FieldState::from_boundary(&grid, &o).unwrap();
        let f = reconstruct(&st, &rods, &o.spec(), &ReconstructOptions::default_for(&rods)).unwrap();
        let cells: Vec<usize> = grid.active.iter().copied().filter(|&c| f.w[c].is_finite()).step_by(37).collect();
        for m in assemble_metric(&st, &f, &rods, &cells).unwrap() {
            let scale = (m.g_tt * m.g_phiphi).abs() + m.g_tphi * m.g_tphi;
            assert!((m.det_tphi + m.rho * m.rho).abs() <= 1e-12 * scale, "{m:?}");
            assert!(m.signature_ok);
            assert_eq!(m.a_phi.len(), 1);
        }
    }
}
