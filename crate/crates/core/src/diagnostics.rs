//! Distance bounds between a solution and its seed.
//!
//! With `n = 3` the comparison function is the radial solution of
//! `lap nu = (1 + r^2)^{-3/2}` vanishing at infinity,
//!
//! ```text
//! nu(r) = -int_r^inf t^{-2} (asinh t - t / sqrt(1 + t^2)) dt
//! ```
//!
//! and a map whose seed has `||tau|| <= c (1 + r^2)^{-3/2}` satisfies
//! `sigma + c nu <= c nu(R)` on `B_R`, hence `sigma <= c / (n - 2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_to_infinity;
use crate::rod_structure::{axis_potential_u0, AxisPoint, RodConfig, SingularMapSpec};
use crate::seed_map::{fit_line, SeedMap};
use crate::solver::pointwise::{discrete_euler_lagrange, field_derivatives};
use crate::solver::{BoundaryData, FieldState, Grid};
use crate::target_geometry::distance;

/// Dimension of the domain.
pub const N_DIM: f64 = 3.0;

/// Allowed fraction of failing cells in the pointwise inequality checks.
pub const VIOLATION_FRACTION: f64 = 0.01;

pub fn comparison_nu(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!("comparison function needs r >= 0, got {r}")));
    }
    let integrand = |t: f64| {
        if t < 1e-3 {
            // asinh t - t / sqrt(1 + t^2) = t^3/3 - 3 t^5/10 + ...
            t / 3.0 - 0.3 * t * t * t
        } else {
            (t.asinh() - t / (1.0 + t * t).sqrt()) / (t * t)
        }
    };
    Ok(-adaptive_to_infinity(r, 1e-13, integrand))
}

/// `sigma = sqrt(1 + dist^2) - 1` and `dist` on every cell holding a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceField {
    pub cells: Vec<usize>,
    pub sigma: Vec<f64>,
    pub rho_dist: Vec<f64>,
}

impl DistanceField {
    pub fn sigma_max(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }

    /// Full-grid array with zeros on masked cells.
    pub fn sigma_grid(&self, grid: &Grid) -> Vec<f64> {
        let mut out = vec![0.0; grid.num_cells()];
        for (&c, &s) in self.cells.iter().zip(&self.sigma) {
            out[c] = s;
        }
        out
    }
}

fn map_value(state: &FieldState, rods: &RodConfig, id: usize) -> Result<crate::target_geometry::TargetPoint> {
    let mut p = state.regular_point(id);
    p.u += axis_potential_u0(rods, state.grid.centre(id))?;
    Ok(p)
}

pub fn distance_field(state: &FieldState, rods: &RodConfig, seed: &dyn BoundaryData) -> Result<DistanceField> {
    let grid = &state.grid;
    let mut out = DistanceField { cells: vec![], sigma: vec![], rho_dist: vec![] };
    for id in 0..grid.num_cells() {
        if !grid.has_value(id) {
            continue;
        }
        let x = grid.centre(id);
        let p = map_value(state, rods, id)?;
        let mut q = seed.regular_value(x)?;
        q.u += axis_potential_u0(rods, x)?;
        let d = distance(&p, &q);
        out.cells.push(id);
        out.rho_dist.push(d);
        out.sigma.push((1.0 + d * d).sqrt() - 1.0);
    }
    Ok(out)
}

/// `sup ||tau(seed)|| (1 + r^2)^{3/2}` over the active cells of a grid.
pub fn seed_constant_on_grid(seed: &SeedMap, grid: &Grid) -> Result<f64> {
    let mut c: f64 = 0.0;
    for &id in &grid.active {
        let x = grid.centre(id);
        let r2 = x.rho * x.rho + x.z * x.z;
        c = c.max(seed.tension_norm_at(x)? * (1.0 + r2).powf(1.5));
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub radius: f64,
    pub sigma_max: f64,
    pub c_measured: f64,
    /// `c / (n - 2)`.
    pub bound: f64,
    pub nu_at_radius: f64,
    /// Fraction of cells with `sigma + c nu(r) > c nu(R) + tol`.
    pub maxprinc_violation: f64,
    pub pass_bound: bool,
    pub pass_maxprinc: bool,
}

pub fn check_max_principle(field: &DistanceField, grid: &Grid, c_measured: f64, tol: f64) -> Result<BoundReport> {
    let radius = grid.radius;
    let nu_r = comparison_nu(radius)?;
    let mut fails = 0usize;
    for (&id, &s) in field.cells.iter().zip(&field.sigma) {
        let r = grid.centre(id).r();
        if r > radius {
            continue;
        }
        if s + c_measured * comparison_nu(r)? > c_measured * nu_r + tol {
            fails += 1;
        }
    }
    let frac = fails as f64 / field.cells.len().max(1) as f64;
    let bound = c_measured / (N_DIM - 2.0);
    let sigma_max = field.sigma_max();
    Ok(BoundReport {
        radius,
        sigma_max,
        c_measured,
        bound,
        nu_at_radius: nu_r,
        maxprinc_violation: frac,
        pass_bound: sigma_max <= bound + tol,
        pass_maxprinc: frac < VIOLATION_FRACTION,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubharmonicReport {
    pub cells: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    /// Smallest `lap sqrt(1 + dist^2) + ||tau_A|| + ||tau_B||`.
    pub min_margin: f64,
    pub pass: bool,
}

/// `lap sqrt(1 + dist^2) >= -(||tau_A|| + ||tau_B||)` on the cells where
/// both tensions and the doubled-stride Laplacian are available. The slack
/// is twice the Richardson error estimate, never below `10 tol`.
pub fn check_dist_subharmonic(
    a: &FieldState,
    b: &FieldState,
    rods: &RodConfig,
    spec: &SingularMapSpec,
    tol: f64,
) -> Result<SubharmonicReport> {
    if a.grid != b.grid || a.k != b.k {
        return Err(Error::InvalidParameter("states must share grid and target".into()));
    }
    let grid = &a.grid;
    let mut f = vec![0.0; grid.num_cells()];
    for id in 0..grid.num_cells() {
        if grid.has_value(id) {
            let d = distance(&map_value(a, rods, id)?, &map_value(b, rods, id)?);
            f[id] = (1.0 + d * d).sqrt();
        }
    }
    let ta = discrete_euler_lagrange(a, rods, spec)?;
    let tb = discrete_euler_lagrange(b, rods, spec)?;
    let mut nb = vec![f64::NAN; grid.num_cells()];
    for (&c, &n) in tb.cells.iter().zip(&tb.norm) {
        nb[c] = n;
    }
    let fields = [f];
    let (mut n, mut bad) = (0usize, 0usize);
    let mut min_margin = f64::INFINITY;
    for (&id, &na) in ta.cells.iter().zip(&ta.norm) {
        let nbv = nb[id];
        let (Some(d1), Some(d2)) = (field_derivatives(grid, &fields, id, 1, None), field_derivatives(grid, &fields, id, 2, None)) else {
            continue;
        };
        if nbv.is_nan() {
            continue;
        }
        n += 1;
        let lap = d1[0][2];
        let slack = (2.0 * (lap - d2[0][2]).abs() / 3.0).max(10.0 * tol);
        let margin = lap + na + nbv;
        min_margin = min_margin.min(margin);
        if margin < -slack {
            bad += 1;
        }
    }
    let frac = bad as f64 / n.max(1) as f64;
    Ok(SubharmonicReport { cells: n, violations: bad, violation_fraction: frac, min_margin, pass: frac < VIOLATION_FRACTION })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityVerdict {
    pub radii: Vec<f64>,
    pub sigma_max: Vec<f64>,
    pub bound: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub bounded: bool,
    pub no_growth: bool,
}

/// `sigma_max(R)` stays under one bound and shows no upward trend: the
/// least-squares slope against `R` is at most two standard errors, up to a
/// relative noise floor.
pub fn uniformity_across_r(reports: &[BoundReport]) -> Result<UniformityVerdict> {
    if reports.len() < 3 {
        return Err(Error::InvalidParameter(format!("uniformity needs at least 3 radii, got {}", reports.len())));
    }
    let radii: Vec<f64> = reports.iter().map(|r| r.radius).collect();
    let sig: Vec<f64> = reports.iter().map(|r| r.sigma_max).collect();
    let bound = reports.iter().map(|r| r.bound).fold(f64::INFINITY, f64::min);
    let (slope, icept) = fit_line(&radii, &sig);
    let n = radii.len() as f64;
    let mx = radii.iter().sum::<f64>() / n;
    let sxx: f64 = radii.iter().map(|x| (x - mx).powi(2)).sum();
    let sse: f64 = radii.iter().zip(&sig).map(|(x, y)| (y - icept - slope * x).powi(2)).sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    let span = radii[radii.len() - 1] - radii[0];
    let scale = sig.iter().copied().fold(0.0, f64::max);
    let floor = 1e-6 * scale / span.max(f64::MIN_POSITIVE);
    Ok(UniformityVerdict {
        bounded: sig.iter().all(|&s| s <= bound),
        no_growth: slope <= 2.0 * stderr + floor,
        radii,
        sigma_max: sig,
        bound,
        slope,
        slope_stderr: stderr,
    })
}

/// Cell containing a point, if it holds a value.
pub fn cell_at(grid: &Grid, x: AxisPoint) -> Option<usize> {
    let i = grid.rho_faces.partition_point(|&f| f <= x.rho).checked_sub(1)?;
    let j = grid.z_faces.partition_point(|&f| f <= x.z).checked_sub(1)?;
    if i >= grid.nr() || j >= grid.nz() {
        return None;
    }
    let id = grid.id(i, j);
    grid.has_value(id).then_some(id)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    pub theta: f64,
    pub r: f64,
    pub sigma: f64,
    /// `-c nu(r)`.
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub samples: Vec<RaySample>,
    pub envelope_fraction: f64,
    /// Slope of `log max_theta sigma` against `log r` on `[R/4, 3R/4]`.
    #[serde(with = "crate::nonfinite")]
    pub tail_slope: f64,
    pub pass_envelope: bool,
    pub pass_tail: bool,
}

/// Sample `sigma` on rays through the cells of the largest ball and check
/// `sigma(r) <= -c nu(r)` and a tail exponent at most `-1 + 0.2`.
pub fn decay_at_infinity(
    field: &DistanceField,
    grid: &Grid,
    c_measured: f64,
    angles: &[f64],
    per_ray: usize,
    tol: f64,
) -> Result<DecayReport> {
    let sig = field.sigma_grid(grid);
    let radius = grid.radius;
    let mut samples = Vec::new();
    let mut peaks = vec![0.0_f64; per_ray];
    let rs: Vec<f64> = (0..per_ray)
        .map(|i| 0.25 * radius * 3f64.powf(i as f64 / (per_ray - 1).max(1) as f64))
        .collect();
    for &theta in angles {
        for (n, &r) in rs.iter().enumerate() {
            let Some(id) = cell_at(grid, AxisPoint::polar(r, theta)) else { continue };
            let s = sig[id];
            let env = -c_measured * comparison_nu(r)?;
            peaks[n] = peaks[n].max(s);
            samples.push(RaySample { theta, r, sigma: s, envelope: env });
        }
    }
    let ok = samples.iter().filter(|s| s.sigma <= s.envelope + tol).count();
    let frac = ok as f64 / samples.len().max(1) as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rs
        .iter()
        .zip(&peaks)
        .filter(|(_, &p)| p > tol)
        .map(|(&r, &p)| (r.ln(), p.ln()))
        .unzip();
    let tail_slope = if xs.len() >= 2 { fit_line(&xs, &ys).0 } else { f64::NEG_INFINITY };
    Ok(DecayReport {
        samples,
        envelope_fraction: frac,
        tail_slope,
        pass_envelope: frac >= 1.0 - VIOLATION_FRACTION,
        pass_tail: tail_slope <= -1.0 + 0.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nu_matches_closed_form() {
        // lap(-asinh(r)/r) = (1 + r^2)^{-3/2}, vanishing at infinity
        for &r in &[0.0, 1e-4, 0.3, 1.0, 2.5, 10.0, 100.0, 1e4] {
            let exact = if r == 0.0 { -1.0 } else { -f64::asinh(r) / r };
            let got = comparison_nu(r).unwrap();
            assert!((got - exact).abs() < 1e-10, "r = {r}: {got} vs {exact}");
        }
    }

    #[test]
    fn nu_value_at_origin() {
        assert!((comparison_nu(0.0).unwrap() + 1.0).abs() < 1e-8);
    }

    #[test]
    fn nu_monotone_and_negative() {
        let a = comparison_nu(1.0).unwrap();
        let b = comparison_nu(2.0).unwrap();
        assert!(a < b && b < 0.0);
        assert!(comparison_nu(-1.0).is_err());
    }

    #[test]
    fn nu_radial_residual_is_second_order() {
        // three-point radial Laplacian of sampled nu
        let lap_err = |h: f64| {
            let mut worst: f64 = 0.0;
            let mut r = 0.5;
            while r < 4.0 {
                let (a, b, c) = (comparison_nu(r - h).unwrap(), comparison_nu(r).unwrap(), comparison_nu(r + h).unwrap());
                let lap = (c - 2.0 * b + a) / (h * h) + (c - a) / (h * r);
                worst = worst.max((lap - (1.0 + r * r).powf(-1.5)).abs());
                r += 0.25;
            }
            worst
        };
        let order = (lap_err(0.04) / lap_err(0.02)).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order}");
    }
}
