//! Pointwise central-difference tension of a grid state.
//!
//! Independent of the finite-volume energy: three-point Lagrange formulas on
//! the (possibly non-uniform) cell centres, with `u = u_reg + u0` and the
//! exact gradient of `u0` substituted (`lap u0 = 0`). Radial derivatives
//! use `s = rho^2`, with `f_rho = 2 rho f_s` and `lap_rho f = 4 (f_s + s f_ss)`.

use crate::error::Result;
use crate::rod_structure::{axis_potential_u0, grad_u0, AxisSite, RodConfig, SingularMapSpec};
use crate::target_geometry::{energy_density, tension, tension_norm, MapJet, TargetPoint, TargetTangent};

use super::grid::Grid;
use super::state::FieldState;

/// First and second derivative at `x1` of the parabola through three points.
fn three_point(x: [f64; 3], f: [f64; 3], at: usize) -> (f64, f64) {
    let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
    let d2 = 2.0 * (f[0] / (h1 * (h1 + h2)) - f[1] / (h1 * h2) + f[2] / (h2 * (h1 + h2)));
    let d1 = match at {
        0 => -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2],
        _ => -h2 / (h1 * (h1 + h2)) * f[0] + (h2 - h1) / (h1 * h2) * f[1] + h1 / (h2 * (h1 + h2)) * f[2],
    };
    (d1, d2)
}

/// `(f_rho, f_z, lap f)` of every field at a cell, using neighbours at
/// distance `stride`.
///
/// Radial differences are taken in `s = rho^2`, in which fields that are
/// smooth and even in `rho` are smooth, so the relative error stays
/// `O(h^2)` up to the axis. Near the axis a gap row uses a one-sided
/// stencil; a Sigma row uses the axis constants in `clamp` (per component,
/// per field) at `s = 0` for every field but the first. `None` if the
/// stencil leaves the grid or a Sigma row has no clamp.
pub fn field_derivatives(
    grid: &Grid,
    fields: &[Vec<f64>],
    id: usize,
    stride: usize,
    clamp: Option<&[Vec<f64>]>,
) -> Option<Vec<[f64; 3]>> {
    let (i, j) = grid.ij(id);
    if j < stride || j + stride >= grid.nz() {
        return None;
    }
    let ok = |c: usize| grid.has_value(c);
    let zs = [grid.z_c[j - stride], grid.z_c[j], grid.z_c[j + stride]];
    let zn = [grid.id(i, j - stride), id, grid.id(i, j + stride)];
    if !zn.iter().all(|&c| ok(c)) {
        return None;
    }
    let rho = grid.rho_c[i];
    let s_of = |c: usize| grid.rho_c[c] * grid.rho_c[c];
    let near_axis = i < stride;
    let axis = match (near_axis, grid.row_site[j]) {
        (true, AxisSite::Component(c)) => Some(&clamp?[c]),
        _ => None,
    };
    let (central, one_sided) = if near_axis {
        let far = [i, i + stride, i + 2 * stride];
        if far[2] >= grid.nr() || !far.iter().all(|&c| ok(grid.id(c, j))) {
            return None;
        }
        (None, Some(far))
    } else {
        if i + stride >= grid.nr() {
            return None;
        }
        let c = [i - stride, i, i + stride];
        if !c.iter().all(|&c| ok(grid.id(c, j))) {
            return None;
        }
        (Some(c), None)
    };
    let mut out = Vec::with_capacity(fields.len());
    for (fi, f) in fields.iter().enumerate() {
        let (fz, fzz) = three_point(zs, [f[zn[0]], f[zn[1]], f[zn[2]]], 1);
        let (fs, fss) = match (central, one_sided, axis) {
            (Some(c), _, _) => {
                let pts = c.map(|c| grid.id(c, j));
                three_point(c.map(s_of), pts.map(|p| f[p]), 1)
            }
            (None, Some(_), Some(ax)) if fi > 0 => {
                let n = grid.id(i + stride, j);
                three_point([0.0, s_of(i), s_of(i + stride)], [ax[fi], f[id], f[n]], 1)
            }
            (None, Some(c), _) => {
                let pts = c.map(|c| grid.id(c, j));
                three_point(c.map(s_of), pts.map(|p| f[p]), 0)
            }
            _ => unreachable!("either a central or a one-sided stencil"),
        };
        out.push([2.0 * rho * fs, fz, 4.0 * (fs + rho * rho * fss) + fzz]);
    }
    Some(out)
}

/// Axis constants in field order, `u_reg` slot unused.
pub fn axis_clamp(spec: &SingularMapSpec) -> Vec<Vec<f64>> {
    spec.components
        .iter()
        .map(|c| {
            let mut x = vec![f64::NAN, c.v];
            x.extend_from_slice(&c.chi);
            x.extend_from_slice(&c.psi);
            x
        })
        .collect()
}

/// Map jet at a cell from field derivatives.
pub fn jet_at(grid: &Grid, rods: &RodConfig, state: &FieldState, id: usize, d: &[[f64; 3]]) -> Result<MapJet> {
    let k = state.k;
    let x = grid.centre(id);
    let mut point = state.regular_point(id);
    point.u += axis_potential_u0(rods, x)?;
    let (gr, gz) = grad_u0(rods, x)?;
    let col = |c: usize| -> Vec<f64> { d.iter().map(|v| v[c]).collect() };
    let (dr, dz, lap) = (col(0), col(1), col(2));
    let mut tr = TargetTangent::from_coords(k, &dr);
    let mut tz = TargetTangent::from_coords(k, &dz);
    tr.du += gr;
    tz.du += gz;
    Ok(MapJet { point, grad: [tr, tz], lap: TargetTangent::from_coords(k, &lap) })
}

/// Quantities entering the subharmonicity inequality at one cell:
/// `lap(u - u0)` and `Q = |dphi|^2 - |du|^2`.
fn step3_terms(jet: &MapJet) -> Result<(f64, f64)> {
    let e = energy_density(jet)?;
    let du2 = jet.grad[0].du.powi(2) + jet.grad[1].du.powi(2);
    Ok((jet.lap.du, e - du2))
}

/// Pointwise tension on every cell where the stencil exists.
#[derive(Debug, Clone)]
pub struct PointwiseTension {
    pub cells: Vec<usize>,
    pub tension: Vec<TargetTangent>,
    pub norm: Vec<f64>,
    pub points: Vec<TargetPoint>,
    /// `lap(u - u0)`, the same with the doubled stride (NaN if unavailable).
    pub lap_ureg: Vec<(f64, f64)>,
    /// `Q`, the same with the doubled stride.
    pub q: Vec<(f64, f64)>,
}

impl PointwiseTension {
    pub fn max_norm(&self) -> f64 {
        self.norm.iter().copied().fold(0.0, f64::max)
    }

    /// Sup norm over the cells passing `keep`.
    pub fn max_norm_where(&self, grid: &Grid, keep: impl Fn(crate::rod_structure::AxisPoint) -> bool) -> f64 {
        self.cells
            .iter()
            .zip(&self.norm)
            .filter(|(&c, _)| keep(grid.centre(c)))
            .map(|(_, &n)| n)
            .fold(0.0, f64::max)
    }
}

/// Central-difference tension of `state` on its active cells.
pub fn discrete_euler_lagrange(state: &FieldState, rods: &RodConfig, spec: &SingularMapSpec) -> Result<PointwiseTension> {
    spec.check_against(rods)?;
    let grid = &state.grid;
    let clamp = axis_clamp(spec);
    let mut out = PointwiseTension {
        cells: vec![],
        tension: vec![],
        norm: vec![],
        points: vec![],
        lap_ureg: vec![],
        q: vec![],
    };
    for &id in &grid.active {
        let Some(d) = field_derivatives(grid, &state.fields, id, 1, Some(&clamp)) else { continue };
        let jet = jet_at(grid, rods, state, id, &d)?;
        let tau = tension(&jet)?;
        let (lap, q) = step3_terms(&jet)?;
        let (lap2, q2) = match field_derivatives(grid, &state.fields, id, 2, Some(&clamp)) {
            Some(d2) => step3_terms(&jet_at(grid, rods, state, id, &d2)?)?,
            None => (f64::NAN, f64::NAN),
        };
        out.norm.push(tension_norm(&jet.point, &tau)?);
        out.cells.push(id);
        out.tension.push(tau);
        out.points.push(jet.point);
        out.lap_ureg.push((lap, lap2));
        out.q.push((q, q2));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_exact_on_parabolas() {
        let x = [0.1, 0.35, 0.4];
        let f = |t: f64| 2.0 - 3.0 * t + 1.5 * t * t;
        let (d1, d2) = three_point(x, [f(x[0]), f(x[1]), f(x[2])], 1);
        assert!((d1 - (-3.0 + 3.0 * x[1])).abs() < 1e-12);
        assert!((d2 - 3.0).abs() < 1e-12);
        let (d1, _) = three_point(x, [f(x[0]), f(x[1]), f(x[2])], 0);
        assert!((d1 - (-3.0 + 3.0 * x[0])).abs() < 1e-12);
    }
}
