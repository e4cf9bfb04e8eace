//! Finite-volume renormalised energy.
//!
//! Every face between two cells (or between a cell on an axis component and
//! the axis itself) carries
//!
//! ```text
//! e = K du^2 + A e^{4U} S^2 + B e^{2U} (|dchi|^2 + |dpsi|^2)
//! S = v_R - v_L + chi_L.psi_R - chi_R.psi_L
//! ```
//!
//! where `du` is the jump of `u - u0`, `U` the face average of `u - u0`, and
//! `K, A, B` are conductances of the weights `rho`, `rho e^{4 u0}`,
//! `rho e^{2 u0}`. `K` on radial faces is exact for profiles linear in
//! `rho^2`. `A, B` are harmonic means of the weights across each face,
//! except on radial faces of rows over a gap, which use the face value. `S` is the midpoint value of the twist
//! form and is exactly invariant under the Heisenberg translations.
//! The energy is `2 pi` times the sum over faces.

use crate::error::Result;
use crate::rod_structure::{u0_regular_part, AxisPoint, AxisSite, RodConfig, SingularMapSpec};

use super::grid::Grid;
use super::state::FieldState;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaceLeft {
    Cell(usize),
    /// The axis component with this index, holding its constants.
    Axis(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub left: FaceLeft,
    pub right: usize,
    pub k_u: f64,
    pub a4: f64,
    pub b2: f64,
    pub wl: f64,
    pub wr: f64,
}

/// Faces, conductances and axis constants of one grid.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub k: usize,
    pub faces: Vec<Face>,
    /// `(0, v_j, chi_j, psi_j)` per axis component.
    pub axis_values: Vec<Vec<f64>>,
    /// Faces touching each cell.
    pub cell_faces: Vec<Vec<usize>>,
}

/// `G = -(u0 + log rho)`, finite off the gaps.
fn g_pot(rods: &RodConfig, rho: f64, z: f64) -> f64 {
    -u0_regular_part(rods, AxisPoint::new(rho, z)).expect("conductance sample off the singular set")
}

/// Two-panel 8-point Gauss rule.
fn integrate(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let m = 0.5 * (a + b);
    crate::quadrature::gauss_legendre(a, m, &f) + crate::quadrature::gauss_legendre(m, b, &f)
}

impl Discretization {
    pub fn new(grid: &Grid, rods: &RodConfig, spec: &SingularMapSpec) -> Result<Self> {
        spec.check_against(rods)?;
        let k = spec.k;
        let (nr, nz) = (grid.nr(), grid.nz());
        let mut faces = Vec::new();
        let wanted = |a: usize, b: usize| {
            grid.has_value(a) && grid.has_value(b) && (grid.is_active(a) || grid.is_active(b))
        };
        for j in 0..nz {
            for i in 0..nr {
                let id = grid.id(i, j);
                let (rc, zc) = (grid.rho_c[i], grid.z_c[j]);
                if i + 1 < nr && wanted(id, grid.id(i + 1, j)) {
                    let (r0, r1) = (rc, grid.rho_c[i + 1]);
                    let f = grid.rho_faces[i + 1];
                    let dz = grid.dz(j);
                    // exact flux for profiles linear in rho^2
                    let k_u = 2.0 * f * f * dz / (r1 * r1 - r0 * r0);
                    let (a4, b2) = match grid.row_site[j] {
                        AxisSite::Gap(_) => {
                            let u0 = -g_pot(rods, f, zc) - f.ln();
                            (k_u * (4.0 * u0).exp(), k_u * (2.0 * u0).exp())
                        }
                        AxisSite::Component(_) => {
                            // harmonic mean: exact for the rho^4 (twist) and
                            // rho^2 (chi, psi) approach to the axis constants
                            let ia = integrate(r0, r1, |r| r.powi(3) * (4.0 * g_pot(rods, r, zc)).exp());
                            let ib = integrate(r0, r1, |r| r * (2.0 * g_pot(rods, r, zc)).exp());
                            (dz / ia, dz / ib)
                        }
                    };
                    faces.push(Face {
                        left: FaceLeft::Cell(id),
                        right: grid.id(i + 1, j),
                        k_u,
                        a4,
                        b2,
                        wl: 0.5,
                        wr: 0.5,
                    });
                }
                if j + 1 < nz && wanted(id, grid.id(i, j + 1)) {
                    let (f0, f1) = (grid.rho_faces[i], grid.rho_faces[i + 1]);
                    let w = 0.5 * (f1 * f1 - f0 * f0);
                    let (z0, z1) = (zc, grid.z_c[j + 1]);
                    let ia = integrate(z0, z1, |z| rc.powi(4) * (4.0 * g_pot(rods, rc, z)).exp());
                    let ib = integrate(z0, z1, |z| rc * rc * (2.0 * g_pot(rods, rc, z)).exp());
                    faces.push(Face {
                        left: FaceLeft::Cell(id),
                        right: grid.id(i, j + 1),
                        k_u: w / (z1 - z0),
                        a4: w / ia,
                        b2: w / ib,
                        wl: 0.5,
                        wr: 0.5,
                    });
                }
                if i == 0 && grid.is_active(id) {
                    if let AxisSite::Component(c) = grid.row_site[j] {
                        let dz = grid.dz(j);
                        let ia = integrate(0.0, rc, |r| r.powi(3) * (4.0 * g_pot(rods, r, zc)).exp());
                        let ib = integrate(0.0, rc, |r| r * (2.0 * g_pot(rods, r, zc)).exp());
                        faces.push(Face {
                            left: FaceLeft::Axis(c),
                            right: id,
                            k_u: 0.0,
                            a4: dz / ia,
                            b2: dz / ib,
                            wl: 0.0,
                            wr: 1.0,
                        });
                    }
                }
            }
        }
        let axis_values = spec
            .components
            .iter()
            .map(|c| {
                let mut x = vec![0.0, c.v];
                x.extend_from_slice(&c.chi);
                x.extend_from_slice(&c.psi);
                x
            })
            .collect();
        let mut cell_faces = vec![Vec::new(); grid.num_cells()];
        for (n, f) in faces.iter().enumerate() {
            if let FaceLeft::Cell(l) = f.left {
                cell_faces[l].push(n);
            }
            cell_faces[f.right].push(n);
        }
        Ok(Self { k, faces, axis_values, cell_faces })
    }

    pub fn m(&self) -> usize {
        2 * self.k + 2
    }

    /// Values on both sides of a face.
    pub fn gather(&self, face: &Face, fields: &[Vec<f64>], xl: &mut [f64], xr: &mut [f64]) {
        match face.left {
            FaceLeft::Cell(l) => {
                for (f, field) in fields.iter().enumerate() {
                    xl[f] = field[l];
                }
            }
            FaceLeft::Axis(c) => xl.copy_from_slice(&self.axis_values[c]),
        }
        for (f, field) in fields.iter().enumerate() {
            xr[f] = field[face.right];
        }
    }

    /// Total energy `2 pi sum_f e_f`.
    pub fn energy(&self, fields: &[Vec<f64>]) -> f64 {
        let m = self.m();
        let (mut xl, mut xr) = (vec![0.0; m], vec![0.0; m]);
        let mut total = 0.0;
        for face in &self.faces {
            self.gather(face, fields, &mut xl, &mut xr);
            total += face_energy(face, self.k, &xl, &xr);
        }
        TWO_PI * total
    }

    /// Energy of the faces touching one cell.
    pub fn local_energy(&self, cell: usize, fields: &[Vec<f64>]) -> f64 {
        let m = self.m();
        let (mut xl, mut xr) = (vec![0.0; m], vec![0.0; m]);
        let mut total = 0.0;
        for &n in &self.cell_faces[cell] {
            let face = &self.faces[n];
            self.gather(face, fields, &mut xl, &mut xr);
            total += face_energy(face, self.k, &xl, &xr);
        }
        TWO_PI * total
    }
}

/// Twist jump `S` and squared `(chi, psi)` jump `T` across a face.
fn twist_and_jump(k: usize, xl: &[f64], xr: &[f64]) -> (f64, f64) {
    let mut s = xr[1] - xl[1];
    let mut t = 0.0;
    for i in 0..k {
        let (cl, cr) = (xl[2 + i], xr[2 + i]);
        let (pl, pr) = (xl[2 + k + i], xr[2 + k + i]);
        s += cl * pr - cr * pl;
        t += (cr - cl) * (cr - cl) + (pr - pl) * (pr - pl);
    }
    (s, t)
}

pub fn face_energy(face: &Face, k: usize, xl: &[f64], xr: &[f64]) -> f64 {
    let du = xr[0] - xl[0];
    let uu = face.wl * xl[0] + face.wr * xr[0];
    let (s, t) = twist_and_jump(k, xl, xr);
    face.k_u * du * du + face.a4 * (4.0 * uu).exp() * s * s + face.b2 * (2.0 * uu).exp() * t
}

/// Energy, gradient and Hessian of one face in the local ordering
/// `[left fields, right fields]`.
pub fn face_local(face: &Face, k: usize, xl: &[f64], xr: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
    let m = 2 * k + 2;
    let n = 2 * m;
    grad.iter_mut().for_each(|x| *x = 0.0);
    hess.iter_mut().for_each(|x| *x = 0.0);

    let du = xr[0] - xl[0];
    let uu = face.wl * xl[0] + face.wr * xr[0];
    let e4 = face.a4 * (4.0 * uu).exp();
    let e2 = face.b2 * (2.0 * uu).exp();
    let (s, t) = twist_and_jump(k, xl, xr);

    // first derivatives of S and T; second derivatives are constant
    let mut ds = vec![0.0; n];
    let mut dt = vec![0.0; n];
    ds[1] = -1.0;
    ds[m + 1] = 1.0;
    for i in 0..k {
        let (lc, lp, rc, rp) = (2 + i, 2 + k + i, m + 2 + i, m + 2 + k + i);
        ds[lc] = xr[2 + k + i];
        ds[rp] = xl[2 + i];
        ds[rc] = -xl[2 + k + i];
        ds[lp] = -xr[2 + i];
        let dc = xr[2 + i] - xl[2 + i];
        let dp = xr[2 + k + i] - xl[2 + k + i];
        dt[rc] = 2.0 * dc;
        dt[lc] = -2.0 * dc;
        dt[rp] = 2.0 * dp;
        dt[lp] = -2.0 * dp;
    }

    let uidx = [0, m];
    let sigma = [-1.0, 1.0];
    let w = [face.wl, face.wr];
    let energy = face.k_u * du * du + e4 * s * s + e2 * t;

    for a in 0..2 {
        grad[uidx[a]] = 2.0 * face.k_u * du * sigma[a] + w[a] * (4.0 * e4 * s * s + 2.0 * e2 * t);
        for b in 0..2 {
            hess[uidx[a] * n + uidx[b]] =
                2.0 * face.k_u * sigma[a] * sigma[b] + w[a] * w[b] * (16.0 * e4 * s * s + 4.0 * e2 * t);
        }
    }
    for y in 0..n {
        if y == 0 || y == m {
            continue;
        }
        grad[y] += 2.0 * e4 * s * ds[y] + e2 * dt[y];
        for a in 0..2 {
            let h = w[a] * (8.0 * e4 * s * ds[y] + 2.0 * e2 * dt[y]);
            hess[uidx[a] * n + y] = h;
            hess[y * n + uidx[a]] = h;
        }
        for y2 in 0..n {
            if y2 == 0 || y2 == m {
                continue;
            }
            hess[y * n + y2] = 2.0 * e4 * ds[y] * ds[y2];
        }
    }
    for i in 0..k {
        let (lc, lp, rc, rp) = (2 + i, 2 + k + i, m + 2 + i, m + 2 + k + i);
        // S'' terms
        for (p, q, v) in [(lc, rp, 1.0), (rc, lp, -1.0)] {
            hess[p * n + q] += 2.0 * e4 * s * v;
            hess[q * n + p] += 2.0 * e4 * s * v;
        }
        // T'' terms
        for (l, r) in [(lc, rc), (lp, rp)] {
            hess[l * n + l] += 2.0 * e2;
            hess[r * n + r] += 2.0 * e2;
            hess[l * n + r] -= 2.0 * e2;
            hess[r * n + l] -= 2.0 * e2;
        }
    }
    energy
}

/// Global unknown index of `(cell, field)`, if it is an unknown.
pub fn unknown(grid: &Grid, m: usize, cell: usize, field: usize) -> Option<usize> {
    let a = grid.active_index[cell];
    (a != usize::MAX).then(|| a * m + field)
}

/// Gather the unknown vector from a state.
pub fn pack(state: &FieldState) -> Vec<f64> {
    let m = state.m();
    let mut x = vec![0.0; state.grid.active.len() * m];
    for (a, &id) in state.grid.active.iter().enumerate() {
        for f in 0..m {
            x[a * m + f] = state.fields[f][id];
        }
    }
    x
}

pub fn unpack(x: &[f64], state: &mut FieldState) {
    let m = state.m();
    for (a, &id) in state.grid.active.iter().enumerate() {
        for f in 0..m {
            state.fields[f][id] = x[a * m + f];
        }
    }
}

/// Energy gradient with respect to the unknowns.
pub fn gradient(disc: &Discretization, state: &FieldState) -> Vec<f64> {
    let m = disc.m();
    let n = 2 * m;
    let grid = &state.grid;
    let mut g = vec![0.0; grid.active.len() * m];
    let (mut xl, mut xr) = (vec![0.0; m], vec![0.0; m]);
    let mut lg = vec![0.0; n];
    let mut lh = vec![0.0; n * n];
    for face in &disc.faces {
        disc.gather(face, &state.fields, &mut xl, &mut xr);
        face_local(face, disc.k, &xl, &xr, &mut lg, &mut lh);
        scatter_grad(grid, m, face, &lg, &mut g);
    }
    g.iter_mut().for_each(|x| *x *= TWO_PI);
    g
}

fn local_unknowns(grid: &Grid, m: usize, face: &Face) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(2 * m);
    for f in 0..m {
        out.push(match face.left {
            FaceLeft::Cell(l) => unknown(grid, m, l, f),
            FaceLeft::Axis(_) => None,
        });
    }
    for f in 0..m {
        out.push(unknown(grid, m, face.right, f));
    }
    out
}

fn scatter_grad(grid: &Grid, m: usize, face: &Face, lg: &[f64], g: &mut [f64]) {
    for (p, u) in local_unknowns(grid, m, face).into_iter().enumerate() {
        if let Some(u) = u {
            g[u] += lg[p];
        }
    }
}

/// Sparse Hessian in a fixed entry order: `pattern` is computed once per
/// grid, `values` refilled at every Newton step.
pub struct HessianPattern {
    /// Lower-triangle `(row, col)` of every entry, duplicates allowed.
    pub entries: Vec<(usize, usize)>,
    /// Per face: `(local p, local q, entry index)`.
    face_slots: Vec<Vec<(usize, usize, usize)>>,
}

impl HessianPattern {
    pub fn new(disc: &Discretization, grid: &Grid) -> Self {
        let m = disc.m();
        let mut entries = Vec::new();
        let mut face_slots = Vec::with_capacity(disc.faces.len());
        for face in &disc.faces {
            let loc = local_unknowns(grid, m, face);
            let mut slots = Vec::new();
            for (p, up) in loc.iter().enumerate() {
                for (q, uq) in loc.iter().enumerate() {
                    if let (Some(a), Some(b)) = (up, uq) {
                        if a >= b {
                            slots.push((p, q, entries.len()));
                            entries.push((*a, *b));
                        }
                    }
                }
            }
            face_slots.push(slots);
        }
        Self { entries, face_slots }
    }

    /// Gradient, Hessian values (in `entries` order) and energy.
    pub fn assemble(&self, disc: &Discretization, state: &FieldState) -> (Vec<f64>, Vec<f64>, f64) {
        let m = disc.m();
        let n = 2 * m;
        let grid = &state.grid;
        let mut g = vec![0.0; grid.active.len() * m];
        let mut vals = vec![0.0; self.entries.len()];
        let (mut xl, mut xr) = (vec![0.0; m], vec![0.0; m]);
        let mut lg = vec![0.0; n];
        let mut lh = vec![0.0; n * n];
        let mut energy = 0.0;
        for (face, slots) in disc.faces.iter().zip(&self.face_slots) {
            disc.gather(face, &state.fields, &mut xl, &mut xr);
            energy += face_local(face, disc.k, &xl, &xr, &mut lg, &mut lh);
            scatter_grad(grid, m, face, &lg, &mut g);
            for &(p, q, e) in slots {
                vals[e] = TWO_PI * lh[p * n + q];
            }
        }
        g.iter_mut().for_each(|x| *x *= TWO_PI);
        (g, vals, TWO_PI * energy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_derivatives_match_differences() {
        let k = 2;
        let m = 2 * k + 2;
        let face = Face { left: FaceLeft::Cell(0), right: 1, k_u: 0.7, a4: 1.3, b2: 0.4, wl: 0.5, wr: 0.5 };
        let xl = vec![0.1, 0.3, 0.2, -0.5, 0.7, 0.1];
        let xr = vec![-0.2, 0.5, 0.4, 0.3, -0.1, 0.6];
        let n = 2 * m;
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        face_local(&face, k, &xl, &xr, &mut g, &mut h);
        let e = |x: &[f64]| face_energy(&face, k, &x[..m], &x[m..]);
        let mut x: Vec<f64> = xl.iter().chain(&xr).copied().collect();
        let eps = 1e-6;
        for p in 0..n {
            let x0 = x[p];
            x[p] = x0 + eps;
            let ep = e(&x);
            let mut gp = vec![0.0; n];
            let mut hp = vec![0.0; n * n];
            face_local(&face, k, &x[..m].to_vec(), &x[m..].to_vec(), &mut gp, &mut hp);
            x[p] = x0 - eps;
            let em = e(&x);
            let mut gm = vec![0.0; n];
            face_local(&face, k, &x[..m].to_vec(), &x[m..].to_vec(), &mut gm, &mut hp);
            x[p] = x0;
            assert!((g[p] - (ep - em) / (2.0 * eps)).abs() < 1e-7, "grad {p}");
            for q in 0..n {
                let fd = (gp[q] - gm[q]) / (2.0 * eps);
                assert!((h[q * n + p] - fd).abs() < 1e-6, "hess {q} {p}: {} vs {fd}", h[q * n + p]);
            }
        }
    }

    #[test]
    fn twist_jump_gauge_invariant() {
        use crate::target_geometry::{GaugeIsometry, TargetPoint};
        let k = 1;
        let iso = GaugeIsometry { shift_v: 0.4, shift_chi: vec![0.3], shift_psi: vec![-1.1] };
        let pl = TargetPoint::new(0.0, 0.2, vec![0.5], vec![0.1]);
        let pr = TargetPoint::new(0.0, -0.3, vec![0.2], vec![0.9]);
        let (s0, t0) = twist_and_jump(k, &pl.coords(), &pr.coords());
        let (s1, t1) = twist_and_jump(k, &iso.apply(&pl).coords(), &iso.apply(&pr).coords());
        assert!((s0 - s1).abs() < 1e-15 && (t0 - t1).abs() < 1e-15);
    }
}
