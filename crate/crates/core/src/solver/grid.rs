//! Cell-centred tensor grid on the half-disk `{rho >= 0, rho^2 + z^2 < R^2}`.
//!
//! The core box `[0, C] x [-C, C]` is uniform between consecutive gap
//! endpoints, which always sit on z-faces. Outside the core the spacing
//! follows the smooth stretching `g(t) = exp(kappa (sqrt(t^2 + t0^2) - t0))`
//! in level-0 cell units, so consecutive spacings differ by `1 + O(h)` and
//! three-point differences keep second order. Refinement bisects level-0
//! cells, and a larger `R` only appends cells, so grids for different levels
//! and radii are nested.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::rod_structure::{AxisPoint, AxisSite, RodConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    /// Level-0 spacing in the core.
    pub h: f64,
    /// Half-size of the uniform core box.
    pub core: f64,
    /// Asymptotic ratio of consecutive level-0 spacings outside the core.
    pub growth: f64,
    /// Refinement level; each level halves every spacing.
    #[serde(default)]
    pub level: u32,
}

impl GridParams {
    /// Eight level-0 cells across the shortest gap or rod, core twice the
    /// configuration extent, growth 1.08.
    pub fn default_for(rods: &RodConfig) -> Self {
        Self { h: rods.min_feature() / 8.0, core: 2.0 * rods.extent(), growth: 1.08, level: 1 }
    }

    pub fn with_level(mut self, level: u32) -> Self {
        self.level = level;
        self
    }

    fn validate(&self, rods: &RodConfig) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidGrid(format!("h must be positive, got {}", self.h)));
        }
        if !(self.growth >= 1.0 && self.growth < 2.0) {
            return Err(Error::InvalidGrid(format!("growth must lie in [1, 2), got {}", self.growth)));
        }
        if !(self.core > rods.extent()) {
            return Err(Error::InvalidGrid(format!(
                "core half-size {} must exceed the largest endpoint magnitude {}",
                self.core,
                rods.extent()
            )));
        }
        if self.level > 8 {
            return Err(Error::InvalidGrid(format!("refinement level {} is too deep", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    /// Unknown of the discrete problem.
    Active,
    /// Outside the ball but touching it: holds boundary data.
    Dirichlet,
    /// Masked corner cell.
    Outside,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub radius: f64,
    pub params: GridParams,
    pub rho_faces: Vec<f64>,
    pub z_faces: Vec<f64>,
    pub rho_c: Vec<f64>,
    pub z_c: Vec<f64>,
    pub kind: Vec<CellKind>,
    /// Ids of the active cells, in row-major order.
    pub active: Vec<usize>,
    /// Position of each cell in `active`, `usize::MAX` if not active.
    pub active_index: Vec<usize>,
    /// Axis classification of every z-row.
    pub row_site: Vec<AxisSite>,
}

/// Level-0 stretching density outside the core.
fn stretch(t: f64, kappa: f64) -> f64 {
    const T0: f64 = 4.0;
    (kappa * ((t * t + T0 * T0).sqrt() - T0)).exp()
}

/// Faces `start + h_edge * int_0^xi g` at `xi = 0, 1/2^l, ...` up to the
/// first level-0 face whose predecessor is at least `limit`.
fn outer_faces(start: f64, h_edge: f64, growth: f64, level: u32, limit: f64) -> Vec<f64> {
    let kappa = growth.ln();
    let sub = 1usize << level;
    let mut faces = Vec::new();
    let mut z = start;
    let mut n = 0usize;
    loop {
        let level0_start = z;
        for s in 0..sub {
            let a = n as f64 + s as f64 / sub as f64;
            let b = n as f64 + (s + 1) as f64 / sub as f64;
            z += h_edge * gauss_legendre(a, b, |t| stretch(t, kappa));
            faces.push(z);
        }
        n += 1;
        if level0_start >= limit {
            break;
        }
    }
    faces
}

fn uniform(a: f64, b: f64, cells: usize) -> impl Iterator<Item = f64> {
    (1..=cells).map(move |i| if i == cells { b } else { a + (b - a) * i as f64 / cells as f64 })
}

impl Grid {
    pub fn build(rods: &RodConfig, radius: f64, params: &GridParams) -> Result<Self> {
        params.validate(rods)?;
        let c = params.core;
        if !(radius > c * std::f64::consts::SQRT_2) {
            return Err(Error::InvalidGrid(format!("radius {radius} must exceed the core diagonal {}", c * 2f64.sqrt())));
        }
        let sub = 1usize << params.level;

        // z: uniform segments between breakpoints in [-C, C]
        let mut breaks = vec![-c];
        breaks.extend(rods.endpoints());
        breaks.push(c);
        let mut core_z = vec![-c];
        let mut edge_lo = 0.0;
        let mut edge_hi = 0.0;
        for w in breaks.windows(2) {
            let n0 = ((w[1] - w[0]) / params.h - 1e-9).ceil().max(1.0) as usize;
            let n = n0 * sub;
            core_z.extend(uniform(w[0], w[1], n));
            let hs = (w[1] - w[0]) / n0 as f64;
            if w[0] == -c {
                edge_lo = hs;
            }
            if w[1] == c {
                edge_hi = hs;
            }
        }
        let up = outer_faces(c, edge_hi, params.growth, params.level, radius);
        let down = outer_faces(c, edge_lo, params.growth, params.level, radius);
        let mut z_faces: Vec<f64> = down.iter().rev().map(|z| -z).collect();
        z_faces.extend(core_z);
        z_faces.extend(up);

        let n0 = (c / params.h - 1e-9).ceil().max(1.0) as usize;
        let hr = c / n0 as f64;
        let mut rho_faces = vec![0.0];
        rho_faces.extend(uniform(0.0, c, n0 * sub));
        rho_faces.extend(outer_faces(c, hr, params.growth, params.level, radius));

        let mid = |f: &[f64]| f.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect::<Vec<_>>();
        let rho_c = mid(&rho_faces);
        let z_c = mid(&z_faces);
        let (nr, nz) = (rho_c.len(), z_c.len());

        let inside = |i: usize, j: usize| rho_c[i].hypot(z_c[j]) < radius;
        let mut kind = vec![CellKind::Outside; nr * nz];
        for j in 0..nz {
            for i in 0..nr {
                if inside(i, j) {
                    kind[j * nr + i] = CellKind::Active;
                }
            }
        }
        for j in 0..nz {
            for i in 0..nr {
                if kind[j * nr + i] == CellKind::Active {
                    continue;
                }
                let touches = (i > 0 && inside(i - 1, j))
                    || (i + 1 < nr && inside(i + 1, j))
                    || (j > 0 && inside(i, j - 1))
                    || (j + 1 < nz && inside(i, j + 1));
                if touches {
                    kind[j * nr + i] = CellKind::Dirichlet;
                }
            }
        }
        let active: Vec<usize> = (0..nr * nz).filter(|&id| kind[id] == CellKind::Active).collect();
        let mut active_index = vec![usize::MAX; nr * nz];
        for (a, &id) in active.iter().enumerate() {
            active_index[id] = a;
        }
        let row_site = z_c.iter().map(|&z| rods.site(z)).collect();

        let grid = Self { radius, params: params.clone(), rho_faces, z_faces, rho_c, z_c, kind, active, active_index, row_site };
        grid.check_resolution(rods)?;
        Ok(grid)
    }

    fn check_resolution(&self, rods: &RodConfig) -> Result<()> {
        for (g, &(a, b)) in rods.gaps().iter().enumerate() {
            let cells = self.row_site.iter().filter(|s| **s == AxisSite::Gap(g)).count();
            if cells < 8 {
                return Err(Error::InvalidGrid(format!("gap {} is resolved by {cells} cells, need at least 8", g + 1)));
            }
            for e in [a, b] {
                let on_face = self.z_faces.iter().any(|f| (f - e).abs() <= 1e-12 * (1.0 + e.abs()));
                if !on_face {
                    return Err(Error::InvalidGrid(format!("endpoint {e} is not on a grid line")));
                }
            }
        }
        Ok(())
    }

    pub fn nr(&self) -> usize {
        self.rho_c.len()
    }

    pub fn nz(&self) -> usize {
        self.z_c.len()
    }

    pub fn num_cells(&self) -> usize {
        self.nr() * self.nz()
    }

    pub fn id(&self, i: usize, j: usize) -> usize {
        j * self.nr() + i
    }

    pub fn ij(&self, id: usize) -> (usize, usize) {
        (id % self.nr(), id / self.nr())
    }

    pub fn centre(&self, id: usize) -> AxisPoint {
        let (i, j) = self.ij(id);
        AxisPoint::new(self.rho_c[i], self.z_c[j])
    }

    pub fn dz(&self, j: usize) -> f64 {
        self.z_faces[j + 1] - self.z_faces[j]
    }

    pub fn drho(&self, i: usize) -> f64 {
        self.rho_faces[i + 1] - self.rho_faces[i]
    }

    /// `int rho drho dz` over the cell.
    pub fn volume(&self, id: usize) -> f64 {
        let (i, j) = self.ij(id);
        let (a, b) = (self.rho_faces[i], self.rho_faces[i + 1]);
        0.5 * (b * b - a * a) * self.dz(j)
    }

    /// Local mesh size `max(drho, dz)`.
    pub fn spacing(&self, id: usize) -> f64 {
        let (i, j) = self.ij(id);
        self.drho(i).max(self.dz(j))
    }

    pub fn is_active(&self, id: usize) -> bool {
        self.kind[id] == CellKind::Active
    }

    /// Active or Dirichlet.
    pub fn has_value(&self, id: usize) -> bool {
        self.kind[id] != CellKind::Outside
    }

    /// Cell with the same centre in `other`, if any.
    pub fn locate_in(&self, id: usize, other: &Grid) -> Option<usize> {
        let (i, j) = self.ij(id);
        let oi = find_close(&other.rho_c, self.rho_c[i])?;
        let oj = find_close(&other.z_c, self.z_c[j])?;
        Some(other.id(oi, oj))
    }
}

fn find_close(xs: &[f64], x: f64) -> Option<usize> {
    let pos = xs.partition_point(|&y| y < x);
    let tol = 1e-9 * (1.0 + x.abs());
    [pos.checked_sub(1), Some(pos)]
        .into_iter()
        .flatten()
        .find(|&p| p < xs.len() && (xs[p] - x).abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rods() -> RodConfig {
        RodConfig::new(vec![(-1.0, 1.0)]).unwrap()
    }

    #[test]
    fn endpoints_on_faces_and_mask() {
        let r = rods();
        let g = Grid::build(&r, 20.0, &GridParams::default_for(&r)).unwrap();
        assert!(g.z_faces.contains(&-1.0) && g.z_faces.contains(&1.0));
        for id in 0..g.num_cells() {
            let c = g.centre(id);
            assert_eq!(g.is_active(id), c.r() < 20.0);
        }
        // every active cell has non-masked neighbours
        for &id in &g.active {
            let (i, j) = g.ij(id);
            assert!(g.has_value(g.id(i + 1, j)) && g.has_value(g.id(i, j + 1)) && g.has_value(g.id(i, j - 1)));
        }
    }

    #[test]
    fn nested_under_refinement_and_radius() {
        let r = rods();
        let p = GridParams::default_for(&r);
        let g0 = Grid::build(&r, 20.0, &p.clone().with_level(0)).unwrap();
        let g1 = Grid::build(&r, 20.0, &p.clone().with_level(1)).unwrap();
        for f in &g0.z_faces {
            assert!(g1.z_faces.iter().any(|x| (x - f).abs() < 1e-12));
        }
        let big = Grid::build(&r, 40.0, &p).unwrap();
        let small = Grid::build(&r, 20.0, &p).unwrap();
        for &id in &small.active {
            assert!(small.locate_in(id, &big).is_some());
        }
    }

    #[test]
    fn smooth_spacing_outside_core() {
        let r = rods();
        let g = Grid::build(&r, 200.0, &GridParams::default_for(&r).with_level(2)).unwrap();
        let d: Vec<f64> = g.rho_faces.windows(2).map(|w| w[1] - w[0]).collect();
        let worst = d.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 0.03, "{worst}");
    }

    #[test]
    fn rejects_underresolved_gap() {
        let r = rods();
        let mut p = GridParams::default_for(&r).with_level(0);
        p.h = 0.5;
        assert!(Grid::build(&r, 20.0, &p).is_err());
    }
}
