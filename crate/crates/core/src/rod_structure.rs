//! Rod structure of the singular set and its regularised line-charge
//! potential `u0`.
//!
//! The axis `rho = 0` is split into `N` open gaps `(a_j, b_j)` (horizon rods)
//! and `N + 1` closed axis components, numbered from the bottom: component 0
//! is `z <= a_1`, component `N` is `z >= b_N`.
//!
//! `u0` is the potential of a line charge of density 1/2 on the axis minus
//! the gaps, regularised so that `u0 + log rho -> 0` at infinity:
//! `u0 = -log rho - sum_j g(a_j, b_j)` with `g` the potential of one gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::target_geometry::TargetPoint;

/// A point of the meridional half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisPoint {
    pub rho: f64,
    pub z: f64,
}

impl AxisPoint {
    pub fn new(rho: f64, z: f64) -> Self {
        Self { rho, z }
    }

    pub fn polar(r: f64, theta: f64) -> Self {
        Self { rho: r * theta.sin().abs(), z: r * theta.cos() }
    }

    pub fn r(&self) -> f64 {
        self.rho.hypot(self.z)
    }
}

/// What the axis looks like at a given height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisSite {
    /// Inside axis component `j`.
    Component(usize),
    /// Inside the open gap `j`.
    Gap(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RodConfig {
    gaps: Vec<(f64, f64)>,
}

impl RodConfig {
    pub fn new(gaps: Vec<(f64, f64)>) -> Result<Self> {
        if gaps.is_empty() {
            return Err(Error::InvalidRods("at least one gap is required".into()));
        }
        for (i, &(a, b)) in gaps.iter().enumerate() {
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::InvalidRods(format!("gap {} has non-finite endpoints", i + 1)));
            }
            if a >= b {
                return Err(Error::InvalidRods(format!("gap {} must satisfy a < b, got ({a}, {b})", i + 1)));
            }
            if i > 0 && gaps[i - 1].1 >= a {
                return Err(Error::InvalidRods(format!(
                    "gaps {} and {} overlap or are out of order: intervals must be disjoint and sorted",
                    i,
                    i + 1
                )));
            }
        }
        Ok(Self { gaps })
    }

    pub fn gaps(&self) -> &[(f64, f64)] {
        &self.gaps
    }

    /// Number of gaps `N`.
    pub fn n(&self) -> usize {
        self.gaps.len()
    }

    pub fn num_components(&self) -> usize {
        self.gaps.len() + 1
    }

    /// `(lo, hi)` bounds of axis component `j`, infinite for the end rays.
    pub fn component_bounds(&self, j: usize) -> Result<(f64, f64)> {
        let n = self.n();
        if j > n {
            return Err(Error::BadComponent { index: j, count: n + 1 });
        }
        let lo = if j == 0 { f64::NEG_INFINITY } else { self.gaps[j - 1].1 };
        let hi = if j == n { f64::INFINITY } else { self.gaps[j].0 };
        Ok((lo, hi))
    }

    pub fn is_bounded(&self, j: usize) -> bool {
        j > 0 && j < self.n()
    }

    /// All gap endpoints in increasing order.
    pub fn endpoints(&self) -> Vec<f64> {
        self.gaps.iter().flat_map(|&(a, b)| [a, b]).collect()
    }

    /// Largest endpoint magnitude.
    pub fn extent(&self) -> f64 {
        self.endpoints().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Diameter of the configuration, `b_N - a_1`.
    pub fn diameter(&self) -> f64 {
        self.gaps[self.n() - 1].1 - self.gaps[0].0
    }

    /// Shortest gap or bounded-rod length.
    pub fn min_feature(&self) -> f64 {
        let mut m = f64::INFINITY;
        for (i, &(a, b)) in self.gaps.iter().enumerate() {
            m = m.min(b - a);
            if i > 0 {
                m = m.min(a - self.gaps[i - 1].1);
            }
        }
        m
    }

    /// Classify an axis height. Endpoints belong to the axis components.
    pub fn site(&self, z: f64) -> AxisSite {
        for (j, &(a, b)) in self.gaps.iter().enumerate() {
            if z <= a {
                return AxisSite::Component(j);
            }
            if z < b {
                return AxisSite::Gap(j);
            }
        }
        AxisSite::Component(self.n())
    }

    pub fn on_sigma(&self, x: AxisPoint) -> bool {
        x.rho == 0.0 && matches!(self.site(x.z), AxisSite::Component(_))
    }
}

/// Prescribed constants `(v_j, chi_j, psi_j)` of one axis component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentConstants {
    pub v: f64,
    pub chi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl ComponentConstants {
    pub fn new(v: f64, psi: Vec<f64>) -> Self {
        let k = psi.len();
        Self { v, chi: vec![0.0; k], psi }
    }

    pub fn point(&self, u: f64) -> TargetPoint {
        TargetPoint::new(u, self.v, self.chi.clone(), self.psi.clone())
    }
}

/// Constants of the singular maps `phi_j = (u0, v_j, chi_j, psi_j)`, one
/// entry per axis component, bottom first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularMapSpec {
    pub k: usize,
    pub components: Vec<ComponentConstants>,
    /// Allow nonzero `chi_j`. Off by default: the reduced problem fixes them to zero.
    #[serde(default)]
    pub allow_chi: bool,
}

impl SingularMapSpec {
    pub fn new(k: usize, components: Vec<ComponentConstants>) -> Result<Self> {
        let spec = Self { k, components, allow_chi: false };
        spec.check()?;
        Ok(spec)
    }

    /// All constants zero: the static (Weyl) data.
    pub fn zeros(k: usize, n_components: usize) -> Self {
        Self { k, components: vec![ComponentConstants::new(0.0, vec![0.0; k]); n_components], allow_chi: false }
    }

    pub fn with_chi(mut self) -> Self {
        self.allow_chi = true;
        self
    }

    pub fn check(&self) -> Result<()> {
        for c in &self.components {
            if c.psi.len() != self.k {
                return Err(Error::DimensionMismatch { expected: self.k, found: c.psi.len() });
            }
            if c.chi.len() != self.k {
                return Err(Error::DimensionMismatch { expected: self.k, found: c.chi.len() });
            }
            if !self.allow_chi && c.chi.iter().any(|x| *x != 0.0) {
                return Err(Error::InvalidParameter("nonzero chi_j requires allow_chi".into()));
            }
            if !c.v.is_finite() || c.psi.iter().chain(&c.chi).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("component constants"));
            }
        }
        Ok(())
    }

    pub fn check_against(&self, rods: &RodConfig) -> Result<()> {
        self.check()?;
        if self.components.len() != rods.num_components() {
            return Err(Error::InvalidParameter(format!(
                "{} gaps need {} component constants, got {}",
                rods.n(),
                rods.num_components(),
                self.components.len()
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<TargetPoint> {
        self.components.iter().map(|c| c.point(0.0)).collect()
    }

    pub fn from_points(k: usize, pts: &[TargetPoint], allow_chi: bool) -> Self {
        let components = pts
            .iter()
            .map(|p| ComponentConstants { v: p.v, chi: p.chi.clone(), psi: p.psi.clone() })
            .collect();
        Self { k, components, allow_chi }
    }
}

/// `D_c = z - c + r_c`, computed without cancellation for `z < c`.
fn d_term(c: f64, rho: f64, z: f64) -> f64 {
    let dz = z - c;
    let r = rho.hypot(dz);
    if dz >= 0.0 {
        dz + r
    } else {
        rho * rho / (r - dz)
    }
}

/// Potential of the axis segment `[a, b]` with line density 1/2:
/// `(1/2) log((z - a + r_a) / (z - b + r_b))`.
pub fn gap_potential(a: f64, b: f64, x: AxisPoint) -> Result<f64> {
    if !(a < b) {
        return Err(Error::InvalidRods(format!("gap needs a < b, got ({a}, {b})")));
    }
    let (a, b, z) = if x.z < 0.5 * (a + b) { (-b, -a, -x.z) } else { (a, b, x.z) };
    let rho = x.rho;
    if rho == 0.0 && z <= b {
        return Err(Error::OnSingularSet { rho, z: x.z });
    }
    // z >= midpoint, so D_a > D_b and both differences below are non-negative.
    let ra = rho.hypot(z - a);
    let rb = rho.hypot(z - b);
    let db = d_term(b, rho, z);
    let diff = (b - a) * (1.0 + (2.0 * z - a - b) / (ra + rb));
    Ok(0.5 * (diff / db).ln_1p())
}

/// Sum of gap potentials, `-(u0 + log rho)`.
fn total_gap_potential(rods: &RodConfig, x: AxisPoint) -> Result<f64> {
    let mut g = 0.0;
    for &(a, b) in rods.gaps() {
        g += gap_potential(a, b, x)?;
    }
    Ok(g)
}

/// The regular part `u0 + log rho`, finite on the axis components and
/// off the axis. Diverges to `-inf` on the gaps.
pub fn u0_regular_part(rods: &RodConfig, x: AxisPoint) -> Result<f64> {
    Ok(-total_gap_potential(rods, x)?)
}

/// Limit of `u0` on an open gap:
/// `-(1/2) log(4 (z - a_j)(b_j - z)) - sum_{i != j} g(a_i, b_i)`.
pub fn u0_gap_limit(rods: &RodConfig, z: f64) -> Result<f64> {
    let j = match rods.site(z) {
        AxisSite::Gap(j) => j,
        AxisSite::Component(_) => return Err(Error::OnSingularSet { rho: 0.0, z }),
    };
    let (a, b) = rods.gaps()[j];
    let mut u = -0.5 * (4.0 * (z - a) * (b - z)).ln();
    for (i, &(ai, bi)) in rods.gaps().iter().enumerate() {
        if i != j {
            u -= gap_potential(ai, bi, AxisPoint::new(0.0, z))?;
        }
    }
    Ok(u)
}

/// `u0(rho, z)`, including its finite limit on the open gaps.
pub fn axis_potential_u0(rods: &RodConfig, x: AxisPoint) -> Result<f64> {
    if x.rho < 0.0 || !x.rho.is_finite() || !x.z.is_finite() {
        return Err(Error::InvalidParameter(format!("bad axis point ({}, {})", x.rho, x.z)));
    }
    if x.rho == 0.0 {
        return match rods.site(x.z) {
            AxisSite::Gap(_) => u0_gap_limit(rods, x.z),
            AxisSite::Component(_) => Err(Error::OnSingularSet { rho: x.rho, z: x.z }),
        };
    }
    Ok(-x.rho.ln() - total_gap_potential(rods, x)?)
}

/// `(d_rho g, d_z g)` of one gap potential, for `rho > 0`.
fn gap_gradient(a: f64, b: f64, rho: f64, z: f64) -> (f64, f64) {
    let dln = |c: f64| {
        // d_rho log D_c = rho / (r_c D_c)
        let dz = z - c;
        let r = rho.hypot(dz);
        if dz >= 0.0 {
            rho / (r * (dz + r))
        } else {
            (r - dz) / (rho * r)
        }
    };
    let ra = rho.hypot(z - a);
    let rb = rho.hypot(z - b);
    (0.5 * (dln(a) - dln(b)), 0.5 * (1.0 / ra - 1.0 / rb))
}

/// Gradient of the regular part `u0 + log rho`, for `rho > 0`.
pub fn grad_u0_regular(rods: &RodConfig, x: AxisPoint) -> Result<(f64, f64)> {
    if !(x.rho > 0.0) {
        return Err(Error::OnSingularSet { rho: x.rho, z: x.z });
    }
    let (mut gr, mut gz) = (0.0, 0.0);
    for &(a, b) in rods.gaps() {
        let (dr, dz) = gap_gradient(a, b, x.rho, x.z);
        gr -= dr;
        gz -= dz;
    }
    Ok((gr, gz))
}

/// Exact `(d_rho u0, d_z u0)`. On the open gaps at `rho = 0` the radial
/// derivative vanishes by symmetry.
pub fn grad_u0(rods: &RodConfig, x: AxisPoint) -> Result<(f64, f64)> {
    if x.rho == 0.0 {
        if rods.on_sigma(x) {
            return Err(Error::OnSingularSet { rho: x.rho, z: x.z });
        }
        let h = 1e-6 * (1.0 + x.z.abs());
        let (lo, hi) = (u0_gap_limit(rods, x.z - h)?, u0_gap_limit(rods, x.z + h)?);
        return Ok((0.0, (hi - lo) / (2.0 * h)));
    }
    let (gr, gz) = grad_u0_regular(rods, x)?;
    Ok((gr - 1.0 / x.rho, gz))
}

/// The Sigma-singular map `phi_j = (u0, v_j, chi_j, psi_j)`.
pub fn singular_map(rods: &RodConfig, spec: &SingularMapSpec, j: usize, x: AxisPoint) -> Result<TargetPoint> {
    let c = spec
        .components
        .get(j)
        .ok_or(Error::BadComponent { index: j, count: spec.components.len() })?;
    if j >= rods.num_components() {
        return Err(Error::BadComponent { index: j, count: rods.num_components() });
    }
    Ok(c.point(axis_potential_u0(rods, x)?))
}

/// Euclidean distance from `x` to the singular set.
pub fn dist_to_sigma(rods: &RodConfig, x: AxisPoint) -> f64 {
    let mut best = f64::INFINITY;
    for j in 0..rods.num_components() {
        let (lo, hi) = rods.component_bounds(j).expect("index in range");
        let dz = if x.z < lo {
            lo - x.z
        } else if x.z > hi {
            x.z - hi
        } else {
            0.0
        };
        best = best.min(x.rho.hypot(dz));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive;

    fn oracle_gap(a: f64, b: f64, rho: f64, z: f64) -> f64 {
        let f = |s: f64| 0.5 / (rho * rho + (z - s) * (z - s)).sqrt();
        if z > a && z < b {
            adaptive(a, z, 1e-14, f) + adaptive(z, b, 1e-14, f)
        } else {
            adaptive(a, b, 1e-14, f)
        }
    }

    #[test]
    fn gap_potential_matches_quadrature() {
        let g = gap_potential(-1.0, 1.0, AxisPoint::new(1.0, 0.0)).unwrap();
        assert!((g - oracle_gap(-1.0, 1.0, 1.0, 0.0)).abs() < 1e-10);
        for &(rho, z) in &[(0.3, 2.5), (0.01, -3.0), (4.0, -0.2), (1e-3, 0.5), (2.0, 40.0)] {
            let g = gap_potential(-1.0, 1.5, AxisPoint::new(rho, z)).unwrap();
            let o = oracle_gap(-1.0, 1.5, rho, z);
            assert!((g - o).abs() < 1e-10 * o.max(1.0), "{rho} {z}: {g} vs {o}");
        }
    }

    #[test]
    fn gap_potential_symmetric() {
        let p = gap_potential(-2.0, 2.0, AxisPoint::new(0.7, 1.3)).unwrap();
        let q = gap_potential(-2.0, 2.0, AxisPoint::new(0.7, -1.3)).unwrap();
        assert!((p - q).abs() < 1e-15);
    }

    #[test]
    fn gap_potential_rejects_segment() {
        assert!(matches!(gap_potential(-1.0, 1.0, AxisPoint::new(0.0, 0.2)), Err(Error::OnSingularSet { .. })));
        assert!(gap_potential(-1.0, 1.0, AxisPoint::new(0.0, 3.0)).is_ok());
        assert!(gap_potential(-1.0, 1.0, AxisPoint::new(0.0, -3.0)).is_ok());
    }

    #[test]
    fn normalisation_far_away() {
        let rods = RodConfig::new(vec![(-1.0, 1.0)]).unwrap();
        let x = AxisPoint::new(1.0, 1e6);
        let u = axis_potential_u0(&rods, x).unwrap();
        assert!(u.abs() < 1e-5);
    }

    #[test]
    fn gap_limit_single() {
        let rods = RodConfig::new(vec![(-1.0, 1.0)]).unwrap();
        let u = axis_potential_u0(&rods, AxisPoint::new(0.0, 0.0)).unwrap();
        assert!((u + 0.5 * 4f64.ln()).abs() < 1e-15);
        let near = axis_potential_u0(&rods, AxisPoint::new(1e-5, 0.0)).unwrap();
        assert!((near - u).abs() < 1e-8);
    }

    #[test]
    fn sigma_is_rejected() {
        let rods = RodConfig::new(vec![(-1.0, 1.0)]).unwrap();
        assert!(axis_potential_u0(&rods, AxisPoint::new(0.0, 2.0)).is_err());
        let reg = u0_regular_part(&rods, AxisPoint::new(0.0, 2.0)).unwrap();
        let near = u0_regular_part(&rods, AxisPoint::new(1e-6, 2.0)).unwrap();
        assert!((reg - near).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_differences() {
        let rods = RodConfig::new(vec![(-2.0, -0.5), (0.5, 1.0)]).unwrap();
        for &(rho, z) in &[(0.4, 0.0), (1.2, -1.1), (0.05, 3.0), (2.0, 0.7)] {
            let (gr, gz) = grad_u0(&rods, AxisPoint::new(rho, z)).unwrap();
            let h = 1e-5;
            let f = |r: f64, z: f64| axis_potential_u0(&rods, AxisPoint::new(r, z)).unwrap();
            let fr = (f(rho + h, z) - f(rho - h, z)) / (2.0 * h);
            let fz = (f(rho, z + h) - f(rho, z - h)) / (2.0 * h);
            assert!((gr - fr).abs() < 1e-6 * (1.0 + fr.abs()) && (gz - fz).abs() < 1e-6 * (1.0 + fz.abs()));
        }
    }

    #[test]
    fn symmetric_gradient_vanishes() {
        let rods = RodConfig::new(vec![(-1.0, 1.0)]).unwrap();
        let (_, gz) = grad_u0(&rods, AxisPoint::new(0.8, 0.0)).unwrap();
        assert!(gz.abs() < 1e-15);
    }

    #[test]
    fn bad_rods() {
        assert!(RodConfig::new(vec![]).is_err());
        assert!(RodConfig::new(vec![(1.0, 0.0)]).is_err());
        let e = RodConfig::new(vec![(0.0, 2.0), (1.0, 3.0)]).unwrap_err();
        assert!(e.to_string().contains("overlap"));
    }

    #[test]
    fn distance_cases() {
        let rods = RodConfig::new(vec![(-1.0, 1.0), (2.0, 4.0)]).unwrap();
        assert_eq!(dist_to_sigma(&rods, AxisPoint::new(2.0, 9.0)), 2.0);
        assert_eq!(dist_to_sigma(&rods, AxisPoint::new(0.0, 1.5)), 0.0);
        assert!((dist_to_sigma(&rods, AxisPoint::new(1.0, 0.0)) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(dist_to_sigma(&rods, AxisPoint::new(0.0, 3.5)), 0.5);
    }

    #[test]
    fn components_and_sites() {
        let rods = RodConfig::new(vec![(-1.0, 1.0), (2.0, 4.0)]).unwrap();
        assert_eq!(rods.site(-5.0), AxisSite::Component(0));
        assert_eq!(rods.site(0.0), AxisSite::Gap(0));
        assert_eq!(rods.site(1.5), AxisSite::Component(1));
        assert_eq!(rods.site(5.0), AxisSite::Component(2));
        assert!(rods.is_bounded(1) && !rods.is_bounded(0) && !rods.is_bounded(2));
        assert_eq!(rods.component_bounds(1).unwrap(), (1.0, 2.0));
        assert!(rods.component_bounds(3).is_err());
    }
}
