//! Closed-form harmonic maps of the Kerr-Newman family in Weyl coordinates,
//! used as boundary data and as exact references.
//!
//! With `R_pm = sqrt(rho^2 + (z pm sigma)^2)`, `sigma^2 = M^2 - a^2 - Q^2`:
//!
//! ```text
//! r = M + (R_+ + R_-)/2,  c = cos(theta) = 2z / (R_+ + R_-)
//! Sigma = r^2 + a^2 c^2,  Delta = r^2 - 2Mr + a^2 + Q^2
//! g_phiphi = s^2 ((r^2 + a^2)^2 - a^2 Delta s^2) / Sigma,   u = -log(g_phiphi)/2
//! v   = -a M c (3 - c^2) - a^3 M c s^4 / Sigma + a Q^2 r c s^2 / Sigma
//! chi = -Q a r s^2 / Sigma,   psi = -Q c (r^2 + a^2) / Sigma
//! w   = a (r^2 + a^2 - Delta) / ((r^2 + a^2)^2 - a^2 Delta s^2)
//! e^{2 lambda} = Sigma / (R_+ R_-),   theta = Q r / Sigma
//! ```
//!
//! `a = Q = 0` is Schwarzschild, `Q = 0` Kerr. The horizon is the gap
//! `(-sigma, sigma)`.

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::rod_structure::{axis_potential_u0, AxisPoint, ComponentConstants, RodConfig, SingularMapSpec};
use crate::solver::BoundaryData;
use crate::target_geometry::{MapJet, TargetPoint, TargetTangent};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KerrNewman {
    pub mass: f64,
    pub spin: f64,
    pub charge: f64,
    /// Target dimension; the charge needs `k = 1`.
    pub k: usize,
}

/// Jets of every closed-form quantity at one point.
struct Fields {
    r: Jet2,
    c: Jet2,
    s2: Jet2,
    sigma_big: Jet2,
    delta: Jet2,
    a_big: Jet2,
    rp: Jet2,
    rm: Jet2,
}

impl KerrNewman {
    pub fn new(mass: f64, spin: f64, charge: f64, k: usize) -> Result<Self> {
        let o = Self { mass, spin, charge, k };
        if !(mass > 0.0) || !(o.sigma() > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need M > 0 and M^2 > a^2 + Q^2 (non-extremal), got M = {mass}, a = {spin}, Q = {charge}"
            )));
        }
        if k > 1 || (k == 0 && charge != 0.0) {
            return Err(Error::InvalidParameter("the charged oracle needs k = 1".into()));
        }
        Ok(o)
    }

    pub fn schwarzschild(mass: f64) -> Result<Self> {
        Self::new(mass, 0.0, 0.0, 0)
    }

    pub fn kerr(mass: f64, spin: f64) -> Result<Self> {
        Self::new(mass, spin, 0.0, 0)
    }

    pub fn sigma(&self) -> f64 {
        (self.mass * self.mass - self.spin * self.spin - self.charge * self.charge).sqrt()
    }

    pub fn rods(&self) -> RodConfig {
        RodConfig::new(vec![(-self.sigma(), self.sigma())]).expect("sigma > 0")
    }

    /// Axis constants: `v = pm 2aM`, `psi = pm Q` on the bottom and top rays.
    pub fn spec(&self) -> SingularMapSpec {
        let (a, m, q) = (self.spin, self.mass, self.charge);
        let psi = |s: f64| if self.k == 1 { vec![s * q] } else { vec![] };
        SingularMapSpec::new(
            self.k,
            vec![ComponentConstants::new(2.0 * a * m, psi(1.0)), ComponentConstants::new(-2.0 * a * m, psi(-1.0))],
        )
        .expect("consistent constants")
    }

    fn fields(&self, x: AxisPoint) -> Result<Fields> {
        if !(x.rho > 0.0) {
            return Err(Error::OnSingularSet { rho: x.rho, z: x.z });
        }
        let (m, a, q) = (self.mass, self.spin, self.charge);
        let sig = self.sigma();
        let rho = Jet2::rho(x.rho);
        // every quantity is even in z; work with |z| for stable cancellations
        let flip = x.z < 0.0;
        let z = if flip { -Jet2::z(x.z) } else { Jet2::z(x.z) };
        let rho2 = rho * rho;
        let zp = z + sig;
        let zm = z - sig;
        let rp = (rho2 + zp * zp).sqrt();
        let rm = (rho2 + zm * zm).sqrt();
        let sum = rp + rm;
        let r = sum * 0.5 + m;
        let c = 2.0 * z / sum;
        // s^2 = (sum - 2z)(sum + 2z) / sum^2 with sum - 2z free of cancellation
        let t1 = rho2 / (rp + zp);
        let t2 = if zm.v >= 0.0 { rho2 / (rm + zm) } else { rm - zm };
        let s2 = (t1 + t2) * (sum + 2.0 * z) / (sum * sum);
        let sigma_big = r * r + a * a * (c * c);
        let delta = r * r - 2.0 * m * r + (a * a + q * q);
        let r2a2 = r * r + a * a;
        let a_big = r2a2 * r2a2 - a * a * (delta * s2);
        let c = if flip { -c } else { c };
        let (rp, rm) = if flip { (rm, rp) } else { (rp, rm) };
        Ok(Fields { r, c, s2, sigma_big, delta, a_big, rp, rm })
    }

    /// `(u, v, chi, psi)` as jets; `chi`, `psi` empty for `k = 0`.
    fn map_jets(&self, x: AxisPoint) -> Result<(Jet2, Jet2, Vec<Jet2>, Vec<Jet2>)> {
        let f = self.fields(x)?;
        let (m, a, q) = (self.mass, self.spin, self.charge);
        let gpp = f.s2 * f.a_big / f.sigma_big;
        let u = -0.5 * gpp.ln();
        let c3 = f.c * (-(f.c * f.c) + 3.0);
        let v = -(a * m) * c3 - (a * a * a * m) * (f.c * f.s2 * f.s2 / f.sigma_big)
            + (a * q * q) * (f.r * f.c * f.s2 / f.sigma_big);
        let (chi, psi) = if self.k == 1 {
            let chi = -(q * a) * (f.r * f.s2 / f.sigma_big);
            let psi = -q * (f.c * (f.r * f.r + a * a) / f.sigma_big);
            (vec![chi], vec![psi])
        } else {
            (vec![], vec![])
        };
        Ok((u, v, chi, psi))
    }

    /// Full map with exact gradient and Laplacian.
    pub fn jet(&self, x: AxisPoint) -> Result<MapJet> {
        let (u, v, chi, psi) = self.map_jets(x)?;
        let rho = x.rho;
        let val = |j: &[Jet2]| j.iter().map(|t| t.v).collect::<Vec<_>>();
        let der = |j: &[Jet2], d: usize| j.iter().map(|t| t.d[d]).collect::<Vec<_>>();
        let lap = |j: &[Jet2]| j.iter().map(|t| t.laplacian(rho)).collect::<Vec<_>>();
        Ok(MapJet {
            point: TargetPoint::new(u.v, v.v, val(&chi), val(&psi)),
            grad: [
                TargetTangent::new(u.d[0], v.d[0], der(&chi, 0), der(&psi, 0)),
                TargetTangent::new(u.d[1], v.d[1], der(&chi, 1), der(&psi, 1)),
            ],
            lap: TargetTangent::new(u.laplacian(rho), v.laplacian(rho), lap(&chi), lap(&psi)),
        })
    }

    pub fn point(&self, x: AxisPoint) -> Result<TargetPoint> {
        Ok(self.jet(x)?.point)
    }

    /// Frame-dragging potential `w`.
    pub fn w(&self, x: AxisPoint) -> Result<f64> {
        let f = self.fields(x)?;
        let a = self.spin;
        Ok((a * ((f.r * f.r + a * a) - f.delta) / f.a_big).v)
    }

    /// Conformal exponent `lambda`.
    pub fn lambda(&self, x: AxisPoint) -> Result<f64> {
        let f = self.fields(x)?;
        Ok(0.5 * (f.sigma_big / (f.rp * f.rm)).v.ln())
    }

    /// Electric potential `theta`, vanishing at infinity.
    pub fn theta(&self, x: AxisPoint) -> Result<f64> {
        let f = self.fields(x)?;
        Ok((self.charge * f.r / f.sigma_big).v)
    }

    /// Boyer-Lindquist `(r, cos theta)` of a Weyl point.
    pub fn boyer_lindquist(&self, x: AxisPoint) -> Result<(f64, f64)> {
        let f = self.fields(x)?;
        Ok((f.r.v, f.c.v))
    }
}

impl BoundaryData for KerrNewman {
    fn k(&self) -> usize {
        self.k
    }

    fn regular_value(&self, x: AxisPoint) -> Result<TargetPoint> {
        let mut p = self.point(x)?;
        p.u -= axis_potential_u0(&self.rods(), x)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target_geometry::{tension, tension_norm};

    #[test]
    fn schwarzschild_is_the_rod_potential() {
        let o = KerrNewman::schwarzschild(1.0).unwrap();
        for &(rho, z) in &[(0.3, 0.2), (1e-3, 2.0), (5.0, -7.0), (0.01, -0.5)] {
            let p = o.regular_value(AxisPoint::new(rho, z)).unwrap();
            assert!(p.u.abs() < 1e-12, "{rho} {z}: {}", p.u);
        }
    }

    #[test]
    fn kerr_newman_is_harmonic() {
        let o = KerrNewman::new(1.0, 0.5, 0.4, 1).unwrap();
        for &(rho, z) in &[(0.3, 0.2), (0.05, 1.5), (2.0, -3.0), (0.7, -0.1)] {
            let j = o.jet(AxisPoint::new(rho, z)).unwrap();
            let t = tension(&j).unwrap();
            let n = tension_norm(&j.point, &t).unwrap();
            assert!(n < 1e-9, "{rho} {z}: {n}");
        }
    }

    #[test]
    fn axis_values_match_constants() {
        let o = KerrNewman::new(1.0, 0.5, 0.4, 1).unwrap();
        let spec = o.spec();
        let top = o.point(AxisPoint::new(1e-7, 3.0)).unwrap();
        let bottom = o.point(AxisPoint::new(1e-7, -3.0)).unwrap();
        assert!((top.v - spec.components[1].v).abs() < 1e-9);
        assert!((bottom.v - spec.components[0].v).abs() < 1e-9);
        assert!((top.psi[0] - spec.components[1].psi[0]).abs() < 1e-9);
        assert!(bottom.chi[0].abs() < 1e-9);
    }

    #[test]
    fn weyl_identity_for_focal_distances() {
        // R_+ R_- = (r - M)^2 - sigma^2 cos^2
        let o = KerrNewman::kerr(1.0, 0.6).unwrap();
        let x = AxisPoint::new(0.4, 0.3);
        let f = o.fields(x).unwrap();
        let lhs = (f.rp * f.rm).v;
        let rhs = (f.r.v - 1.0).powi(2) - o.sigma().powi(2) * f.c.v.powi(2);
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
