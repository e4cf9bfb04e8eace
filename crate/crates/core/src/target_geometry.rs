//! Pointwise geometry of the complex hyperbolic space `H^{k+1}_C` in
//! horospherical (Busemann) coordinates `p = (u, v, chi, psi)`.
//!
//! The metric is
//!
//! ```text
//! ds^2 = du^2 + e^{4u} (dv + chi.dpsi - psi.dchi)^2 + e^{2u} (dchi.dchi + dpsi.dpsi)
//! ```
//!
//! with `chi, psi in R^k`. For `k = 0` this is the real hyperbolic plane of
//! curvature -4 and the harmonic map system reduces to the Ernst pair.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The target space `H^{k+1}_C`, of real dimension `m = 2k + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperbolicModel {
    pub k: usize,
}

impl HyperbolicModel {
    pub fn new(k: usize) -> Self {
        Self { k }
    }

    /// Real dimension of the target.
    pub fn m(&self) -> usize {
        2 * self.k + 2
    }

    pub fn origin(&self) -> TargetPoint {
        TargetPoint::new(0.0, 0.0, vec![0.0; self.k], vec![0.0; self.k])
    }

    pub fn zero_tangent(&self) -> TargetTangent {
        TargetTangent::zero(self.k)
    }
}

/// A point of the target in Busemann coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    pub u: f64,
    pub v: f64,
    pub chi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl TargetPoint {
    pub fn new(u: f64, v: f64, chi: Vec<f64>, psi: Vec<f64>) -> Self {
        Self { u, v, chi, psi }
    }

    pub fn k(&self) -> usize {
        self.chi.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.chi.len() != self.psi.len() {
            return Err(Error::DimensionMismatch { expected: self.chi.len(), found: self.psi.len() });
        }
        let finite = self.u.is_finite()
            && self.v.is_finite()
            && self.chi.iter().chain(&self.psi).all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("target point"));
        }
        Ok(())
    }

    /// Flattened coordinates `(u, v, chi_1..chi_k, psi_1..psi_k)`.
    pub fn coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 + 2 * self.k());
        out.push(self.u);
        out.push(self.v);
        out.extend_from_slice(&self.chi);
        out.extend_from_slice(&self.psi);
        out
    }

    pub fn from_coords(k: usize, x: &[f64]) -> Self {
        Self::new(x[0], x[1], x[2..2 + k].to_vec(), x[2 + k..2 + 2 * k].to_vec())
    }
}

/// A tangent vector (or a coordinate differential) at some base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTangent {
    pub du: f64,
    pub dv: f64,
    pub dchi: Vec<f64>,
    pub dpsi: Vec<f64>,
}

impl TargetTangent {
    pub fn new(du: f64, dv: f64, dchi: Vec<f64>, dpsi: Vec<f64>) -> Self {
        Self { du, dv, dchi, dpsi }
    }

    pub fn zero(k: usize) -> Self {
        Self::new(0.0, 0.0, vec![0.0; k], vec![0.0; k])
    }

    pub fn k(&self) -> usize {
        self.dchi.len()
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 + 2 * self.k());
        out.push(self.du);
        out.push(self.dv);
        out.extend_from_slice(&self.dchi);
        out.extend_from_slice(&self.dpsi);
        out
    }

    pub fn from_coords(k: usize, x: &[f64]) -> Self {
        Self::new(x[0], x[1], x[2..2 + k].to_vec(), x[2 + k..2 + 2 * k].to_vec())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(
            s * self.du,
            s * self.dv,
            self.dchi.iter().map(|x| s * x).collect(),
            self.dpsi.iter().map(|x| s * x).collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.coords().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// First and second order data of a map at one ambient point: the value,
/// the partial derivatives along `rho` and `z`, and the axisymmetric flat
/// Laplacian `f_rr + f_r / rho + f_zz` of every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MapJet {
    pub point: TargetPoint,
    pub grad: [TargetTangent; 2],
    pub lap: TargetTangent,
}

impl MapJet {
    pub fn constant(point: TargetPoint) -> Self {
        let k = point.k();
        Self { point, grad: [TargetTangent::zero(k), TargetTangent::zero(k)], lap: TargetTangent::zero(k) }
    }

    fn check(&self) -> Result<usize> {
        let k = self.point.k();
        self.point.check()?;
        for t in self.grad.iter().chain(std::iter::once(&self.lap)) {
            check_tangent(k, t)?;
        }
        Ok(k)
    }
}

fn check_tangent(k: usize, t: &TargetTangent) -> Result<()> {
    if t.dchi.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: t.dchi.len() });
    }
    if t.dpsi.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: t.dpsi.len() });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The twist combination `dv + chi.dpsi - psi.dchi` of a tangent at `p`.
pub fn twist_component(p: &TargetPoint, x: &TargetTangent) -> f64 {
    x.dv + dot(&p.chi, &x.dpsi) - dot(&p.psi, &x.dchi)
}

/// Riemannian inner product `<X, Y>_p`.
pub fn metric_inner(p: &TargetPoint, x: &TargetTangent, y: &TargetTangent) -> Result<f64> {
    let k = p.k();
    check_tangent(k, x)?;
    check_tangent(k, y)?;
    let e2 = (2.0 * p.u).exp();
    let e4 = e2 * e2;
    Ok(x.du * y.du
        + e4 * twist_component(p, x) * twist_component(p, y)
        + e2 * (dot(&x.dchi, &y.dchi) + dot(&x.dpsi, &y.dpsi)))
}

/// Energy density `sum_j <d_j phi, d_j phi>` over the two meridional directions.
pub fn energy_density(jet: &MapJet) -> Result<f64> {
    jet.check()?;
    let mut e = 0.0;
    for g in &jet.grad {
        e += metric_inner(&jet.point, g, g)?;
    }
    Ok(e)
}

/// Tension field of the map at one point, in closed form.
///
/// With `W = grad v + chi.grad psi - psi.grad chi`:
///
/// ```text
/// tau^u   = lap u - 2 e^{4u} |W|^2 - e^{2u} (|grad chi|^2 + |grad psi|^2)
/// tau^v   = lap v + 4 grad u.grad v + 2 grad u.(chi.grad psi - psi.grad chi)
///           - 2 e^{2u} (chi.grad chi + psi.grad psi).W
/// tau^chi = lap chi + 2 grad u.grad chi - 2 e^{2u} W.grad psi
/// tau^psi = lap psi + 2 grad u.grad psi + 2 e^{2u} W.grad chi
/// ```
pub fn tension(jet: &MapJet) -> Result<TargetTangent> {
    let k = jet.check()?;
    let p = &jet.point;
    let e2 = (2.0 * p.u).exp();
    let e4 = e2 * e2;
    let [gr, gz] = &jet.grad;
    let w = [twist_component(p, gr), twist_component(p, gz)];
    let gu = [gr.du, gz.du];
    let grads = [gr, gz];

    let w2 = w[0] * w[0] + w[1] * w[1];
    let mut grad_cp2 = 0.0;
    for g in &grads {
        grad_cp2 += dot(&g.dchi, &g.dchi) + dot(&g.dpsi, &g.dpsi);
    }
    let tau_u = jet.lap.du - 2.0 * e4 * w2 - e2 * grad_cp2;

    let mut tau_v = jet.lap.dv;
    for d in 0..2 {
        let g = grads[d];
        let cross = dot(&p.chi, &g.dpsi) - dot(&p.psi, &g.dchi);
        let radial = dot(&p.chi, &g.dchi) + dot(&p.psi, &g.dpsi);
        tau_v += 4.0 * gu[d] * g.dv + 2.0 * gu[d] * cross - 2.0 * e2 * radial * w[d];
    }

    let mut tau_chi = jet.lap.dchi.clone();
    let mut tau_psi = jet.lap.dpsi.clone();
    for i in 0..k {
        for d in 0..2 {
            let g = grads[d];
            tau_chi[i] += 2.0 * gu[d] * g.dchi[i] - 2.0 * e2 * w[d] * g.dpsi[i];
            tau_psi[i] += 2.0 * gu[d] * g.dpsi[i] + 2.0 * e2 * w[d] * g.dchi[i];
        }
    }
    Ok(TargetTangent::new(tau_u, tau_v, tau_chi, tau_psi))
}

/// Metric coefficient matrix `g_ab(p)` in the coordinate order
/// `(u, v, chi_1..chi_k, psi_1..psi_k)`.
pub fn metric_matrix(p: &TargetPoint) -> DMatrix<f64> {
    let k = p.k();
    let m = 2 * k + 2;
    let a = twist_covector(p);
    let e2 = (2.0 * p.u).exp();
    let e4 = e2 * e2;
    let mut g = DMatrix::zeros(m, m);
    g[(0, 0)] = 1.0;
    for r in 1..m {
        for c in 1..m {
            g[(r, c)] = e4 * a[r] * a[c];
        }
    }
    for i in 2..m {
        g[(i, i)] += e2;
    }
    g
}

/// Coefficients of the one-form `dv + chi.dpsi - psi.dchi`.
fn twist_covector(p: &TargetPoint) -> DVector<f64> {
    let k = p.k();
    let mut a = DVector::zeros(2 * k + 2);
    a[1] = 1.0;
    for i in 0..k {
        a[2 + i] = -p.psi[i];
        a[2 + k + i] = p.chi[i];
    }
    a
}

/// Partial derivatives `d g / d x^c` of the metric matrix, for every
/// coordinate `c`. Only `u`, `chi` and `psi` enter the coefficients.
pub fn metric_derivatives(p: &TargetPoint) -> Vec<DMatrix<f64>> {
    let k = p.k();
    let m = 2 * k + 2;
    let a = twist_covector(p);
    let e2 = (2.0 * p.u).exp();
    let e4 = e2 * e2;
    let mut out = vec![DMatrix::zeros(m, m); m];

    let aa = &a * a.transpose();
    out[0] = aa * (4.0 * e4);
    for i in 2..m {
        out[0][(i, i)] += 2.0 * e2;
    }
    for i in 0..k {
        // a_{psi_i} = chi_i and a_{chi_i} = -psi_i
        let mut da = DVector::zeros(m);
        da[2 + k + i] = 1.0;
        out[2 + i] = (&da * a.transpose() + &a * da.transpose()) * e4;
        let mut db = DVector::zeros(m);
        db[2 + i] = -1.0;
        out[2 + k + i] = (&db * a.transpose() + &a * db.transpose()) * e4;
    }
    out
}

/// Christoffel symbols `gamma[a][b][c]` of the target at `p`, computed from
/// the metric matrix and its exact coordinate derivatives.
pub fn christoffel_symbols(p: &TargetPoint) -> Vec<DMatrix<f64>> {
    let g = metric_matrix(p);
    let ginv = g.try_inverse().expect("metric is positive definite");
    let dg = metric_derivatives(p);
    let m = ginv.nrows();
    let mut gamma = vec![DMatrix::zeros(m, m); m];
    for a in 0..m {
        for b in 0..m {
            for c in b..m {
                let mut s = 0.0;
                for d in 0..m {
                    s += ginv[(a, d)] * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)]);
                }
                gamma[a][(b, c)] = 0.5 * s;
                gamma[a][(c, b)] = 0.5 * s;
            }
        }
    }
    gamma
}

/// Tension through the general harmonic map system
/// `tau^a = lap phi^a + Gamma^a_bc d_j phi^b d_j phi^c`.
pub fn christoffel_tension(jet: &MapJet) -> Result<TargetTangent> {
    let k = jet.check()?;
    let gamma = christoffel_symbols(&jet.point);
    let m = 2 * k + 2;
    let mut tau = jet.lap.coords();
    for g in &jet.grad {
        let d = g.coords();
        for a in 0..m {
            let mut s = 0.0;
            for b in 0..m {
                for c in 0..m {
                    s += gamma[a][(b, c)] * d[b] * d[c];
                }
            }
            tau[a] += s;
        }
    }
    Ok(TargetTangent::from_coords(k, &tau))
}

/// Pointwise magnitude `sqrt(<tau, tau>)`.
pub fn tension_norm(p: &TargetPoint, tau: &TargetTangent) -> Result<f64> {
    Ok(metric_inner(p, tau, tau)?.max(0.0).sqrt())
}

/// Raise the index of a covector `r` (components along `du, dv, dchi, dpsi`)
/// at `p`, i.e. solve `g(p) t = r`.
pub fn raise_index(p: &TargetPoint, r: &TargetTangent) -> TargetTangent {
    let k = p.k();
    let e2 = (2.0 * p.u).exp();
    let em2 = 1.0 / e2;
    let em4 = em2 * em2;
    let alpha = em4 * r.dv;
    let mut tchi = vec![0.0; k];
    let mut tpsi = vec![0.0; k];
    for i in 0..k {
        tchi[i] = em2 * (r.dchi[i] + p.psi[i] * r.dv);
        tpsi[i] = em2 * (r.dpsi[i] - p.chi[i] * r.dv);
    }
    let tv = alpha - dot(&p.chi, &tpsi) + dot(&p.psi, &tchi);
    TargetTangent::new(r.du, tv, tchi, tpsi)
}

/// Norm of a covector, `sqrt(r . g^{-1} r)`.
pub fn covector_norm(p: &TargetPoint, r: &TargetTangent) -> f64 {
    let k = p.k();
    let e2 = (2.0 * p.u).exp();
    let em2 = 1.0 / e2;
    let mut s = r.du * r.du + em2 * em2 * r.dv * r.dv;
    for i in 0..k {
        let a = r.dchi[i] + p.psi[i] * r.dv;
        let b = r.dpsi[i] - p.chi[i] * r.dv;
        s += em2 * (a * a + b * b);
    }
    s.sqrt()
}

/// Homogeneous coordinates of a point in the Siegel-domain model,
/// `Z = (1, w, zeta)` with `zeta = chi + i psi` and
/// `w = 2v + i (e^{-2u} + |zeta|^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousPoint {
    pub w_re: f64,
    pub w_im: f64,
    pub zeta_re: Vec<f64>,
    pub zeta_im: Vec<f64>,
}

pub fn homogeneous_lift(p: &TargetPoint) -> HomogeneousPoint {
    let z2 = dot(&p.chi, &p.chi) + dot(&p.psi, &p.psi);
    HomogeneousPoint {
        w_re: 2.0 * p.v,
        w_im: (-2.0 * p.u).exp() + z2,
        zeta_re: p.chi.clone(),
        zeta_im: p.psi.clone(),
    }
}

/// The indefinite Hermitian form `<Z, W> = (w_Z - conj w_W) / 2i - zeta_Z . conj zeta_W`,
/// returned as `(re, im)`. `<Z, Z> = e^{-2u} > 0` on lifted points.
pub fn hermitian_form(a: &HomogeneousPoint, b: &HomogeneousPoint) -> (f64, f64) {
    // (w_a - conj w_b) / (2i) = (Im w_a + Im w_b)/2 - i (Re w_a - Re w_b)/2
    let mut re = 0.5 * (a.w_im + b.w_im);
    let mut im = -0.5 * (a.w_re - b.w_re);
    for i in 0..a.zeta_re.len() {
        // zeta_a . conj zeta_b
        let (xr, xi) = (a.zeta_re[i], a.zeta_im[i]);
        let (yr, yi) = (b.zeta_re[i], -b.zeta_im[i]);
        re -= xr * yr - xi * yi;
        im -= xr * yi + xi * yr;
    }
    (re, im)
}

/// Geodesic distance via the Hermitian form, `cosh^2 d = |<Z,W>|^2 / (<Z,Z><W,W>)`.
/// Loses accuracy for nearby points; [`distance`] is the production route.
pub fn distance_via_lift(p: &TargetPoint, q: &TargetPoint) -> f64 {
    let (a, b) = (homogeneous_lift(p), homogeneous_lift(q));
    let (re, im) = hermitian_form(&a, &b);
    let (naa, _) = hermitian_form(&a, &a);
    let (nbb, _) = hermitian_form(&b, &b);
    let c2 = (re * re + im * im) / (naa * nbb);
    c2.max(1.0).sqrt().acosh()
}

/// Geodesic distance in `H^{k+1}_C`.
///
/// Expanding `|<Z,W>|^2 - <Z,Z><W,W>` for lifted points gives a sum of
/// non-negative terms, so `sinh^2 d` is evaluated without cancellation:
///
/// ```text
/// sinh^2 d = sinh^2(u1 - u2) + (e^{2u1} + e^{2u2}) |dz|^2 / 2
///          + e^{2(u1+u2)} (|dz|^4 / 4 + B^2)
/// B = v1 - v2 + psi1.chi2 - chi1.psi2,   dz = zeta1 - zeta2
/// ```
pub fn distance(p: &TargetPoint, q: &TargetPoint) -> f64 {
    let k = p.k();
    let mut dz2 = 0.0;
    let mut b = p.v - q.v;
    for i in 0..k {
        let dc = p.chi[i] - q.chi[i];
        let dp = p.psi[i] - q.psi[i];
        dz2 += dc * dc + dp * dp;
        b += p.psi[i] * q.chi[i] - p.chi[i] * q.psi[i];
    }
    let sh = (p.u - q.u).sinh();
    let e1 = (2.0 * p.u).exp();
    let e2 = (2.0 * q.u).exp();
    let s = sh * sh + 0.5 * (e1 + e2) * dz2 + e1 * e2 * (0.25 * dz2 * dz2 + b * b);
    s.sqrt().asinh()
}

/// Heisenberg translation of the target fixing the Busemann point:
///
/// ```text
/// chi -> chi + b_chi,  psi -> psi + b_psi,
/// v   -> v + c - psi.b_chi + chi.b_psi,  u -> u
/// ```
///
/// It preserves the metric; its inverse negates all three shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeIsometry {
    pub shift_v: f64,
    pub shift_chi: Vec<f64>,
    pub shift_psi: Vec<f64>,
}

impl GaugeIsometry {
    pub fn identity(k: usize) -> Self {
        Self { shift_v: 0.0, shift_chi: vec![0.0; k], shift_psi: vec![0.0; k] }
    }

    pub fn is_identity(&self) -> bool {
        self.shift_v == 0.0
            && self.shift_chi.iter().all(|x| *x == 0.0)
            && self.shift_psi.iter().all(|x| *x == 0.0)
    }

    pub fn inverse(&self) -> Self {
        Self {
            shift_v: -self.shift_v,
            shift_chi: self.shift_chi.iter().map(|x| -x).collect(),
            shift_psi: self.shift_psi.iter().map(|x| -x).collect(),
        }
    }

    pub fn apply(&self, p: &TargetPoint) -> TargetPoint {
        let v = p.v + self.shift_v - dot(&p.psi, &self.shift_chi) + dot(&p.chi, &self.shift_psi);
        TargetPoint::new(
            p.u,
            v,
            p.chi.iter().zip(&self.shift_chi).map(|(a, b)| a + b).collect(),
            p.psi.iter().zip(&self.shift_psi).map(|(a, b)| a + b).collect(),
        )
    }

    /// Push a tangent vector forward through the isometry (the differential
    /// does not depend on the base point).
    pub fn push(&self, x: &TargetTangent) -> TargetTangent {
        let dv = x.dv - dot(&x.dpsi, &self.shift_chi) + dot(&x.dchi, &self.shift_psi);
        TargetTangent::new(x.du, dv, x.dchi.clone(), x.dpsi.clone())
    }
}

/// Find the gauge isometry that moves the `(v, psi)` part of the first
/// constant to zero, leaving every `chi` unchanged, and apply it to all of
/// them.
pub fn gauge_normalize(constants: &[TargetPoint]) -> Result<(GaugeIsometry, Vec<TargetPoint>)> {
    let first = constants
        .first()
        .ok_or_else(|| Error::InvalidParameter("gauge_normalize needs at least one constant".into()))?;
    let k = first.k();
    for c in constants {
        if c.k() != k || c.psi.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: c.k() });
        }
    }
    let shift_psi: Vec<f64> = first.psi.iter().map(|x| -x).collect();
    let shift_v = -first.v - dot(&first.chi, &shift_psi);
    let iso = GaugeIsometry { shift_v, shift_chi: vec![0.0; k], shift_psi };
    let iso = if iso.is_identity() { GaugeIsometry::identity(k) } else { iso };
    let mapped = constants.iter().map(|c| iso.apply(c)).collect();
    Ok((iso, mapped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tangent(du: f64, dv: f64, dchi: &[f64], dpsi: &[f64]) -> TargetTangent {
        TargetTangent::new(du, dv, dchi.to_vec(), dpsi.to_vec())
    }

    #[test]
    fn metric_identity_cases() {
        let p = HyperbolicModel::new(0).origin();
        let x = tangent(1.0, 0.0, &[], &[]);
        assert_eq!(metric_inner(&p, &x, &x).unwrap(), 1.0);
        let y = tangent(0.0, 1.0, &[], &[]);
        assert_eq!(metric_inner(&p, &y, &y).unwrap(), 1.0);
    }

    #[test]
    fn metric_regression_value() {
        // Second, independent evaluation of the quadratic form written out
        // term by term for k = 1.
        let p = TargetPoint::new(0.3, 0.0, vec![0.5], vec![-0.2]);
        let x = tangent(0.0, 1.0, &[0.1], &[0.2]);
        let (u, chi, psi) = (0.3_f64, 0.5_f64, -0.2_f64);
        let (dv, dchi, dpsi) = (1.0_f64, 0.1_f64, 0.2_f64);
        let twist = dv + chi * dpsi - psi * dchi;
        let expected = (4.0 * u).exp() * twist.powi(2) + (2.0 * u).exp() * (dchi * dchi + dpsi * dpsi);
        let got = metric_inner(&p, &x, &x).unwrap();
        assert!((got - expected).abs() < 1e-14 * expected, "{got} vs {expected}");
    }

    #[test]
    fn metric_dimension_mismatch() {
        let p = HyperbolicModel::new(1).origin();
        let x = tangent(1.0, 0.0, &[], &[]);
        assert!(matches!(metric_inner(&p, &x, &x), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn k0_tension_example() {
        let p = HyperbolicModel::new(0).origin();
        let jet = MapJet {
            point: p,
            grad: [tangent(0.0, 1.0, &[], &[]), tangent(0.0, 0.0, &[], &[])],
            lap: tangent(0.0, 0.0, &[], &[]),
        };
        let t = tension(&jet).unwrap();
        assert_eq!(t.du, -2.0);
        assert_eq!(t.dv, 0.0);
    }

    #[test]
    fn geodesic_image_tension() {
        let p = TargetPoint::new(0.7, 1.0, vec![0.3, -0.1], vec![0.2, 0.4]);
        let jet = MapJet {
            point: p,
            grad: [tangent(0.4, 0.0, &[0.0, 0.0], &[0.0, 0.0]), tangent(-1.3, 0.0, &[0.0, 0.0], &[0.0, 0.0])],
            lap: tangent(2.5, 0.0, &[0.0, 0.0], &[0.0, 0.0]),
        };
        let t = tension(&jet).unwrap();
        assert_eq!(t, tangent(2.5, 0.0, &[0.0, 0.0], &[0.0, 0.0]));
        let c = christoffel_tension(&jet).unwrap();
        assert!((c.du - 2.5).abs() < 1e-12 && c.dv.abs() < 1e-12);
        assert!(c.dchi.iter().chain(&c.dpsi).all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn constant_map_is_harmonic() {
        let jet = MapJet::constant(TargetPoint::new(-0.4, 2.0, vec![1.0], vec![-3.0]));
        assert_eq!(tension(&jet).unwrap().max_abs(), 0.0);
        assert!(christoffel_tension(&jet).unwrap().max_abs() < 1e-15);
        assert_eq!(energy_density(&jet).unwrap(), 0.0);
    }

    #[test]
    fn raise_index_inverts_metric() {
        let p = TargetPoint::new(0.2, 0.1, vec![0.3, -0.7], vec![1.1, 0.4]);
        let r = tangent(0.5, -1.0, &[0.2, 0.3], &[-0.6, 0.9]);
        let t = raise_index(&p, &r);
        let g = metric_matrix(&p);
        let back = &g * DVector::from_vec(t.coords());
        for (a, b) in back.iter().zip(r.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
        let n1 = covector_norm(&p, &r);
        let n2 = tension_norm(&p, &t).unwrap();
        assert!((n1 - n2).abs() < 1e-12 * n1);
    }

    #[test]
    fn vertical_geodesic_distance() {
        let p = TargetPoint::new(-0.8, 1.5, vec![0.2], vec![0.3]);
        let q = TargetPoint::new(1.7, 1.5, vec![0.2], vec![0.3]);
        assert!((distance(&p, &q) - 2.5).abs() < 1e-14);
        assert_eq!(distance(&p, &p), 0.0);
    }

    #[test]
    fn lift_distance_agrees() {
        let p = TargetPoint::new(0.1, 0.4, vec![0.3], vec![-0.2]);
        let q = TargetPoint::new(-0.5, -0.3, vec![0.9], vec![0.6]);
        assert!((distance(&p, &q) - distance_via_lift(&p, &q)).abs() < 1e-10);
        let a = homogeneous_lift(&p);
        let (n, im) = hermitian_form(&a, &a);
        assert!((n - (-0.2_f64).exp()).abs() < 1e-14 && im.abs() < 1e-15);
    }

    #[test]
    fn gauge_normalize_examples() {
        let c = vec![TargetPoint::new(0.0, 3.0, vec![0.0], vec![2.0])];
        let (iso, out) = gauge_normalize(&c).unwrap();
        assert_eq!(out[0].v, 0.0);
        assert_eq!(out[0].psi, vec![0.0]);
        assert!(!iso.is_identity());

        let c = vec![
            TargetPoint::new(0.0, 0.0, vec![0.0], vec![0.0]),
            TargetPoint::new(0.0, 1.0, vec![0.0], vec![4.0]),
        ];
        let (iso, out) = gauge_normalize(&c).unwrap();
        assert!(iso.is_identity());
        assert_eq!(out, c);
        assert!(gauge_normalize(&[]).is_err());
    }

    #[test]
    fn gauge_inverse_roundtrip() {
        let iso = GaugeIsometry { shift_v: 0.3, shift_chi: vec![1.0, -2.0], shift_psi: vec![0.5, 0.25] };
        let p = TargetPoint::new(0.4, -1.0, vec![0.1, 0.2], vec![0.3, 0.4]);
        let back = iso.inverse().apply(&iso.apply(&p));
        for (a, b) in back.coords().iter().zip(p.coords()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
