//! The seed map: an approximately harmonic map with the prescribed singular
//! behaviour near the axis and a purely angular profile far away.
//!
//! `u` is always `u0`. The remaining coordinates follow, per coordinate with
//! top/bottom constants `c_top`, `c_bot` and `dc = c_top - c_bot`,
//!
//! ```text
//! F = c_mid + dc * (s(theta) - 1/2) * q(r),      c_mid = (c_top + c_bot) / 2
//! f = F + b_j (c_j - F)
//! ```
//!
//! where `s` is a smoothstep in the polar angle, `q` switches the angular
//! profile on between `R*/2` and `3R*/4`, and `b_j` is a product bump equal
//! to one on a tube around axis component `j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::rod_structure::{axis_potential_u0, grad_u0, AxisPoint, RodConfig, SingularMapSpec};
use crate::target_geometry::{tension, tension_norm, MapJet, TargetPoint, TargetTangent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    /// Outside this radius the map depends on the polar angle only.
    pub r_star: f64,
    /// The angular transition lives in `[theta_margin, pi - theta_margin]`.
    pub theta_margin: f64,
    /// Tubes of radius `bump_width` where the seed equals the singular maps;
    /// the blend to the exterior finishes at twice this distance.
    pub bump_width: f64,
    /// Degree of the smoothstep polynomial, 5 (C2) or 7 (C3).
    #[serde(default = "default_order")]
    pub profile_order: u32,
}

fn default_order() -> u32 {
    5
}

impl SeedConfig {
    /// `R* = 4 max|endpoint|`, `theta_margin = pi / 8`, width a quarter of the
    /// shortest gap or rod.
    pub fn default_for(rods: &RodConfig) -> Self {
        Self {
            r_star: 4.0 * rods.extent(),
            theta_margin: std::f64::consts::PI / 8.0,
            bump_width: 0.25 * rods.min_feature(),
            profile_order: 5,
        }
    }

    pub fn validate(&self, rods: &RodConfig) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSeed(m));
        if !(self.bump_width > 0.0) || !self.bump_width.is_finite() {
            return bad(format!("bump_width must be positive, got {}", self.bump_width));
        }
        if !(self.theta_margin > 0.0 && self.theta_margin < std::f64::consts::FRAC_PI_2) {
            return bad(format!("theta_margin must lie in (0, pi/2), got {}", self.theta_margin));
        }
        if !matches!(self.profile_order, 5 | 7) {
            return bad(format!("profile_order must be 5 or 7, got {}", self.profile_order));
        }
        let need = rods.extent() + 2.0 * self.bump_width;
        if !(self.r_star > need) {
            return bad(format!("r_star = {} must exceed max|endpoint| + 2 bump_width = {need}", self.r_star));
        }
        if 4.0 * self.bump_width > rods.min_feature() * (1.0 + 1e-12) {
            return bad(format!(
                "bump_width = {} overlaps neighbouring tubes; it must be at most a quarter of the shortest gap or rod ({})",
                self.bump_width,
                rods.min_feature()
            ));
        }
        if 2.0 * self.bump_width > 0.75 * self.r_star * self.theta_margin.sin() {
            return bad("axis tubes leave the constant cones at 3R*/4; increase r_star or theta_margin".into());
        }
        Ok(())
    }
}

/// Smoothstep of the given degree, clipped to `[0, 1]`, with two derivatives.
fn smoothstep(order: u32, t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    match order {
        7 => {
            let t4 = t.powi(4);
            (
                t4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3)),
                140.0 * t.powi(3) * (1.0 - t).powi(3),
                420.0 * t * t * (1.0 - t).powi(2) * (1.0 - 2.0 * t),
            )
        }
        _ => (
            t.powi(3) * (10.0 - 15.0 * t + 6.0 * t * t),
            30.0 * t * t * (1.0 - t).powi(2),
            60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
        ),
    }
}

fn smoothstep_jet(order: u32, t: Jet2) -> Jet2 {
    let (s0, s1, s2) = smoothstep(order, t.v);
    if s1 == 0.0 && s2 == 0.0 {
        return Jet2::constant(s0);
    }
    t.chain(s0, s1, s2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMap {
    pub rods: RodConfig,
    pub spec: SingularMapSpec,
    pub cfg: SeedConfig,
}

/// Shared scalar fields of the construction at one point.
struct Blend {
    /// `(s - 1/2) q`
    profile: Jet2,
    /// Index and value of the (at most one) nonzero tube bump.
    bump: Option<(usize, Jet2)>,
}

pub fn build_seed(rods: &RodConfig, spec: &SingularMapSpec, cfg: &SeedConfig) -> Result<SeedMap> {
    spec.check_against(rods)?;
    cfg.validate(rods)?;
    Ok(SeedMap { rods: rods.clone(), spec: spec.clone(), cfg: cfg.clone() })
}

impl SeedMap {
    pub fn k(&self) -> usize {
        self.spec.k
    }

    /// Constants of the top and bottom unbounded components.
    fn ends(&self) -> (&crate::rod_structure::ComponentConstants, &crate::rod_structure::ComponentConstants) {
        let c = &self.spec.components;
        (&c[c.len() - 1], &c[0])
    }

    /// Angular smoothstep `s(theta)`: 1 near the top axis, 0 near the bottom.
    pub fn angular_weight(&self, theta: f64) -> f64 {
        let m = self.cfg.theta_margin;
        let t = (std::f64::consts::PI - m - theta) / (std::f64::consts::PI - 2.0 * m);
        smoothstep(self.cfg.profile_order, t).0
    }

    /// Far-field value of `(v, chi, psi)` at polar angle `theta`, as a point with `u = 0`.
    pub fn profile_at(&self, theta: f64) -> TargetPoint {
        let s = self.angular_weight(theta);
        let (top, bot) = self.ends();
        let mix = |a: f64, b: f64| b + (a - b) * s;
        TargetPoint::new(
            0.0,
            mix(top.v, bot.v),
            top.chi.iter().zip(&bot.chi).map(|(a, b)| mix(*a, *b)).collect(),
            top.psi.iter().zip(&bot.psi).map(|(a, b)| mix(*a, *b)).collect(),
        )
    }

    fn blend(&self, x: AxisPoint) -> Blend {
        let order = self.cfg.profile_order;
        let (rho, z) = (Jet2::rho(x.rho), Jet2::z(x.z));
        let r = x.r();
        let rs = self.cfg.r_star;
        let m = self.cfg.theta_margin;
        let pi = std::f64::consts::PI;

        let q = if r <= 0.5 * rs {
            Jet2::constant(0.0)
        } else if r >= 0.75 * rs {
            Jet2::constant(1.0)
        } else {
            let rj = (rho * rho + z * z).sqrt();
            smoothstep_jet(order, (rj - 0.5 * rs) * (4.0 / rs))
        };
        let profile = if q.v == 0.0 {
            Jet2::constant(0.0)
        } else {
            let theta = x.rho.atan2(x.z);
            let s = if theta <= m {
                Jet2::constant(1.0)
            } else if theta >= pi - m {
                Jet2::constant(0.0)
            } else {
                let rj = (rho * rho + z * z).sqrt();
                let th = (z / rj).acos();
                smoothstep_jet(order, (th * -1.0 + (pi - m)) * (1.0 / (pi - 2.0 * m)))
            };
            (s - 0.5) * q
        };

        let w = self.cfg.bump_width;
        let mut bump = None;
        if x.rho < 2.0 * w {
            for j in 0..self.rods.num_components() {
                let (lo, hi) = self.rods.component_bounds(j).expect("index in range");
                if x.z <= lo - 2.0 * w || x.z >= hi + 2.0 * w {
                    continue;
                }
                let br = smoothstep_jet(order, (rho * -1.0 + 2.0 * w) * (1.0 / w));
                let tz = if x.z < lo - w {
                    (z - (lo - 2.0 * w)) * (1.0 / w)
                } else if x.z > hi + w {
                    (z * -1.0 + (hi + 2.0 * w)) * (1.0 / w)
                } else {
                    Jet2::constant(1.0)
                };
                let b = br * smoothstep_jet(order, tz);
                if b.v != 0.0 {
                    bump = Some((j, b));
                }
                break;
            }
        }
        Blend { profile, bump }
    }

    /// Combine one coordinate: `F + b (c_j - F)`, returning `c_j` itself
    /// inside a tube.
    fn coordinate(blend: &Blend, top: f64, bot: f64, cj: impl Fn(usize) -> f64) -> Jet2 {
        let mid = 0.5 * (top + bot);
        let f = blend.profile * (top - bot) + mid;
        match &blend.bump {
            Some((j, b)) if b.v == 1.0 => Jet2::constant(cj(*j)),
            Some((j, b)) => f + *b * (f * -1.0 + cj(*j)),
            None => f,
        }
    }

    fn coordinate_jets(&self, x: AxisPoint) -> (Jet2, Vec<Jet2>, Vec<Jet2>) {
        let blend = self.blend(x);
        let (top, bot) = self.ends();
        let comps = &self.spec.components;
        let v = Self::coordinate(&blend, top.v, bot.v, |j| comps[j].v);
        let chi = (0..self.k())
            .map(|i| Self::coordinate(&blend, top.chi[i], bot.chi[i], |j| comps[j].chi[i]))
            .collect();
        let psi = (0..self.k())
            .map(|i| Self::coordinate(&blend, top.psi[i], bot.psi[i], |j| comps[j].psi[i]))
            .collect();
        (v, chi, psi)
    }

    pub fn eval(&self, x: AxisPoint) -> Result<TargetPoint> {
        let u = axis_potential_u0(&self.rods, x)?;
        let (v, chi, psi) = self.coordinate_jets(x);
        Ok(TargetPoint::new(u, v.v, chi.iter().map(|j| j.v).collect(), psi.iter().map(|j| j.v).collect()))
    }

    /// The `(v, chi, psi)` part only, which stays finite on the axis.
    pub fn eval_regular(&self, x: AxisPoint) -> TargetPoint {
        let (v, chi, psi) = self.coordinate_jets(x);
        TargetPoint::new(0.0, v.v, chi.iter().map(|j| j.v).collect(), psi.iter().map(|j| j.v).collect())
    }

    /// Exact analytic jet of the seed at an off-axis point.
    pub fn jet(&self, x: AxisPoint) -> Result<MapJet> {
        if !(x.rho > 0.0) {
            return Err(Error::OnSingularSet { rho: x.rho, z: x.z });
        }
        let u = axis_potential_u0(&self.rods, x)?;
        let (gr, gz) = grad_u0(&self.rods, x)?;
        let (v, chi, psi) = self.coordinate_jets(x);
        let vals = |js: &[Jet2]| js.iter().map(|j| j.v).collect::<Vec<_>>();
        let dir = |d: usize, gu: f64| {
            TargetTangent::new(
                gu,
                v.d[d],
                chi.iter().map(|j| j.d[d]).collect(),
                psi.iter().map(|j| j.d[d]).collect(),
            )
        };
        let lap = TargetTangent::new(
            0.0,
            v.laplacian(x.rho),
            chi.iter().map(|j| j.laplacian(x.rho)).collect(),
            psi.iter().map(|j| j.laplacian(x.rho)).collect(),
        );
        Ok(MapJet {
            point: TargetPoint::new(u, v.v, vals(&chi), vals(&psi)),
            grad: [dir(0, gr), dir(1, gz)],
            lap,
        })
    }

    /// `||tau(seed)||` at an off-axis point.
    pub fn tension_norm_at(&self, x: AxisPoint) -> Result<f64> {
        let jet = self.jet(x)?;
        let tau = tension(&jet)?;
        tension_norm(&jet.point, &tau)
    }
}

/// One sample of the decay study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub r: f64,
    pub theta: f64,
    pub tension: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedDecayReport {
    /// Asymptotic slope of `log max_theta ||tau||` against `log(1 + r^2) / 2`,
    /// fitted with a `1/r` correction term.
    #[serde(with = "crate::nonfinite")]
    pub slope: f64,
    /// Plain least-squares slope without the correction term.
    #[serde(with = "crate::nonfinite")]
    pub raw_slope: f64,
    /// Smallest `c` with `||tau|| <= c (1 + r^2)^{slope / 2}` on the sample.
    pub constant: f64,
    /// `sup ||tau|| (1 + r^2)^{3/2}` over the sample.
    pub c_measured: f64,
    /// The bound `c / (n - 2)` for `n = 3`.
    pub sigma_bound: f64,
    pub pass_hypothesis: bool,
    pub pass_target: bool,
    pub samples: Vec<DecaySample>,
}

/// Least-squares line `y = a + s x`; returns `(s, a)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let s = sxy / sxx;
    (s, my - s * mx)
}

/// Slack granted to a fitted decay exponent.
pub const SLOPE_FIT_TOL: f64 = 0.01;

/// Slope `s` of the model `y = a + s x + d e^{-x}`, where `x = log(1 + r^2) / 2`
/// so that `e^{-x} ~ 1/r` absorbs the leading finite-radius correction.
pub fn fit_with_correction(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let a = nalgebra::DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => xs[i],
        _ => (-xs[i]).exp(),
    });
    let b = nalgebra::DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    match svd.solve(&b, 1e-14) {
        Ok(c) => c[1],
        Err(_) => fit_line(xs, ys).0,
    }
}

/// Evaluate `||tau(seed)||` on the `(r, theta)` sample and fit its decay.
pub fn seed_tension_report(seed: &SeedMap, radii: &[f64], angles: &[f64]) -> Result<SeedDecayReport> {
    if radii.len() < 2 || angles.is_empty() {
        return Err(Error::InvalidParameter("decay fit needs at least two radii and one angle".into()));
    }
    let mut samples = Vec::with_capacity(radii.len() * angles.len());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut c_measured: f64 = 0.0;
    let mut envelope = Vec::new();
    for &r in radii {
        let mut peak: f64 = 0.0;
        for &theta in angles {
            let x = AxisPoint::polar(r, theta);
            if seed.rods.on_sigma(x) || x.rho == 0.0 {
                return Err(Error::OnSingularSet { rho: x.rho, z: x.z });
            }
            let t = seed.tension_norm_at(x)?;
            peak = peak.max(t);
            c_measured = c_measured.max(t * (1.0 + r * r).powf(1.5));
            samples.push(DecaySample { r, theta, tension: t });
        }
        envelope.push((r, peak));
        if peak > 0.0 {
            xs.push(0.5 * (1.0 + r * r).ln());
            ys.push(peak.ln());
        }
    }
    let (slope, raw_slope, constant) = if xs.len() >= 2 {
        let (raw, _) = fit_line(&xs, &ys);
        let s = if xs.len() >= 4 { fit_with_correction(&xs, &ys) } else { raw };
        let c = envelope
            .iter()
            .map(|&(r, p)| p / (1.0 + r * r).powf(0.5 * s))
            .fold(0.0_f64, f64::max);
        (s, raw, c)
    } else {
        // identically zero tension: any decay rate holds
        (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0)
    };
    Ok(SeedDecayReport {
        slope,
        raw_slope,
        constant,
        c_measured,
        sigma_bound: c_measured,
        pass_hypothesis: slope <= -3.0 + SLOPE_FIT_TOL,
        pass_target: slope <= -4.0 + SLOPE_FIT_TOL,
        samples,
    })
}

/// Geometric radii `R* * 2^i`, `i = 1..=count`, the default decay sample.
pub fn default_decay_radii(seed: &SeedMap, count: usize) -> Vec<f64> {
    (1..=count).map(|i| seed.cfg.r_star * 2f64.powi(i as i32)).collect()
}

/// Interior angles strictly between the margins, including the equator.
pub fn default_decay_angles(seed: &SeedMap, count: usize) -> Vec<f64> {
    let m = seed.cfg.theta_margin;
    let pi = std::f64::consts::PI;
    (0..count).map(|i| m + (pi - 2.0 * m) * (i as f64 + 0.5) / count as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rod_structure::{singular_map, ComponentConstants};

    fn seed_n1k1() -> SeedMap {
        let rods = RodConfig::new(vec![(-1.0, 1.0)]).unwrap();
        let spec = SingularMapSpec::new(
            1,
            vec![ComponentConstants::new(0.0, vec![0.0]), ComponentConstants::new(0.7, vec![0.4])],
        )
        .unwrap();
        build_seed(&rods, &spec, &SeedConfig::default_for(&rods)).unwrap()
    }

    #[test]
    fn tube_values_are_exact() {
        let seed = seed_n1k1();
        let w = seed.cfg.bump_width;
        for &(rho, z, j) in &[(0.5 * w, 1.3, 1usize), (0.2 * w, -4.0, 0), (0.9 * w, 1.0 + 0.5 * w, 1)] {
            let x = AxisPoint::new(rho, z);
            assert_eq!(seed.eval(x).unwrap(), singular_map(&seed.rods, &seed.spec, j, x).unwrap());
        }
    }

    #[test]
    fn equal_constants_give_singular_map() {
        let rods = RodConfig::new(vec![(-1.0, 0.0), (1.0, 2.0)]).unwrap();
        let c = ComponentConstants::new(0.3, vec![-0.2]);
        let spec = SingularMapSpec::new(1, vec![c.clone(), c.clone(), c]).unwrap();
        let seed = build_seed(&rods, &spec, &SeedConfig::default_for(&rods)).unwrap();
        for &(rho, z) in &[(0.3, 0.5), (5.0, -2.0), (0.1, 9.0), (30.0, 1.0)] {
            let t = seed.tension_norm_at(AxisPoint::new(rho, z)).unwrap();
            assert!(t < 1e-12, "{t}");
        }
    }

    #[test]
    fn far_profile_on_equator() {
        let seed = seed_n1k1();
        let r = 2.0 * seed.cfg.r_star;
        let p = seed.eval(AxisPoint::polar(r, std::f64::consts::FRAC_PI_2)).unwrap();
        let prof = seed.profile_at(std::f64::consts::FRAC_PI_2);
        assert_eq!(p.v, prof.v);
        // the smoothstep is symmetric, so the equator sits half way
        assert!((p.v - 0.35).abs() < 1e-15 && (p.psi[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn jets_match_differences() {
        let seed = seed_n1k1();
        let rs = seed.cfg.r_star;
        for &(r, th) in &[(0.6 * rs, 1.0), (2.0 * rs, 0.7), (0.62 * rs, 2.2)] {
            let x = AxisPoint::polar(r, th);
            let jet = seed.jet(x).unwrap();
            let h = 1e-5 * r;
            let f = |d: f64, e: f64| seed.eval(AxisPoint::new(x.rho + d, x.z + e)).unwrap().coords();
            let (pr, mr, pz, mz) = (f(h, 0.0), f(-h, 0.0), f(0.0, h), f(0.0, -h));
            let c = jet.point.coords();
            let gr = jet.grad[0].coords();
            let gz = jet.grad[1].coords();
            let lap = jet.lap.coords();
            for a in 1..c.len() {
                let fr = (pr[a] - mr[a]) / (2.0 * h);
                let fz = (pz[a] - mz[a]) / (2.0 * h);
                let l = (pr[a] - 2.0 * c[a] + mr[a]) / (h * h) + fr / x.rho + (pz[a] - 2.0 * c[a] + mz[a]) / (h * h);
                assert!((gr[a] - fr).abs() < 1e-6 / r && (gz[a] - fz).abs() < 1e-6 / r);
                assert!((lap[a] - l).abs() < 1e-3 / (r * r), "{} vs {}", lap[a], l);
            }
        }
    }

    #[test]
    fn config_validation() {
        let rods = RodConfig::new(vec![(-1.0, 1.0)]).unwrap();
        let mut cfg = SeedConfig::default_for(&rods);
        cfg.r_star = 1.0;
        assert!(cfg.validate(&rods).is_err());
        let mut cfg = SeedConfig::default_for(&rods);
        cfg.bump_width = 1.0;
        assert!(cfg.validate(&rods).is_err());
        let mut cfg = SeedConfig::default_for(&rods);
        cfg.profile_order = 4;
        assert!(cfg.validate(&rods).is_err());
    }

    #[test]
    fn smoothstep_edges() {
        for order in [5, 7] {
            assert_eq!(smoothstep(order, 0.0), (0.0, 0.0, 0.0));
            assert_eq!(smoothstep(order, 1.0), (1.0, 0.0, 0.0));
            let (s, d1, d2) = smoothstep(order, 0.5);
            assert!((s - 0.5).abs() < 1e-15 && d1 > 0.0 && d2.abs() < 1e-12);
            let (_, a, b) = smoothstep(order, 1e-4);
            assert!(a < 1e-6 && b < 1e-2);
        }
    }
}
