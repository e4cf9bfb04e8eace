//! Analytic-oracle suites behind `axiharm validate`.

use ode_solvers::{DVector, Dop853, System};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::KerrNewman;
use crate::rod_structure::SingularMapSpec;
use crate::seed_map::{build_seed, SeedConfig};
use crate::solver::{away_from_endpoints, solve_on_ball, BoundaryData, Grid, GridParams, SolveParams};
use crate::spacetime::{reconstruct, ReconstructOptions};
use crate::target_geometry::{
    christoffel_tension, distance, distance_via_lift, metric_derivatives, metric_inner, raise_index, tension, MapJet, TargetPoint,
    TargetTangent,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn suite(name: &str, pass: bool, detail: String) -> SuiteResult {
    SuiteResult { name: name.into(), pass, detail }
}

fn random_point(rng: &mut ChaCha8Rng, k: usize) -> TargetPoint {
    let mut r = |a: f64| rng.gen_range(-a..a);
    TargetPoint::new(r(1.5), r(2.0), (0..k).map(|_| r(2.0)).collect(), (0..k).map(|_| r(2.0)).collect())
}

fn random_tangent(rng: &mut ChaCha8Rng, k: usize) -> TargetTangent {
    let m = 2 * k + 2;
    let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
    TargetTangent::from_coords(k, &x)
}

/// Closed-form tension against the Christoffel-symbol form on random jets,
/// plus the exact values on constant and vertical-geodesic maps.
pub fn tension_crosscheck(jets_per_k: usize, seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut exact = true;
    let mut count = 0;
    for k in [0usize, 1, 2, 4] {
        for _ in 0..jets_per_k {
            let jet = MapJet {
                point: random_point(&mut rng, k),
                grad: [random_tangent(&mut rng, k), random_tangent(&mut rng, k)],
                lap: random_tangent(&mut rng, k),
            };
            let a = tension(&jet)?.coords();
            let b = christoffel_tension(&jet)?.coords();
            let scale = 1.0 + b.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            worst = worst.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale);
            count += 1;

            // u-lines are geodesics: only the u-component survives
            let mut g = [TargetTangent::zero(k), TargetTangent::zero(k)];
            g[0].du = rng.gen_range(-2.0..2.0);
            g[1].du = rng.gen_range(-2.0..2.0);
            let mut lap = TargetTangent::zero(k);
            lap.du = rng.gen_range(-2.0..2.0);
            let t = tension(&MapJet { point: jet.point.clone(), grad: g, lap: lap.clone() })?;
            exact &= t == lap;
            let c = tension(&MapJet { lap: lap.clone(), ..MapJet::constant(jet.point.clone()) })?;
            exact &= c == lap;
        }
    }
    Ok(suite(
        "tension cross-check",
        worst <= 1e-10 && exact,
        format!("{count} jets, max relative difference {worst:.2e}, exact on geodesic images: {exact}"),
    ))
}

struct Geodesic {
    k: usize,
}

// x'' = -g^{-1} Gamma_{a,bc} x'^b x'^c with the first-kind symbols from the
// exact metric derivatives, so no matrix is inverted.
impl System<f64, DVector<f64>> for Geodesic {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let m = 2 * self.k + 2;
        let x: Vec<f64> = (0..m).map(|i| y[i]).collect();
        let p = TargetPoint::from_coords(self.k, &x);
        let dg = metric_derivatives(&p);
        let mut r = vec![0.0; m];
        for (a, ra) in r.iter_mut().enumerate() {
            let mut s = 0.0;
            for b in 0..m {
                for c in 0..m {
                    s += (dg[b][(a, c)] + dg[c][(a, b)] - dg[a][(b, c)]) * y[m + b] * y[m + c];
                }
            }
            *ra = -0.5 * s;
        }
        let acc = raise_index(&p, &TargetTangent::from_coords(self.k, &r)).coords();
        for a in 0..m {
            dy[a] = y[m + a];
            dy[m + a] = acc[a];
        }
    }
}

/// Endpoint of the unit-time geodesic from `p` with initial velocity `v`.
pub fn geodesic_endpoint(p: &TargetPoint, v: &TargetTangent) -> Result<TargetPoint> {
    let k = p.k();
    let m = 2 * k + 2;
    let mut y0 = DVector::zeros(2 * m);
    for (i, x) in p.coords().into_iter().chain(v.coords()).enumerate() {
        y0[i] = x;
    }
    let mut s = Dop853::new(Geodesic { k }, 0.0, 1.0, 0.05, y0, 1e-13, 1e-13);
    s.integrate().map_err(|e| Error::SolverFailure { reason: format!("geodesic integration: {e:?}") })?;
    let y = s.y_out().last().expect("at least one output");
    Ok(TargetPoint::from_coords(k, &(0..m).map(|i| y[i]).collect::<Vec<_>>()))
}

/// Closed-form distance against geodesic flow (geodesics minimise in a
/// Hadamard manifold, so `d(p, exp_p v) = |v|`), against the homogeneous
/// lift formula, and symmetry.
pub fn distance_oracle(samples: usize, seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut flow, mut lift, mut sym) = (0.0_f64, 0.0_f64, 0.0_f64);
    for n in 0..samples {
        let k = [0usize, 1, 2][n % 3];
        let p = random_point(&mut rng, k);
        let v = random_tangent(&mut rng, k);
        let len = rng.gen_range(0.1..3.0);
        let v = v.scaled(len / metric_inner(&p, &v, &v)?.sqrt());
        let q = geodesic_endpoint(&p, &v)?;
        let d = distance(&p, &q);
        flow = flow.max((d - len).abs() / len.max(1e-3));
        lift = lift.max((d - distance_via_lift(&p, &q)).abs() / (1.0 + d));
        sym = sym.max((d - distance(&q, &p)).abs());
    }
    Ok(suite(
        "distance oracle",
        flow < 1e-6 && lift < 1e-9 && sym < 1e-12,
        format!("{samples} pairs: geodesic-flow rel. error {flow:.2e}, lift formula {lift:.2e}, asymmetry {sym:.2e}"),
    ))
}

fn order(a: f64, b: f64) -> f64 {
    (a / b).log2()
}

/// Static single-rod data: the seed is exactly harmonic, the solver must
/// leave it fixed, and the reconstructed conformal factor must converge to
/// the closed form.
pub fn schwarzschild_suite() -> Result<SuiteResult> {
    let o = KerrNewman::schwarzschild(1.0)?;
    let rods = o.rods();
    let spec = SingularMapSpec::zeros(0, 2);
    let seed = build_seed(&rods, &spec, &SeedConfig::default_for(&rods))?;
    let radius = 8.0 * rods.diameter();
    let mut sup: f64 = 0.0;
    let mut errs = Vec::new();
    for level in [1u32, 2] {
        let grid = Grid::build(&rods, radius, &GridParams::default_for(&rods).with_level(level))?;
        let (state, report) = solve_on_ball(&seed, &rods, &spec, &grid, &SolveParams::default(), None)?;
        if !report.converged {
            return Ok(suite("Schwarzschild", false, format!("no convergence at level {level}")));
        }
        sup = sup.max(state.sup_abs(0)).max(state.sup_abs(1));
        let f = reconstruct(&state, &rods, &spec, &ReconstructOptions::default_for(&rods))?;
        let mut e: f64 = 0.0;
        for &id in &grid.active {
            let x = grid.centre(id);
            if f.lambda[id].is_finite() && away_from_endpoints(&rods, x, 0.5 * rods.min_feature()) && x.r() < 0.5 * radius {
                e = e.max((f.lambda[id] - o.lambda(x)?).abs());
            }
        }
        errs.push(e);
    }
    let p = order(errs[0], errs[1]);
    Ok(suite(
        "Schwarzschild",
        sup <= 1e-8 && p >= 1.8,
        format!("sup |u_reg|, |v| = {sup:.2e}; lambda error {:.2e} -> {:.2e} (order {p:.2})", errs[0], errs[1]),
    ))
}

/// Kerr boundary data: the discrete solution and the reconstructed `w`
/// converge to the closed form at second order.
pub fn kerr_suite() -> Result<SuiteResult> {
    let o = KerrNewman::kerr(1.0, 0.5)?;
    let rods = o.rods();
    let spec = o.spec();
    let radius = 16.0;
    let margin = 0.5 * rods.min_feature();
    let mut map_err = Vec::new();
    let mut w_err = Vec::new();
    for level in [1u32, 2] {
        let grid = Grid::build(&rods, radius, &GridParams::default_for(&rods).with_level(level))?;
        let (state, report) = solve_on_ball(&o, &rods, &spec, &grid, &SolveParams::default(), None)?;
        if !report.converged {
            return Ok(suite("Kerr", false, format!("no convergence at level {level}")));
        }
        let f = reconstruct(&state, &rods, &spec, &ReconstructOptions::default_for(&rods))?;
        let w0 = o.w(grid.centre(f.w_base))?;
        let (mut e, mut ew) = (0.0_f64, 0.0_f64);
        for &id in &grid.active {
            let x = grid.centre(id);
            let p = state.regular_point(id);
            let q = o.regular_value(x)?;
            e = e.max(p.coords().iter().zip(q.coords()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            if f.w[id].is_finite() && away_from_endpoints(&rods, x, margin) && x.r() < 0.5 * radius {
                // the reconstruction is the time reverse of the closed form
                ew = ew.max((f.w[id] + (o.w(x)? - w0)).abs());
            }
        }
        map_err.push(e);
        w_err.push(ew);
    }
    let (p, pw) = (order(map_err[0], map_err[1]), order(w_err[0], w_err[1]));
    Ok(suite(
        "Kerr",
        p >= 1.5 && pw >= 1.5,
        format!(
            "map sup error {:.2e} -> {:.2e} (order {p:.2}); w error {:.2e} -> {:.2e} (order {pw:.2})",
            map_err[0], map_err[1], w_err[0], w_err[1]
        ),
    ))
}

pub fn run_all() -> Vec<SuiteResult> {
    let suites: Vec<(&str, Box<dyn Fn() -> Result<SuiteResult>>)> = vec![
        ("tension cross-check", Box::new(|| tension_crosscheck(250, 7))),
        ("distance oracle", Box::new(|| distance_oracle(60, 11))),
        ("Schwarzschild", Box::new(schwarzschild_suite)),
        ("Kerr", Box::new(kerr_suite)),
    ];
    suites
        .into_iter()
        .map(|(name, f)| f().unwrap_or_else(|e| suite(name, false, format!("error: {e}"))))
        .collect()
}
