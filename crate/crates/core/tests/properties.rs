use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use axiharm::rod_structure::{RodConfig, SingularMapSpec};
use axiharm::seed_map::{build_seed, SeedConfig};
use axiharm::solver::{discrete_energy, FieldState, Grid, GridParams};
use axiharm::target_geometry::{
    christoffel_tension, distance, gauge_normalize, metric_inner, metric_matrix, tension, GaugeIsometry, MapJet,
    TargetPoint, TargetTangent,
};

fn point(k: usize) -> impl Strategy<Value = TargetPoint> {
    (-2.0..2.0f64, -3.0..3.0f64, prop::collection::vec(-2.0..2.0f64, 2 * k))
        .prop_map(move |(u, v, x)| TargetPoint::new(u, v, x[..k].to_vec(), x[k..].to_vec()))
}

fn tangent(k: usize) -> impl Strategy<Value = TargetTangent> {
    prop::collection::vec(-2.0..2.0f64, 2 * k + 2).prop_map(move |x| TargetTangent::from_coords(k, &x))
}

fn point_pair() -> impl Strategy<Value = (TargetPoint, TargetPoint)> {
    (0usize..3).prop_flat_map(|k| (point(k), point(k)))
}

fn point_triple() -> impl Strategy<Value = (TargetPoint, TargetPoint, TargetPoint)> {
    (0usize..3).prop_flat_map(|k| (point(k), point(k), point(k)))
}

fn jet() -> impl Strategy<Value = MapJet> {
    (0usize..4).prop_flat_map(|k| {
        (point(k), tangent(k), tangent(k), tangent(k)).prop_map(|(p, a, b, l)| MapJet { point: p, grad: [a, b], lap: l })
    })
}

fn isometry(k: usize) -> impl Strategy<Value = GaugeIsometry> {
    (-3.0..3.0f64, prop::collection::vec(-2.0..2.0f64, 2 * k)).prop_map(move |(c, x)| GaugeIsometry {
        shift_v: c,
        shift_chi: x[..k].to_vec(),
        shift_psi: x[k..].to_vec(),
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Geodesic equation integrated with classical RK4, Christoffel symbols from
/// central differences of the metric matrix and a dense inverse.
fn rk4_geodesic(p: &TargetPoint, v: &TargetTangent, steps: usize) -> TargetPoint {
    let k = p.k();
    let m = 2 * k + 2;
    let accel = |x: &[f64], xd: &[f64]| -> Vec<f64> {
        let at = |y: &[f64]| metric_matrix(&TargetPoint::from_coords(k, y));
        let g = at(x);
        let h = 1e-5;
        let dg: Vec<DMatrix<f64>> = (0..m)
            .map(|c| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[c] += h;
                b[c] -= h;
                (at(&a) - at(&b)) / (2.0 * h)
            })
            .collect();
        let mut rhs = DVector::zeros(m);
        for a in 0..m {
            let mut s = 0.0;
            for b in 0..m {
                for c in 0..m {
                    s += (dg[b][(a, c)] + dg[c][(a, b)] - dg[a][(b, c)]) * xd[b] * xd[c];
                }
            }
            rhs[a] = -0.5 * s;
        }
        let sol = g.try_inverse().expect("metric is invertible") * rhs;
        sol.iter().copied().collect()
    };
    let mut y: Vec<f64> = p.coords().into_iter().chain(v.coords()).collect();
    let f = |y: &[f64]| -> Vec<f64> {
        let a = accel(&y[..m], &y[m..]);
        y[m..].iter().copied().chain(a).collect()
    };
    let dt = 1.0 / steps as f64;
    let add = |y: &[f64], k: &[f64], s: f64| y.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&add(&y, &k1, 0.5 * dt));
        let k3 = f(&add(&y, &k2, 0.5 * dt));
        let k4 = f(&add(&y, &k3, dt));
        for i in 0..2 * m {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    TargetPoint::from_coords(k, &y[..m])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tension_agrees_with_christoffel_form(j in jet()) {
        let a = tension(&j).unwrap().coords();
        let b = christoffel_tension(&j).unwrap().coords();
        let scale = 1.0 + b.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        prop_assert!(max_abs_diff(&a, &b) / scale <= 1e-10);
    }

    #[test]
    fn metric_is_positive_definite(p in (0usize..4).prop_flat_map(|k| (point(k), tangent(k)))) {
        let (p, x) = p;
        let n2: f64 = x.coords().iter().map(|c| c * c).sum();
        prop_assume!(n2 > 1e-6);
        prop_assert!(metric_inner(&p, &x, &x).unwrap() > 0.0);
        let g = metric_matrix(&p);
        prop_assert!(g.clone().cholesky().is_some());
        prop_assert!((g.clone() - g.transpose()).amax() <= 1e-14 * g.amax());
    }

    #[test]
    fn distance_is_a_metric((p, q, r) in point_triple()) {
        let (dpq, dqp) = (distance(&p, &q), distance(&q, &p));
        prop_assert!(dpq >= 0.0);
        prop_assert!((dpq - dqp).abs() <= 1e-12 * (1.0 + dpq));
        prop_assert!(distance(&p, &p) <= 1e-7);
        let slack = 1e-9 * (1.0 + dpq);
        prop_assert!(dpq <= distance(&p, &r) + distance(&r, &q) + slack);
    }

    #[test]
    fn gauge_isometries_preserve_distance(((p, q), iso) in point_pair().prop_flat_map(|(p, q)| {
        let k = p.k();
        (Just((p, q)), isometry(k))
    })) {
        let d = distance(&p, &q);
        let di = distance(&iso.apply(&p), &iso.apply(&q));
        prop_assert!((d - di).abs() <= 1e-9 * (1.0 + d));
        let back = iso.inverse().apply(&iso.apply(&p));
        prop_assert!(max_abs_diff(&back.coords(), &p.coords()) <= 1e-12);
    }

    #[test]
    fn tension_is_gauge_equivariant((j, iso) in jet().prop_flat_map(|j| {
        let k = j.point.k();
        (Just(j), isometry(k))
    })) {
        // the isometry is affine in these coordinates, so jets move by its differential
        let k = j.point.k();
        let moved = MapJet {
            point: iso.apply(&j.point),
            grad: [iso.push(&j.grad[0]), iso.push(&j.grad[1])],
            lap: iso.push(&j.lap),
        };
        let a = tension(&moved).unwrap();
        let b = iso.push(&tension(&j).unwrap());
        let scale = 1.0 + b.max_abs();
        prop_assert!(max_abs_diff(&a.coords(), &b.coords()) / scale <= 1e-10, "{k}");
    }

    #[test]
    fn normalisation_zeroes_the_first_constant(pts in (0usize..3).prop_flat_map(|k| prop::collection::vec(point(k), 2..5))) {
        let pts: Vec<TargetPoint> = pts.into_iter().map(|mut p| { p.u = 0.0; p.chi.iter_mut().for_each(|c| *c = 0.0); p }).collect();
        let (iso, mapped) = gauge_normalize(&pts).unwrap();
        prop_assert!(mapped[0].v.abs() <= 1e-12);
        prop_assert!(mapped[0].psi.iter().all(|x| x.abs() <= 1e-12));
        for (a, b) in pts.iter().zip(&mapped) {
            prop_assert!(max_abs_diff(&iso.inverse().apply(b).coords(), &a.coords()) <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn geodesics_realise_the_distance((p, v, len) in (0usize..3).prop_flat_map(|k| (point(k), tangent(k), 0.2..2.5f64))) {
        let n = metric_inner(&p, &v, &v).unwrap().sqrt();
        prop_assume!(n > 1e-3);
        let v = v.scaled(len / n);
        let q = rk4_geodesic(&p, &v, 400);
        let d = distance(&p, &q);
        prop_assert!((d - len).abs() <= 1e-6 * len, "d = {d}, |v| = {len}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn discrete_energy_is_gauge_invariant(iso in isometry(1)) {
        let rods = RodConfig::new(vec![(-1.0, 1.0)]).unwrap();
        let pts = vec![TargetPoint::new(0.0, 0.0, vec![0.0], vec![0.0]), TargetPoint::new(0.0, 0.8, vec![0.0], vec![-0.3])];
        let spec = SingularMapSpec::from_points(1, &pts, true);
        let moved: Vec<TargetPoint> = pts.iter().map(|p| iso.apply(p)).collect();
        let spec_moved = SingularMapSpec::from_points(1, &moved, true);
        let seed = build_seed(&rods, &spec, &SeedConfig::default_for(&rods)).unwrap();
        let grid = Grid::build(&rods, 8.0, &GridParams::default_for(&rods).with_level(0)).unwrap();
        let state = FieldState::from_boundary(&grid, &seed).unwrap();
        let mut shifted = state.clone();
        for id in 0..grid.num_cells() {
            let p = iso.apply(&state.regular_point(id));
            for (f, x) in p.coords().into_iter().enumerate() {
                shifted.fields[f][id] = x;
            }
        }
        let e0 = discrete_energy(&state, &rods, &spec).unwrap();
        let e1 = discrete_energy(&shifted, &rods, &spec_moved).unwrap();
        prop_assert!((e0 - e1).abs() <= 1e-9 * (1.0 + e0.abs()), "{e0} vs {e1}");
    }
}

#[test]
fn geodesic_oracle_on_a_vertical_line() {
    // u-lines are unit-speed geodesics
    let p = TargetPoint::new(0.3, 0.1, vec![0.2], vec![-0.4]);
    let v = TargetTangent::new(1.7, 0.0, vec![0.0], vec![0.0]);
    let q = rk4_geodesic(&p, &v, 200);
    assert!((q.u - 2.0).abs() < 1e-12);
    assert!((distance(&p, &q) - 1.7).abs() < 1e-10);
}
