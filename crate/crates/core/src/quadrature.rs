//! Thin wrappers over the quadrature crates used across the solver.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

/// Shared 8-point Gauss-Legendre rule, used for face conductances.
pub fn gauss8() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(8).unwrap()))
}

/// Fixed-order Gauss-Legendre integral of `f` over `[a, b]`.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    gauss8().integrate(a, b, f)
}

/// Adaptive tanh-sinh integral over a finite interval.
pub fn adaptive<F: Fn(f64) -> f64>(a: f64, b: f64, tol: f64, f: F) -> f64 {
    quadrature::double_exponential::integrate(f, a, b, tol).integral
}

/// Adaptive integral of `f` over `[a, inf)`, through `t = a + s / (1 - s)`.
pub fn adaptive_to_infinity<F: Fn(f64) -> f64>(a: f64, tol: f64, f: F) -> f64 {
    let g = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - s;
        let t = a + s / q;
        let val = f(t) / (q * q);
        if val.is_finite() {
            val
        } else {
            0.0
        }
    };
    quadrature::double_exponential::integrate(g, 0.0, 1.0, tol).integral
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = gauss_legendre(-1.0, 2.0, |x| x.powi(7) - 3.0 * x * x);
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn semi_infinite() {
        let v = adaptive_to_infinity(1.0, 1e-12, |t| 1.0 / (t * t));
        assert!((v - 1.0).abs() < 1e-10);
        let v = adaptive_to_infinity(0.0, 1e-12, |t| (-t).exp());
        assert!((v - 1.0).abs() < 1e-10);
    }
}
