//! Second-order forward jets in the meridional coordinates `(rho, z)`.
//!
//! A `Jet2` carries a value, its gradient and its Hessian, which is enough to
//! produce exact gradients and axisymmetric Laplacians of closed-form fields.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d: [f64; 2],
    pub h: [[f64; 2]; 2],
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; 2], h: [[0.0; 2]; 2] }
    }

    pub fn rho(rho: f64) -> Self {
        Self { v: rho, d: [1.0, 0.0], h: [[0.0; 2]; 2] }
    }

    pub fn z(z: f64) -> Self {
        Self { v: z, d: [0.0, 1.0], h: [[0.0; 2]; 2] }
    }

    /// Chain rule through a scalar function with derivatives `f1`, `f2`.
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = f1 * self.h[i][j] + f2 * (self.d[i] * self.d[j]);
            }
        }
        Self { v: f0, d: [f1 * self.d[0], f1 * self.d[1]], h }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Self {
        let x = self.v;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn powi(self, n: i32) -> Self {
        let x = self.v;
        let nf = n as f64;
        self.chain(x.powi(n), nf * x.powi(n - 1), nf * (nf - 1.0) * x.powi(n - 2))
    }

    pub fn recip(self) -> Self {
        let x = self.v;
        self.chain(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }

    pub fn acos(self) -> Self {
        let x = self.v;
        let q = 1.0 - x * x;
        self.chain(x.acos(), -1.0 / q.sqrt(), -x / (q * q.sqrt()))
    }

    pub fn scale(self, s: f64) -> Self {
        Self {
            v: s * self.v,
            d: [s * self.d[0], s * self.d[1]],
            h: [[s * self.h[0][0], s * self.h[0][1]], [s * self.h[1][0], s * self.h[1][1]]],
        }
    }

    /// `f_rr + f_r / rho + f_zz`.
    pub fn laplacian(&self, rho: f64) -> f64 {
        self.h[0][0] + self.d[0] / rho + self.h[1][1]
    }
}

impl From<f64> for Jet2 {
    fn from(v: f64) -> Self {
        Jet2::constant(v)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        let mut h = self.h;
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] += o.h[i][j];
            }
        }
        Jet2 { v: self.v + o.v, d: [self.d[0] + o.d[0], self.d[1] + o.d[1]], h }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = self.h[i][j] * o.v
                    + self.v * o.h[i][j]
                    + self.d[i] * o.d[j]
                    + self.d[j] * o.d[i];
            }
        }
        Jet2 {
            v: self.v * o.v,
            d: [self.d[0] * o.v + self.v * o.d[0], self.d[1] * o.v + self.v * o.d[1]],
            h,
        }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, c: f64) -> Jet2 {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(mut self, c: f64) -> Jet2 {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, c: f64) -> Jet2 {
        self.scale(c)
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, j: Jet2) -> Jet2 {
        j.scale(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(Jet2, Jet2) -> Jet2, rho: f64, z: f64) {
        let j = f(Jet2::rho(rho), Jet2::z(z));
        let val = |r: f64, z: f64| f(Jet2::constant(r), Jet2::constant(z)).v;
        let h = 1e-4;
        let fr = (val(rho + h, z) - val(rho - h, z)) / (2.0 * h);
        let fz = (val(rho, z + h) - val(rho, z - h)) / (2.0 * h);
        let frr = (val(rho + h, z) - 2.0 * j.v + val(rho - h, z)) / (h * h);
        let fzz = (val(rho, z + h) - 2.0 * j.v + val(rho, z - h)) / (h * h);
        let frz = (val(rho + h, z + h) - val(rho + h, z - h) - val(rho - h, z + h) + val(rho - h, z - h))
            / (4.0 * h * h);
        assert!((j.d[0] - fr).abs() < 1e-6 && (j.d[1] - fz).abs() < 1e-6);
        assert!((j.h[0][0] - frr).abs() < 1e-4 && (j.h[1][1] - fzz).abs() < 1e-4);
        assert!((j.h[0][1] - frz).abs() < 1e-4 && j.h[0][1] == j.h[1][0]);
    }

    #[test]
    fn chain_rules_match_differences() {
        fd_check(|r, z| (r * r + z * z).sqrt().ln() * z.exp(), 0.7, -0.3);
        fd_check(|r, z| (z / (r * r + z * z).sqrt()).acos() + r.powi(3) / (z + 2.0), 0.4, 0.9);
        fd_check(|r, z| (r - z * 2.0).recip() * 3.0 - r, 1.3, 0.1);
    }

    #[test]
    fn inverse_r_is_harmonic() {
        // 1/r is harmonic in R^3
        let (rho, z) = (0.8, -1.7);
        let r = (Jet2::rho(rho).powi(2) + Jet2::z(z).powi(2)).sqrt();
        assert!(r.recip().laplacian(rho).abs() < 1e-13);
    }
}
