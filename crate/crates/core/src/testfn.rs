//! Smooth test functions periodized onto the macroscopic torus `[0, L)`.
//!
//! Every family is `P(v) exp(-v^2 / 2)` with `v = (u - center) / scale` and
//! `P` a polynomial (a Hermite polynomial, or `1` for the Gaussian bump).
//! Derivatives stay in that form, which keeps values, derivatives and the
//! `L^2` norms of the periodization in closed form.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TestFamily {
    Gaussian { center: f64, width: f64 },
    Hermite { order: usize, center: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TestFnError {
    #[error("test function parameter out of range: {0}")]
    BadParameter(String),
}

/// Images with Gaussian factor below this are dropped from the periodization.
const IMAGE_CUTOFF_V: f64 = 12.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    family: TestFamily,
    length: f64,
    center: f64,
    scale: f64,
    /// `polys[j]` gives `d^j/du^j f = polys[j](v) exp(-v^2/2) / scale^j`.
    polys: [Vec<f64>; 4],
    images: i64,
    sup: f64,
    sup_d2: f64,
    l2_sq: f64,
    d1_l2_sq: f64,
}

fn hermite(order: usize) -> Vec<f64> {
    let mut prev = vec![1.0];
    if order == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 2.0];
    for k in 1..order {
        // H_{k+1} = 2v H_k - 2k H_{k-1}
        let mut next = vec![0.0; k + 2];
        for (i, &c) in cur.iter().enumerate() {
            next[i + 1] += 2.0 * c;
        }
        for (i, &c) in prev.iter().enumerate() {
            next[i] -= 2.0 * k as f64 * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// `P -> P' - v P`, the derivative of `P(v) exp(-v^2/2)` in `v`.
fn gauss_derivative(p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 1];
    for (i, &c) in p.iter().enumerate() {
        if i > 0 {
            out[i - 1] += i as f64 * c;
        }
        out[i + 1] -= c;
    }
    out
}

fn poly_eval(p: &[f64], v: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * v + c)
}

/// Coefficients of `P(s + shift)`.
fn poly_shift(p: &[f64], shift: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for (i, &c) in p.iter().enumerate() {
        // (s + a)^i = sum_j C(i, j) a^(i-j) s^j
        let mut binom = 1.0;
        for (j, o) in out.iter_mut().enumerate().take(i + 1) {
            *o += c * binom * shift.powi((i - j) as i32);
            binom = binom * (i - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &a) in p.iter().enumerate() {
        for (j, &b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// `int_R P(s) exp(-s^2) ds`.
fn gauss_moment_integral(p: &[f64]) -> f64 {
    let mut moment = std::f64::consts::PI.sqrt();
    let mut total = 0.0;
    for (k, &c) in p.iter().enumerate().step_by(2) {
        total += c * moment;
        // Gamma(k/2 + 3/2) = (k/2 + 1/2) Gamma(k/2 + 1/2)
        moment *= (k as f64 + 1.0) / 2.0;
    }
    total
}

impl TestFunction {
    pub fn new(family: TestFamily, length: f64) -> Result<Self, TestFnError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(TestFnError::BadParameter(format!("length {length}")));
        }
        let (base, center, scale) = match family {
            TestFamily::Gaussian { center, width } => (vec![1.0], center, width),
            TestFamily::Hermite {
                order,
                center,
                scale,
            } => {
                if order > 12 {
                    return Err(TestFnError::BadParameter(format!("hermite order {order}")));
                }
                (hermite(order), center, scale)
            }
        };
        if !(scale > 0.0 && scale.is_finite() && center.is_finite()) {
            return Err(TestFnError::BadParameter(format!(
                "center {center}, scale {scale}"
            )));
        }
        let d1 = gauss_derivative(&base);
        let d2 = gauss_derivative(&d1);
        let d3 = gauss_derivative(&d2);
        let images = ((IMAGE_CUTOFF_V + 6.0) * scale / length).ceil() as i64 + 1;
        let mut f = Self {
            family,
            length,
            center,
            scale,
            polys: [base, d1, d2, d3],
            images,
            sup: 0.0,
            sup_d2: 0.0,
            l2_sq: 0.0,
            d1_l2_sq: 0.0,
        };
        f.l2_sq = f.periodic_l2_sq(0);
        f.d1_l2_sq = f.periodic_l2_sq(1);
        f.sup = f.sup_abs(0);
        f.sup_d2 = f.sup_abs(2);
        Ok(f)
    }

    pub fn gaussian(center: f64, width: f64, length: f64) -> Result<Self, TestFnError> {
        Self::new(TestFamily::Gaussian { center, width }, length)
    }

    pub fn family(&self) -> &TestFamily {
        &self.family
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// `j`-th derivative of the periodized function, `j <= 3`.
    pub fn deriv(&self, j: usize, u: f64) -> f64 {
        let poly = &self.polys[j];
        let mut acc = 0.0;
        for k in -self.images..=self.images {
            let v = (u + k as f64 * self.length - self.center) / self.scale;
            if v.abs() > IMAGE_CUTOFF_V + 6.0 {
                continue;
            }
            acc += poly_eval(poly, v) * (-0.5 * v * v).exp();
        }
        acc / self.scale.powi(j as i32)
    }

    pub fn value(&self, u: f64) -> f64 {
        self.deriv(0, u)
    }

    pub fn d1(&self, u: f64) -> f64 {
        self.deriv(1, u)
    }

    pub fn d2(&self, u: f64) -> f64 {
        self.deriv(2, u)
    }

    pub fn d3(&self, u: f64) -> f64 {
        self.deriv(3, u)
    }

    /// `sup |f|`.
    pub fn sup_norm(&self) -> f64 {
        self.sup
    }

    /// `sup |f''|`.
    pub fn sup_norm_d2(&self) -> f64 {
        self.sup_d2
    }

    /// `||f||^2` over one period.
    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_sq
    }

    /// `||f'||^2` over one period.
    pub fn d1_l2_norm_sq(&self) -> f64 {
        self.d1_l2_sq
    }

    /// `int_0^L (f^(j))^2 = sum_k int_R g(u) g(u + kL) du`, each term exact.
    fn periodic_l2_sq(&self, j: usize) -> f64 {
        let poly = &self.polys[j];
        let mut total = 0.0;
        let kmax = 2 * self.images + 1;
        for k in -kmax..=kmax {
            let d = k as f64 * self.length / self.scale;
            let weight = (-0.25 * d * d).exp();
            if weight == 0.0 {
                continue;
            }
            let prod = poly_mul(&poly_shift(poly, -0.5 * d), &poly_shift(poly, 0.5 * d));
            total += weight * gauss_moment_integral(&prod);
        }
        total * self.scale / self.scale.powi(2 * j as i32)
    }

    fn sup_abs(&self, j: usize) -> f64 {
        let samples = 8192 * (self.length.ceil() as usize).max(1);
        let h = self.length / samples as f64;
        let (mut best_u, mut best) = (0.0, 0.0f64);
        for i in 0..samples {
            let u = i as f64 * h;
            let v = self.deriv(j, u).abs();
            if v > best {
                best = v;
                best_u = u;
            }
        }
        // golden-section refinement around the best sample
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (best_u - h, best_u + h);
        for _ in 0..60 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if self.deriv(j, a).abs() > self.deriv(j, b).abs() {
                hi = b;
            } else {
                lo = a;
            }
        }
        best.max(self.deriv(j, 0.5 * (lo + hi)).abs())
    }

    /// `int_0^L g(u) du` by the periodic trapezoid rule (spectrally accurate).
    pub fn periodic_quadrature(&self, points: usize, g: impl Fn(f64) -> f64) -> f64 {
        let h = self.length / points as f64;
        (0..points).map(|i| g(i as f64 * h)).sum::<f64>() * h
    }
}
