//! Deterministic convergence of the discrete operators to their continuum
//! counterparts as the lattice is refined.

use serde::Serialize;

use crate::fields::{discrete_generator, grad, tilted_grad};
use crate::kernel::{moments, RateKernel};
use crate::stats::loglog_fit;
use crate::testfn::TestFunction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub lemma: String,
    /// Refinement parameter per entry (`n` or `ell`).
    pub params: Vec<f64>,
    pub errors: Vec<f64>,
    pub exponent: f64,
    pub pass: bool,
}

impl LemmaReport {
    /// Pass when the errors strictly decrease and the fitted exponent is
    /// negative.
    pub fn decreasing(lemma: &str, params: Vec<f64>, errors: Vec<f64>) -> Self {
        let (exponent, _) = loglog_fit(&params, &errors);
        let pass = errors.windows(2).all(|w| w[1] < w[0]) && exponent < 0.0;
        Self {
            lemma: lemma.into(),
            params,
            errors,
            exponent,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppendixReport {
    /// `sup_x |S_n f - sigma^2 f''/2|`
    pub generator_sup: LemmaReport,
    /// `(1/n) sum_x |S_n f - sigma^2 f''/2|`
    pub generator_l1: LemmaReport,
    /// `|(1/n) sum_{x,y} s(y-x) (grad f)^2 - sigma^2 ||f'||^2|`
    pub energy: LemmaReport,
    /// `(1/n) sum_x (tilted f - m f')^2`
    pub tilted: LemmaReport,
    /// `(1/n) sum_{x,y} s(y-x) (grad f)^2` at the finest `n`.
    pub energy_at_finest: f64,
    /// `sigma^2 ||f'||^2`
    pub energy_limit: f64,
}

impl AppendixReport {
    pub fn pass(&self) -> bool {
        [&self.generator_sup, &self.generator_l1, &self.energy, &self.tilted]
            .iter()
            .all(|r| r.pass)
    }

    pub fn energy_relative_error(&self) -> f64 {
        (self.energy_at_finest / self.energy_limit - 1.0).abs()
    }
}

/// Error sequences of the four discrete approximations over `n_list`
/// (ascending), on the torus of `f`.
pub fn check_appendix_lemmas(f: &TestFunction, kernel: &RateKernel, n_list: &[u64]) -> AppendixReport {
    let mo = moments(kernel);
    let r = kernel.support_radius() as i64;
    let limit = mo.sigma2 * f.d1_l2_norm_sq();
    let (mut a, mut b, mut c, mut d) = (vec![], vec![], vec![], vec![]);
    let mut energy = 0.0;
    for &n in n_list {
        let nf = n as f64;
        let sites = (f.length() * nf).round() as i64;
        let (mut sup, mut l1, mut en, mut tl) = (0.0f64, 0.0, 0.0, 0.0);
        for x in 0..sites {
            let u = x as f64 / nf;
            let e = (discrete_generator(f, kernel, n, x) - 0.5 * mo.sigma2 * f.d2(u)).abs();
            sup = sup.max(e);
            l1 += e;
            for z in (-r..=r).filter(|&z| z != 0) {
                en += kernel.s(z) * grad(f, n, x, z).powi(2);
            }
            tl += (tilted_grad(f, kernel, n, x) - mo.m * f.d1(u)).powi(2);
        }
        a.push(sup);
        b.push(l1 / nf);
        energy = en / nf;
        c.push((energy - limit).abs());
        d.push(tl / nf);
    }
    let ns: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    AppendixReport {
        generator_sup: LemmaReport::decreasing("generator_sup", ns.clone(), a),
        generator_l1: LemmaReport::decreasing("generator_l1", ns.clone(), b),
        energy: LemmaReport::decreasing("energy", ns.clone(), c),
        tilted: LemmaReport::decreasing("tilted_gradient", ns, d),
        energy_at_finest: energy,
        energy_limit: limit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NS: [u64; 4] = [32, 64, 128, 256];

    #[test]
    fn nearest_neighbour_sequences_decay_at_second_order() {
        let f = TestFunction::gaussian(2.0, 0.3, 4.0).unwrap();
        let k = RateKernel::nearest_neighbor(1.0).unwrap();
        let rep = check_appendix_lemmas(&f, &k, &NS);
        assert!(rep.pass());
        // Taylor oracle: the leading remainder of the symmetric stencil is
        // f''''/(24 n^2), so the sup error scales as n^-2
        assert!((rep.generator_sup.exponent + 2.0).abs() < 0.1, "{}", rep.generator_sup.exponent);
        assert!(rep.energy_relative_error() < 0.02);
    }

    #[test]
    fn sup_error_matches_fourth_derivative_remainder() {
        // S_n f - f''/2 = f''''/(24 n^2) + O(n^-4) for the nearest-neighbour stencil;
        // the fourth derivative is approximated by differencing the exact third
        let f = TestFunction::gaussian(2.0, 0.3, 4.0).unwrap();
        let k = RateKernel::nearest_neighbor(1.0).unwrap();
        let n = 256u64;
        let h = 1e-4;
        let (mut worst, mut scale) = (0.0f64, 0.0f64);
        for x in 0..1024i64 {
            let u = x as f64 / 256.0;
            let d4 = (f.d3(u + h) - f.d3(u - h)) / (2.0 * h);
            let predicted = d4 / (24.0 * 65536.0);
            let actual = discrete_generator(&f, &k, n, x) - 0.5 * f.d2(u);
            worst = worst.max((actual - predicted).abs());
            scale = scale.max(predicted.abs());
        }
        assert!(worst < 0.01 * scale, "{worst} vs {scale}");
    }

    #[test]
    fn power_law_sequences_decrease() {
        let f = TestFunction::gaussian(2.0, 0.3, 4.0).unwrap();
        let k = RateKernel::power_law(3.0, 8, None, 1.0).unwrap();
        let rep = check_appendix_lemmas(&f, &k, &NS);
        assert!(rep.pass(), "{rep:?}");
        assert!(rep.energy_relative_error() < 0.02);
    }

    #[test]
    fn odd_function_has_no_generator_at_its_centre() {
        let f = TestFunction::new(
            crate::testfn::TestFamily::Hermite { order: 1, center: 2.0, scale: 0.5 },
            4.0,
        )
        .unwrap();
        let k = RateKernel::nearest_neighbor(1.0).unwrap();
        assert!(discrete_generator(&f, &k, 32, 64).abs() < 1e-9);
    }
}
