//! Exact oracles on small tori: every expectation under the uniform
//! (Bernoulli(1/2)) product measure is an average over all `2^N`
//! configurations, encoded as bitmasks with site `x` at bit `x`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::kernel::{moments, RateKernel};

/// Largest torus handled by exact enumeration.
pub const MAX_SITES: usize = 20;

/// Relative slack for inequalities whose two sides may coincide exactly.
const INEQ_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnumerationError {
    #[error("{0} sites exceed the enumeration limit of {MAX_SITES}")]
    WindowTooLarge(usize),
    #[error("table has {got} entries, window {window} needs {expected}")]
    BadTable {
        window: usize,
        got: usize,
        expected: usize,
    },
    #[error("window {window} does not fit on {n_sites} sites")]
    WindowExceedsLattice { window: usize, n_sites: usize },
    #[error("displacement {z} outside 1..={max}")]
    BadDisplacement { z: usize, max: usize },
}

/// Function of the occupancies of `window` consecutive sites starting at
/// `anchor`, given by a table indexed by the window bits.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFunction {
    window: usize,
    anchor: usize,
    table: Vec<f64>,
}

impl LocalFunction {
    pub fn new(window: usize, anchor: usize, table: Vec<f64>) -> Result<Self, EnumerationError> {
        if window > MAX_SITES {
            return Err(EnumerationError::WindowTooLarge(window));
        }
        if table.len() != 1 << window {
            return Err(EnumerationError::BadTable {
                window,
                got: table.len(),
                expected: 1 << window,
            });
        }
        Ok(Self {
            window,
            anchor,
            table,
        })
    }

    /// Table entries i.i.d. standard normal.
    pub fn random<R: Rng + ?Sized>(
        window: usize,
        anchor: usize,
        rng: &mut R,
    ) -> Result<Self, EnumerationError> {
        if window > MAX_SITES {
            return Err(EnumerationError::WindowTooLarge(window));
        }
        let table = (0..1usize << window).map(|_| rng.sample(StandardNormal)).collect();
        Self::new(window, anchor, table)
    }

    pub fn constant(window: usize, anchor: usize, value: f64) -> Result<Self, EnumerationError> {
        Self::new(window, anchor, vec![value; 1 << window.min(MAX_SITES + 1)])
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    /// Value at the configuration `mask` of an `n_sites` torus.
    #[inline]
    pub fn eval_mask(&self, mask: u64, n_sites: usize) -> f64 {
        let mut idx = 0usize;
        for k in 0..self.window {
            let site = (self.anchor + k) % n_sites;
            idx |= ((mask >> site & 1) as usize) << k;
        }
        self.table[idx]
    }

    pub fn eval(&self, config: &crate::lattice::Configuration) -> f64 {
        let n = config.n_sites();
        let mut idx = 0usize;
        for k in 0..self.window {
            idx |= (config.occupied((self.anchor + k) % n) as usize) << k;
        }
        self.table[idx]
    }

    /// Values at all `2^n_sites` configurations.
    pub fn tabulate(&self, n_sites: usize) -> Result<Vec<f64>, EnumerationError> {
        check_sites(n_sites)?;
        if self.window > n_sites {
            return Err(EnumerationError::WindowExceedsLattice {
                window: self.window,
                n_sites,
            });
        }
        Ok((0..1u64 << n_sites).map(|m| self.eval_mask(m, n_sites)).collect())
    }
}

fn check_sites(n_sites: usize) -> Result<(), EnumerationError> {
    if n_sites > MAX_SITES {
        Err(EnumerationError::WindowTooLarge(n_sites))
    } else {
        Ok(())
    }
}

/// `I_{y,y'}` from a full table of values.
fn swap_energy(values: &[f64], y: usize, yp: usize) -> f64 {
    let (by, byp) = (1usize << y, 1usize << yp);
    let mut sum = 0.0;
    for (m, &v) in values.iter().enumerate() {
        if ((m & by) == 0) != ((m & byp) == 0) {
            sum += (values[m ^ by ^ byp] - v).powi(2);
        }
    }
    sum / values.len() as f64
}

/// `I_{y,y'}(h) = E[(h(eta^{y,y'}) - h(eta))^2]`.
pub fn dirichlet_i(
    h: &LocalFunction,
    y: usize,
    yp: usize,
    n_sites: usize,
) -> Result<f64, EnumerationError> {
    let values = h.tabulate(n_sites)?;
    Ok(swap_energy(&values, y % n_sites, yp % n_sites))
}

/// `I_{x, x+z}` for every site `x` and `1 <= z <= zmax`, indexed `[z-1][x]`.
pub fn bond_energies(values: &[f64], n_sites: usize, zmax: usize) -> Vec<Vec<f64>> {
    (1..=zmax)
        .map(|z| {
            (0..n_sites)
                .map(|x| swap_energy(values, x, (x + z) % n_sites))
                .collect()
        })
        .collect()
}

fn nn_form(bonds: &[Vec<f64>]) -> f64 {
    0.5 * bonds[0].iter().sum::<f64>()
}

fn kernel_form(bonds: &[Vec<f64>], kernel: &RateKernel) -> f64 {
    0.5 * bonds
        .iter()
        .enumerate()
        .map(|(k, row)| kernel.s(k as i64 + 1) * row.iter().sum::<f64>())
        .sum::<f64>()
}

/// `D(h) = 1/2 sum_x I_{x,x+1}(h)` on the torus.
pub fn dirichlet_form(h: &LocalFunction, n_sites: usize) -> Result<f64, EnumerationError> {
    let values = h.tabulate(n_sites)?;
    Ok(nn_form(&bond_energies(&values, n_sites, 1)))
}

/// `<h, -S h> = 1/2 sum_{x, z>0} s(z) I_{x,x+z}(h)` on the torus.
pub fn generator_form(
    h: &LocalFunction,
    kernel: &RateKernel,
    n_sites: usize,
) -> Result<f64, EnumerationError> {
    let values = h.tabulate(n_sites)?;
    Ok(kernel_form(
        &bond_energies(&values, n_sites, kernel.support_radius()),
        kernel,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MovingParticleCheck {
    pub x: usize,
    pub z: usize,
    /// `I_{x,x+z}`
    pub lhs: f64,
    /// `sum_{y=x}^{x+z-1} I_{y,y+1}`
    pub path_sum: f64,
    pub factor: f64,
    pub violations: usize,
}

impl MovingParticleCheck {
    /// Smallest factor that would make the inequality hold for this `h`.
    pub fn minimal_factor(&self) -> f64 {
        if self.path_sum > 0.0 {
            self.lhs / self.path_sum
        } else {
            0.0
        }
    }
}

fn moving_from_bonds(bonds: &[Vec<f64>], n_sites: usize, x: usize, z: usize) -> MovingParticleCheck {
    let lhs = bonds[z - 1][x];
    let path_sum: f64 = (0..z).map(|k| bonds[0][(x + k) % n_sites]).sum();
    let factor = 4.0 * z as f64 - 3.0;
    let violations = usize::from(lhs > factor * path_sum * (1.0 + INEQ_SLACK) + f64::MIN_POSITIVE);
    MovingParticleCheck {
        x,
        z,
        lhs,
        path_sum,
        factor,
        violations,
    }
}

/// `I_{x,x+z}(h) <= (4z - 3) sum_{y=x}^{x+z-1} I_{y,y+1}(h)`, both sides exact.
pub fn check_moving_particle(
    h: &LocalFunction,
    x: usize,
    z: usize,
    n_sites: usize,
) -> Result<MovingParticleCheck, EnumerationError> {
    if z == 0 || 2 * z > n_sites {
        return Err(EnumerationError::BadDisplacement {
            z,
            max: n_sites / 2,
        });
    }
    let values = h.tabulate(n_sites)?;
    let bonds = bond_energies(&values, n_sites, z);
    Ok(moving_from_bonds(&bonds, n_sites, x % n_sites, z))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MovingParticleSuite {
    pub n_sites: usize,
    pub trials: usize,
    pub checks: usize,
    pub violations: usize,
    /// Largest `I_{x,x+z} / sum I_{y,y+1}` seen, per `z = 1, 2, ...`.
    pub minimal_factor: Vec<f64>,
}

/// Moving-particle inequality over `trials` random full-width local
/// functions, every `x` and every `z <= zmax`.
pub fn moving_particle_suite<R: Rng + ?Sized>(
    n_sites: usize,
    zmax: usize,
    trials: usize,
    rng: &mut R,
) -> Result<MovingParticleSuite, EnumerationError> {
    check_sites(n_sites)?;
    if zmax == 0 || 2 * zmax > n_sites {
        return Err(EnumerationError::BadDisplacement {
            z: zmax,
            max: n_sites / 2,
        });
    }
    let mut suite = MovingParticleSuite {
        n_sites,
        trials,
        checks: 0,
        violations: 0,
        minimal_factor: vec![0.0; zmax],
    };
    for _ in 0..trials {
        let h = LocalFunction::random(n_sites, 0, rng)?;
        let values = h.tabulate(n_sites)?;
        let bonds = bond_energies(&values, n_sites, zmax);
        for z in 1..=zmax {
            for x in 0..n_sites {
                let c = moving_from_bonds(&bonds, n_sites, x, z);
                suite.checks += 1;
                suite.violations += c.violations;
                suite.minimal_factor[z - 1] = suite.minimal_factor[z - 1].max(c.minimal_factor());
            }
        }
    }
    Ok(suite)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub n_sites: usize,
    pub trials: usize,
    pub c1: f64,
    pub c2: f64,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// Range of `D(h) / <h, -S h>` over the trials.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl EquivalenceReport {
    pub fn pass(&self) -> bool {
        self.lower_violations == 0 && self.upper_violations == 0
    }
}

/// `c1 <h,-Sh> <= D(h) <= c2 <h,-Sh>` for random local functions spanning
/// the whole torus.
pub fn check_equiv_dirichlet<R: Rng + ?Sized>(
    kernel: &RateKernel,
    n_sites: usize,
    trials: usize,
    rng: &mut R,
) -> Result<EquivalenceReport, EnumerationError> {
    check_sites(n_sites)?;
    let mo = moments(kernel);
    let zmax = kernel.support_radius();
    let mut rep = EquivalenceReport {
        n_sites,
        trials,
        c1: mo.c1,
        c2: mo.c2,
        lower_violations: 0,
        upper_violations: 0,
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
    };
    for _ in 0..trials {
        let h = LocalFunction::random(n_sites, 0, rng)?;
        let values = h.tabulate(n_sites)?;
        let bonds = bond_energies(&values, n_sites, zmax);
        let d = nn_form(&bonds);
        let g = kernel_form(&bonds, kernel);
        if mo.c1 * g > d * (1.0 + INEQ_SLACK) {
            rep.lower_violations += 1;
        }
        if d > mo.c2 * g * (1.0 + INEQ_SLACK) {
            rep.upper_violations += 1;
        }
        if g > 0.0 {
            rep.min_ratio = rep.min_ratio.min(d / g);
            rep.max_ratio = rep.max_ratio.max(d / g);
        }
    }
    Ok(rep)
}

/// True when `values` depends on the configuration only through its
/// particle number.
pub fn is_sector_constant(values: &[f64], tol: f64) -> bool {
    let mut seen: Vec<Option<f64>> = vec![None; 65];
    values.iter().enumerate().all(|(m, &v)| {
        let k = (m as u64).count_ones() as usize;
        match seen[k] {
            None => {
                seen[k] = Some(v);
                true
            }
            Some(w) => (v - w).abs() <= tol,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_h_has_no_energy() {
        let h = LocalFunction::constant(4, 1, 2.5).unwrap();
        assert_eq!(dirichlet_i(&h, 0, 3, 8).unwrap(), 0.0);
        assert_eq!(dirichlet_form(&h, 8).unwrap(), 0.0);
        let k = RateKernel::power_law(3.0, 3, None, 1.0).unwrap();
        assert_eq!(generator_form(&h, &k, 8).unwrap(), 0.0);
    }

    #[test]
    fn occupation_function_energy_is_half() {
        let h = LocalFunction::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert!((dirichlet_i(&h, 2, 5, 8).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(dirichlet_i(&h, 3, 5, 8).unwrap(), 0.0);
    }

    #[test]
    fn swap_energy_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = LocalFunction::random(8, 0, &mut rng).unwrap();
        for y in 0..8 {
            for yp in 0..8 {
                assert_eq!(dirichlet_i(&h, y, yp, 8).unwrap(), dirichlet_i(&h, yp, y, 8).unwrap());
            }
        }
    }

    #[test]
    fn nearest_neighbour_forms_are_proportional() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = RateKernel::nearest_neighbor(1.0).unwrap();
        for _ in 0..50 {
            let h = LocalFunction::random(8, 0, &mut rng).unwrap();
            let d = dirichlet_form(&h, 8).unwrap();
            let g = generator_form(&h, &k, 8).unwrap();
            assert!((d - 2.0 * g).abs() <= 1e-12);
        }
    }

    #[test]
    fn forms_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = RateKernel::power_law(3.0, 3, None, 1.0).unwrap();
        for _ in 0..1000 {
            let h = LocalFunction::random(6, 0, &mut rng).unwrap();
            assert!(dirichlet_form(&h, 6).unwrap() >= 0.0);
            assert!(generator_form(&h, &k, 6).unwrap() >= 0.0);
        }
    }

    #[test]
    fn moving_particle_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = LocalFunction::random(6, 0, &mut rng).unwrap();
        let c = check_moving_particle(&h, 2, 1, 6).unwrap();
        assert_eq!(c.lhs, c.path_sum);
        assert_eq!(c.violations, 0);
        for x in 0..6 {
            assert_eq!(check_moving_particle(&h, x, 2, 6).unwrap().violations, 0);
        }
        // h reads sites 4, 5 only; the bond 0 -> 2 and its path never touch them
        let far = LocalFunction::random(2, 4, &mut rng).unwrap();
        let c = check_moving_particle(&far, 0, 2, 8).unwrap();
        assert_eq!((c.lhs, c.path_sum), (0.0, 0.0));
        assert!(check_moving_particle(&h, 0, 4, 6).is_err());
    }

    #[test]
    fn window_limit() {
        assert!(matches!(
            LocalFunction::random(21, 0, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(EnumerationError::WindowTooLarge(21))
        ));
        let h = LocalFunction::constant(2, 0, 1.0).unwrap();
        assert!(matches!(dirichlet_form(&h, 21), Err(EnumerationError::WindowTooLarge(21))));
    }

    #[test]
    fn generator_form_vanishes_exactly_on_sector_functions() {
        let k = RateKernel::power_law(3.0, 3, None, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [6usize, 8, 10] {
            let by_count: Vec<f64> = (0..=n).map(|_| rng.sample(StandardNormal)).collect();
            let table: Vec<f64> = (0..1u64 << n).map(|m| by_count[m.count_ones() as usize]).collect();
            let h = LocalFunction::new(n, 0, table).unwrap();
            let vals = h.tabulate(n).unwrap();
            assert!(is_sector_constant(&vals, 0.0));
            assert_eq!(generator_form(&h, &k, n).unwrap(), 0.0);

            let h = LocalFunction::random(n, 0, &mut rng).unwrap();
            assert!(!is_sector_constant(&h.tabulate(n).unwrap(), 1e-12));
            assert!(generator_form(&h, &k, n).unwrap() > 0.0);
        }
    }

    #[test]
    fn nearest_neighbour_equivalence_is_tight() {
        let k = RateKernel::nearest_neighbor(1.0).unwrap();
        let rep = check_equiv_dirichlet(&k, 8, 100, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert!(rep.pass());
        assert_eq!(rep.c2, 2.0);
        assert!((rep.max_ratio - 2.0).abs() < 1e-12 && (rep.min_ratio - 2.0).abs() < 1e-12);
    }
}
