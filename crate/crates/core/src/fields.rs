//! Discrete operators on test functions and the observables of the density
//! fluctuation field: the Dynkin martingale decomposition, its quadratic
//! variation, and the quadratic additive functionals `A`, `Â`, `A^eps`.
//!
//! Time integrals are exact: the process is piecewise constant, so every
//! integrand is held between jumps and updated incrementally at each jump.

use serde::{Deserialize, Serialize};

use crate::dynamics::{replay, Observer, SimParams, Trajectory};
use crate::kernel::{build_pn, JumpDistribution, KernelError, RateKernel};
use crate::lattice::Configuration;
use crate::testfn::TestFunction;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldsError {
    #[error("block length {0} is below 2")]
    DegenerateBlock(usize),
    #[error("nothing to decompose: {0}")]
    EmptyTrajectory(String),
    #[error("test function torus length {length} times n = {n} is not a whole number of sites")]
    TorusMismatch { length: f64, n: u64 },
    #[error("block length {ell} does not fit on {n_sites} sites")]
    BlockTooLong { ell: usize, n_sites: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn sites_for(f: &TestFunction, n: u64) -> Result<usize, FieldsError> {
    let exact = f.length() * n as f64;
    let sites = exact.round();
    if sites < 1.0 || (exact - sites).abs() > 1e-9 {
        return Err(FieldsError::TorusMismatch {
            length: f.length(),
            n,
        });
    }
    Ok(sites as usize)
}

/// `Y(f) = n^{-1/2} sum_x (eta(x) - 1/2) f(x/n)`.
pub fn fluctuation_field(config: &Configuration, f: &TestFunction, n: u64) -> f64 {
    let nf = n as f64;
    debug_assert_eq!(sites_for(f, n).ok(), Some(config.n_sites()));
    (0..config.n_sites())
        .map(|x| config.centered(x) * f.value(x as f64 / nf))
        .sum::<f64>()
        / nf.sqrt()
}

/// `S_n f(x/n) = n^2 sum_z s(z) (f((x+z)/n) - f(x/n))`.
pub fn discrete_generator(f: &TestFunction, kernel: &RateKernel, n: u64, x: i64) -> f64 {
    let nf = n as f64;
    let fx = f.value(x as f64 / nf);
    let r = kernel.support_radius() as i64;
    let sum: f64 = (1..=r)
        .map(|z| {
            kernel.s(z)
                * (f.value((x + z) as f64 / nf) + f.value((x - z) as f64 / nf) - 2.0 * fx)
        })
        .sum();
    nf * nf * sum
}

/// `n (f((x+z)/n) - f(x/n))`.
pub fn grad(f: &TestFunction, n: u64, x: i64, z: i64) -> f64 {
    let nf = n as f64;
    nf * (f.value((x + z) as f64 / nf) - f.value(x as f64 / nf))
}

/// `2 sum_{z>0} a(z) grad(f, n, x, z)`.
pub fn tilted_grad(f: &TestFunction, kernel: &RateKernel, n: u64, x: i64) -> f64 {
    let r = kernel.support_radius() as i64;
    2.0 * (1..=r).map(|z| kernel.a(z) * grad(f, n, x, z)).sum::<f64>()
}

/// `(psi, psi_tilde)` for the block of `ell` sites starting at `x`.
pub fn psi(config: &Configuration, x: usize, ell: usize) -> Result<(f64, f64), FieldsError> {
    if ell < 2 {
        return Err(FieldsError::DegenerateBlock(ell));
    }
    let avg = config
        .block_average(x, ell)
        .map_err(|_| FieldsError::BlockTooLong {
            ell,
            n_sites: config.n_sites(),
        })?;
    let tilde = (avg - 0.5).powi(2);
    Ok((psi_from_tilde(tilde, ell), tilde))
}

#[inline]
fn psi_from_tilde(tilde: f64, ell: usize) -> f64 {
    let l = ell as f64;
    l / (l - 1.0) * tilde - 0.25 / (l - 1.0)
}

/// Block length used for the mollified functional at scale `eps`.
pub fn block_length(eps: f64, n: u64) -> usize {
    ((eps * n as f64).round() as usize).max(2)
}

/// Test function sampled on the lattice together with its discrete
/// derivatives, all periodic in the site index.
#[derive(Debug, Clone)]
pub struct LatticeTestFn {
    n: u64,
    n_sites: usize,
    radius: usize,
    f: Vec<f64>,
    snf: Vec<f64>,
    /// `grad[x * radius + z - 1] = n (f(x+z) - f(x))` for `1 <= z <= radius`
    grad: Vec<f64>,
    tilted: Vec<f64>,
    a_pos: Vec<f64>,
    sup_f: f64,
}

impl LatticeTestFn {
    pub fn new(f: &TestFunction, kernel: &RateKernel, n: u64) -> Result<Self, FieldsError> {
        let n_sites = sites_for(f, n)?;
        let radius = kernel.support_radius();
        let nf = n as f64;
        let vals: Vec<f64> = (0..n_sites).map(|x| f.value(x as f64 / nf)).collect();
        let at = |x: usize, z: i64| vals[(x as i64 + z).rem_euclid(n_sites as i64) as usize];
        let mut grad = vec![0.0; n_sites * radius];
        let mut snf = vec![0.0; n_sites];
        let mut tilted = vec![0.0; n_sites];
        for x in 0..n_sites {
            for z in 1..=radius {
                let zi = z as i64;
                grad[x * radius + z - 1] = nf * (at(x, zi) - vals[x]);
                snf[x] += kernel.s(zi) * (at(x, zi) + at(x, -zi) - 2.0 * vals[x]);
                tilted[x] += 2.0 * kernel.a(zi) * grad[x * radius + z - 1];
            }
            snf[x] *= nf * nf;
        }
        Ok(Self {
            n,
            n_sites,
            radius,
            f: vals,
            snf,
            grad,
            tilted,
            a_pos: (1..=radius as i64).map(|z| kernel.a(z)).collect(),
            sup_f: f.sup_norm(),
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn generator_values(&self) -> &[f64] {
        &self.snf
    }

    pub fn tilted_values(&self) -> &[f64] {
        &self.tilted
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_f
    }

    #[inline]
    fn wrap(&self, x: usize, z: i64) -> usize {
        (x as i64 + z).rem_euclid(self.n_sites as i64) as usize
    }

    /// `n (f(x+z) - f(x))` for any `z` with `|z| <= radius`.
    #[inline]
    pub fn grad(&self, x: usize, z: i64) -> f64 {
        if z > 0 {
            self.grad[x * self.radius + z as usize - 1]
        } else if z < 0 {
            -self.grad[self.wrap(x, z) * self.radius + (-z) as usize - 1]
        } else {
            0.0
        }
    }

    /// `(t / 4n) sum_{x, z != 0} s(z) (grad)^2`, the stationary mean of the
    /// quadratic variation at time `t`.
    pub fn expected_qv(&self, kernel: &RateKernel, t: f64) -> f64 {
        let mut sum = 0.0;
        for x in 0..self.n_sites {
            for z in 1..=self.radius {
                sum += 2.0 * kernel.s(z as i64) * self.grad[x * self.radius + z - 1].powi(2);
            }
        }
        t * sum / (4.0 * self.n as f64)
    }

    /// `(2/n) sum_{x, z != 0} s(z) (grad)^2`, the pathwise bound on the
    /// quadratic-variation rate.
    pub fn qv_rate_bound(&self, kernel: &RateKernel) -> f64 {
        8.0 * self.expected_qv(kernel, 1.0)
    }
}

/// Integrands of every tracked functional at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrands {
    /// `Y(f)`
    pub y: f64,
    /// `Y(S_n f)`
    pub drift: f64,
    /// `sum_{x, z>0} etabar(x) etabar(x+z) a(z) grad_{x,x+z} f`
    pub pair: f64,
    /// `sum_x etabar(x) etabar(x+1) tilted_x f`
    pub nearest: f64,
    /// `(1/n) sum_{x, z != 0} p_n(z) eta(x) (1 - eta(x+z)) (grad_{x,x+z} f)^2`
    pub qv: f64,
    /// `sum_x psi_tilde_x^ell tilted_x f` per tracked block length
    pub blocks: Vec<f64>,
}

impl Integrands {
    /// Direct evaluation, independent of any incremental bookkeeping.
    pub fn evaluate(
        config: &Configuration,
        lf: &LatticeTestFn,
        pn: &JumpDistribution,
        ells: &[usize],
    ) -> Self {
        let n = lf.n_sites;
        let sqrt_n = (lf.n as f64).sqrt();
        let r = lf.radius as i64;
        let (mut y, mut drift, mut pair, mut nearest, mut qv) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for x in 0..n {
            let ex = config.centered(x);
            y += ex * lf.f[x];
            drift += ex * lf.snf[x];
            nearest += ex * config.centered(lf.wrap(x, 1)) * lf.tilted[x];
            for z in 1..=r {
                pair += ex * config.centered(lf.wrap(x, z)) * lf.a_pos[z as usize - 1] * lf.grad(x, z);
            }
            if config.occupied(x) {
                for z in (-r..=r).filter(|&z| z != 0) {
                    if !config.occupied(lf.wrap(x, z)) {
                        qv += pn.p(z) * lf.grad(x, z).powi(2);
                    }
                }
            }
        }
        let blocks = ells
            .iter()
            .map(|&ell| {
                (0..n)
                    .map(|x| {
                        let avg = config.block_average(x, ell).expect("block fits");
                        (avg - 0.5).powi(2) * lf.tilted[x]
                    })
                    .sum()
            })
            .collect();
        Self {
            y: y / sqrt_n,
            drift: drift / sqrt_n,
            pair,
            nearest,
            qv: qv / lf.n as f64,
            blocks,
        }
    }
}

/// `L_n Y(f) = sqrt(n) sum_{x, z} p_n(z) eta(x) (1 - eta(x+z)) grad_{x,x+z} f`,
/// the generator applied to the field, from scratch.
pub fn generator_of_field(config: &Configuration, lf: &LatticeTestFn, pn: &JumpDistribution) -> f64 {
    let r = lf.radius as i64;
    let nf = lf.n as f64;
    let mut sum = 0.0;
    for x in config.particles() {
        for z in (-r..=r).filter(|&z| z != 0) {
            let y = lf.wrap(x, z);
            if !config.occupied(y) {
                sum += pn.p(z) * nf * (lf.f[y] - lf.f[x]);
            }
        }
    }
    sum * nf.sqrt()
}

/// Values of the decomposition at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleRecord {
    pub t: f64,
    pub y: f64,
    pub drift_int: f64,
    pub a: f64,
    pub a_hat: f64,
    /// `A^{n,eps}_t` in the order of the configured `eps` list.
    pub a_eps: Vec<f64>,
    pub m: f64,
    pub qv: f64,
    pub r: f64,
    /// `int sum_x etabar(x) etabar(x+1) tilted_x f ds`
    pub nearest_int: f64,
    /// `(ell, int sum_x psi_tilde_x^ell tilted_x f ds)` for every tracked block.
    pub blocks: Vec<(usize, f64)>,
    /// `t sum_x tilted_x f`
    pub tilted_sum_int: f64,
}

impl MartingaleRecord {
    fn block(&self, ell: usize) -> f64 {
        self.blocks
            .iter()
            .find(|(l, _)| *l == ell)
            .map(|&(_, v)| v)
            .expect("block length tracked")
    }

    /// `int sum_x psi_x^ell tilted_x f ds`.
    pub fn psi_int(&self, ell: usize) -> f64 {
        let l = ell as f64;
        l / (l - 1.0) * self.block(ell) - 0.25 / (l - 1.0) * self.tilted_sum_int
    }

    /// `int sum_x (etabar(x) etabar(x+1) - psi_x^ell) tilted_x f ds`.
    pub fn bg_error(&self, ell: usize) -> f64 {
        self.nearest_int - self.psi_int(ell)
    }

    /// `int sum_x (psi_x^ell - psi_tilde_x^ell) tilted_x f ds`.
    pub fn psi_gap(&self, ell: usize) -> f64 {
        self.psi_int(ell) - self.block(ell)
    }
}

struct BlockTracker {
    ell: usize,
    counts: Vec<u32>,
    value: f64,
    int: f64,
}

/// Resynchronize incremental integrands from scratch after this many jumps.
const RESYNC_EVERY: u64 = 1 << 16;

/// Streams the decomposition along a path.
pub struct MartingaleObserver<'a> {
    lf: &'a LatticeTestFn,
    pn: &'a JumpDistribution,
    b: f64,
    gamma_sqrt_n: f64,
    eta: Vec<i8>,
    ells: Vec<usize>,
    eps_blocks: Vec<usize>,
    y0: f64,
    cur: Integrands,
    blocks: Vec<BlockTracker>,
    drift_int: f64,
    pair_int: f64,
    nearest_int: f64,
    qv_int: f64,
    last_t: f64,
    jumps: u64,
    max_jump: f64,
    tilted_sum: f64,
    records: Vec<MartingaleRecord>,
}

impl<'a> MartingaleObserver<'a> {
    /// `eps_list` fixes the `A^eps` columns; `extra_ells` adds block lengths
    /// tracked for the replacement estimates.
    pub fn new(
        lf: &'a LatticeTestFn,
        pn: &'a JumpDistribution,
        b: f64,
        initial: &Configuration,
        eps_list: &[f64],
        extra_ells: &[usize],
    ) -> Result<Self, FieldsError> {
        let eps_blocks: Vec<usize> = eps_list.iter().map(|&e| block_length(e, lf.n)).collect();
        let mut ells: Vec<usize> = eps_blocks.iter().chain(extra_ells).copied().collect();
        ells.sort_unstable();
        ells.dedup();
        for &ell in &ells {
            if ell < 2 {
                return Err(FieldsError::DegenerateBlock(ell));
            }
            if ell > lf.n_sites {
                return Err(FieldsError::BlockTooLong {
                    ell,
                    n_sites: lf.n_sites,
                });
            }
        }
        let cur = Integrands::evaluate(initial, lf, pn, &ells);
        let blocks = ells
            .iter()
            .zip(&cur.blocks)
            .map(|(&ell, &value)| BlockTracker {
                ell,
                counts: block_counts(initial, ell),
                value,
                int: 0.0,
            })
            .collect();
        Ok(Self {
            lf,
            pn,
            b,
            gamma_sqrt_n: pn.gamma_n * (lf.n as f64).sqrt(),
            eta: (0..lf.n_sites)
                .map(|x| if initial.occupied(x) { 1 } else { -1 })
                .collect(),
            eps_blocks,
            y0: cur.y,
            ells,
            cur,
            blocks,
            drift_int: 0.0,
            pair_int: 0.0,
            nearest_int: 0.0,
            qv_int: 0.0,
            last_t: 0.0,
            jumps: 0,
            max_jump: 0.0,
            tilted_sum: lf.tilted.iter().sum(),
            records: Vec::new(),
        })
    }

    pub fn records(&self) -> &[MartingaleRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<MartingaleRecord> {
        self.records
    }

    /// `Y_0(f)`.
    pub fn initial_field(&self) -> f64 {
        self.y0
    }

    /// Largest `|Y|` increment over the jumps seen so far.
    pub fn max_jump(&self) -> f64 {
        self.max_jump
    }

    /// Current integrands, maintained incrementally.
    pub fn integrands(&self) -> Integrands {
        let mut out = self.cur.clone();
        out.blocks = self.blocks.iter().map(|b| b.value).collect();
        out
    }

    pub fn block_lengths(&self) -> &[usize] {
        &self.ells
    }

    #[inline]
    fn bar(&self, x: usize) -> f64 {
        0.5 * self.eta[x] as f64
    }

    #[inline]
    fn occ(&self, x: usize) -> f64 {
        if self.eta[x] > 0 {
            1.0
        } else {
            0.0
        }
    }

    /// Flips the occupancy of `u`, updating every integrand.
    fn flip(&mut self, u: usize) {
        let lf = self.lf;
        // change of eta(u), and of etabar(u)
        let d = -(self.eta[u] as f64);
        let sqrt_n = (lf.n as f64).sqrt();
        self.cur.y += d * lf.f[u] / sqrt_n;
        self.cur.drift += d * lf.snf[u] / sqrt_n;

        let r = lf.radius;
        let mut dpair = 0.0;
        let mut dqv = 0.0;
        for k in 1..=r {
            let ki = k as i64;
            let up = lf.wrap(u, ki);
            let dn = lf.wrap(u, -ki);
            let g_up = lf.grad[u * r + k - 1];
            let g_dn = lf.grad[dn * r + k - 1];
            let a = lf.a_pos[k - 1];
            dpair += a * (self.bar(up) * g_up + self.bar(dn) * g_dn);
            let (pp, pm) = (self.pn.p(ki), self.pn.p(-ki));
            dqv += g_up * g_up * (pp * (1.0 - self.occ(up)) - pm * self.occ(up))
                + g_dn * g_dn * (pm * (1.0 - self.occ(dn)) - pp * self.occ(dn));
        }
        self.cur.pair += d * dpair;
        self.cur.qv += d * dqv / lf.n as f64;
        let up = lf.wrap(u, 1);
        let dn = lf.wrap(u, -1);
        self.cur.nearest += d * (self.bar(up) * lf.tilted[u] + self.bar(dn) * lf.tilted[dn]);

        let n_sites = lf.n_sites;
        for bt in &mut self.blocks {
            let l = bt.ell as f64;
            for k in 0..bt.ell {
                let x = (u + n_sites - k) % n_sites;
                let old = bt.counts[x] as f64;
                let new = old + d;
                bt.counts[x] = new as u32;
                bt.value += ((new / l - 0.5).powi(2) - (old / l - 0.5).powi(2)) * lf.tilted[x];
            }
        }
        self.eta[u] = -self.eta[u];
    }

    fn resync(&mut self, config: &Configuration) {
        self.cur = Integrands::evaluate(config, self.lf, self.pn, &self.ells);
        for (bt, &v) in self.blocks.iter_mut().zip(&self.cur.blocks) {
            bt.value = v;
        }
    }

    fn record(&self, t: f64) -> MartingaleRecord {
        let a = -2.0 * self.b * self.pair_int;
        let a_hat = -self.b * self.nearest_int;
        let blocks: Vec<(usize, f64)> = self.blocks.iter().map(|b| (b.ell, b.int)).collect();
        let a_eps = self
            .eps_blocks
            .iter()
            .map(|ell| blocks.iter().find(|(l, _)| l == ell).unwrap().1)
            .collect();
        MartingaleRecord {
            t,
            y: self.cur.y,
            drift_int: self.drift_int,
            a,
            a_hat,
            a_eps,
            // (gamma sqrt(n) / b) A = -2 gamma sqrt(n) int pair, also for b = 0
            m: self.cur.y - self.y0 - self.drift_int + 2.0 * self.gamma_sqrt_n * self.pair_int,
            qv: self.qv_int,
            r: a - a_hat,
            nearest_int: self.nearest_int,
            blocks,
            tilted_sum_int: t * self.tilted_sum,
        }
    }
}

fn block_counts(config: &Configuration, ell: usize) -> Vec<u32> {
    let n = config.n_sites();
    let mut counts = vec![0u32; n];
    let mut c: u32 = (0..ell).filter(|&k| config.occupied(k % n)).count() as u32;
    for (x, slot) in counts.iter_mut().enumerate() {
        *slot = c;
        c = c + config.occupied((x + ell) % n) as u32 - config.occupied(x) as u32;
    }
    counts
}

impl Observer for MartingaleObserver<'_> {
    fn advance(&mut self, _config: &Configuration, t: f64) {
        let dt = t - self.last_t;
        if dt > 0.0 {
            self.drift_int += self.cur.drift * dt;
            self.pair_int += self.cur.pair * dt;
            self.nearest_int += self.cur.nearest * dt;
            self.qv_int += self.cur.qv * dt;
            for bt in &mut self.blocks {
                bt.int += bt.value * dt;
            }
            self.last_t = t;
        }
    }

    fn jumped(&mut self, config: &Configuration, x: usize, y: usize) {
        let jump = (self.lf.f[y] - self.lf.f[x]).abs() / (self.lf.n as f64).sqrt();
        self.max_jump = self.max_jump.max(jump);
        self.flip(x);
        self.flip(y);
        self.jumps += 1;
        if self.jumps.is_multiple_of(RESYNC_EVERY) {
            self.resync(config);
        }
    }

    fn checkpoint(&mut self, _config: &Configuration, t: f64) {
        let rec = self.record(t);
        self.records.push(rec);
    }
}

/// Dynkin martingale `Y_t - Y_0 - int L_n Y ds` evaluated from scratch at
/// every state, with no use of the pair decomposition.
pub struct GeneratorObserver<'a> {
    lf: &'a LatticeTestFn,
    pn: &'a JumpDistribution,
    y0: f64,
    current_rate: f64,
    int: f64,
    last_t: f64,
    values: Vec<(f64, f64)>,
}

impl<'a> GeneratorObserver<'a> {
    pub fn new(lf: &'a LatticeTestFn, pn: &'a JumpDistribution, initial: &Configuration) -> Self {
        Self {
            lf,
            pn,
            y0: field_on_lattice(initial, lf),
            current_rate: generator_of_field(initial, lf, pn),
            int: 0.0,
            last_t: 0.0,
            values: Vec::new(),
        }
    }

    /// `(t, M_t)` at every checkpoint.
    pub fn values(&self) -> &[(f64, f64)] {
        &self.values
    }
}

/// `Y(f)` from the precomputed lattice values.
pub fn field_on_lattice(config: &Configuration, lf: &LatticeTestFn) -> f64 {
    (0..lf.n_sites)
        .map(|x| config.centered(x) * lf.f[x])
        .sum::<f64>()
        / (lf.n as f64).sqrt()
}

impl Observer for GeneratorObserver<'_> {
    fn advance(&mut self, _config: &Configuration, t: f64) {
        self.int += self.current_rate * (t - self.last_t);
        self.last_t = t;
    }

    fn jumped(&mut self, config: &Configuration, _x: usize, _y: usize) {
        self.current_rate = generator_of_field(config, self.lf, self.pn);
    }

    fn checkpoint(&mut self, config: &Configuration, t: f64) {
        let m = field_on_lattice(config, self.lf) - self.y0 - self.int;
        self.values.push((t, m));
    }
}

/// Records `Y(f)` for several test functions at every checkpoint.
pub struct FieldSnapshots<'a> {
    fns: Vec<&'a LatticeTestFn>,
    values: Vec<(f64, Vec<f64>)>,
}

impl<'a> FieldSnapshots<'a> {
    pub fn new(fns: Vec<&'a LatticeTestFn>) -> Self {
        Self {
            fns,
            values: Vec::new(),
        }
    }

    /// `(t, [Y_t(f_1), ...])` per checkpoint.
    pub fn values(&self) -> &[(f64, Vec<f64>)] {
        &self.values
    }

    pub fn into_values(self) -> Vec<(f64, Vec<f64>)> {
        self.values
    }
}

impl Observer for FieldSnapshots<'_> {
    fn advance(&mut self, _config: &Configuration, _t: f64) {}

    fn jumped(&mut self, _config: &Configuration, _x: usize, _y: usize) {}

    fn checkpoint(&mut self, config: &Configuration, t: f64) {
        let ys = self.fns.iter().map(|lf| field_on_lattice(config, lf)).collect();
        self.values.push((t, ys));
    }
}

/// Replays `traj` and returns the decomposition at each checkpoint of
/// `params`.
pub fn decompose(
    traj: &Trajectory,
    f: &TestFunction,
    kernel: &RateKernel,
    params: &SimParams,
    eps_list: &[f64],
) -> Result<Vec<MartingaleRecord>, FieldsError> {
    if params.checkpoint_times.is_empty() {
        return Err(FieldsError::EmptyTrajectory("no checkpoints".into()));
    }
    if traj.initial.n_sites() == 0 {
        return Err(FieldsError::EmptyTrajectory("no sites".into()));
    }
    let lf = LatticeTestFn::new(f, kernel, params.n)?;
    let pn = build_pn(kernel, params.n, params.b)?;
    let mut obs = MartingaleObserver::new(&lf, &pn, params.b, &traj.initial, eps_list, &[])?;
    replay(traj, &params.checkpoint_times, &mut [&mut obs]);
    Ok(obs.into_records())
}

/// Largest increment `|f(y/n) - f(x/n)| / sqrt(n)` of the field over the
/// recorded jumps.
pub fn jump_size(traj: &Trajectory, f: &TestFunction, n: u64) -> f64 {
    let nf = n as f64;
    traj.events
        .iter()
        .map(|e| (f.value(e.y as f64 / nf) - f.value(e.x as f64 / nf)).abs() / nf.sqrt())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate;
    use crate::lattice::sample_bernoulli;
    use crate::stats::RunningStats;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss() -> TestFunction {
        TestFunction::gaussian(2.0, 0.4, 4.0).unwrap()
    }

    #[test]
    fn field_of_full_lattice() {
        let f = gauss();
        let n = 8;
        let c = Configuration::from_occupancy(&[true; 32]);
        let direct: f64 = (0..32).map(|x| f.value(x as f64 / 8.0)).sum::<f64>() / (2.0 * 8f64.sqrt());
        assert!((fluctuation_field(&c, &f, n) - direct).abs() < 1e-14);
    }

    #[test]
    fn field_cancels_for_odd_f() {
        // odd about site 16 (u = 2): Hermite order 1 centred there
        let f = TestFunction::new(
            crate::testfn::TestFamily::Hermite { order: 1, center: 2.0, scale: 0.3 },
            4.0,
        )
        .unwrap();
        let mut occ = vec![false; 32];
        for k in [0usize, 3, 5] {
            occ[16 + k] = true;
            occ[16 - k] = true;
        }
        let c = Configuration::from_occupancy(&occ);
        assert!(fluctuation_field(&c, &f, 8).abs() < 1e-12);
    }

    #[test]
    fn field_variance_is_quarter_l2() {
        let f = gauss();
        let n = 128;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut st = RunningStats::new();
        for _ in 0..2000 {
            let c = sample_bernoulli(512, 0.5, &mut rng).unwrap();
            st.push(fluctuation_field(&c, &f, n).powi(2));
        }
        let target = 0.25 * f.l2_norm_sq();
        assert!((st.mean() - target).abs() < 4.0 * st.se(), "{} vs {target}", st.mean());
    }

    #[test]
    fn nn_generator_is_half_laplacian() {
        let f = gauss();
        let k = RateKernel::nearest_neighbor(1.0).unwrap();
        let n = 16u64;
        for x in [0i64, 5, 31] {
            let u = |y: i64| f.value(y as f64 / 16.0);
            let expect = 128.0 * (u(x + 1) + u(x - 1) - 2.0 * u(x));
            assert!((discrete_generator(&f, &k, n, x) - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn nn_tilted_grad_is_forward_difference() {
        let f = gauss();
        let k = RateKernel::nearest_neighbor(1.0).unwrap();
        for x in [0i64, 9, 20] {
            let expect = 16.0 * (f.value((x + 1) as f64 / 16.0) - f.value(x as f64 / 16.0));
            assert!((tilted_grad(&f, &k, 16, x) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn lattice_tables_match_pointwise_operators() {
        let f = gauss();
        let k = RateKernel::power_law(3.0, 5, None, 1.0).unwrap();
        let lf = LatticeTestFn::new(&f, &k, 16).unwrap();
        for x in 0..64usize {
            assert!((lf.generator_values()[x] - discrete_generator(&f, &k, 16, x as i64)).abs() < 1e-8);
            assert!((lf.tilted_values()[x] - tilted_grad(&f, &k, 16, x as i64)).abs() < 1e-10);
            for z in -5i64..=5 {
                assert!((lf.grad(x, z) - grad(&f, 16, x as i64, z)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn psi_two_site_identity() {
        for mask in 0..4u64 {
            let c = Configuration::from_mask(mask, 2);
            let (p, _) = psi(&c, 0, 2).unwrap();
            assert!((p - c.centered(0) * c.centered(1)).abs() < 1e-15, "mask {mask}");
        }
        let c = Configuration::from_occupancy(&[true, false]);
        assert_eq!(psi(&c, 0, 2).unwrap().0, -0.25);
        let c = Configuration::from_occupancy(&[true, true]);
        assert_eq!(psi(&c, 0, 2).unwrap().0, 0.25);
        assert_eq!(psi(&c, 0, 1), Err(FieldsError::DegenerateBlock(1)));
    }

    #[test]
    fn psi_is_centered_under_uniform_measure() {
        for ell in 2..=6usize {
            let total: f64 = (0..1u64 << ell)
                .map(|m| psi(&Configuration::from_mask(m, ell), 0, ell).unwrap().0)
                .sum();
            assert!(total.abs() < 1e-12, "ell {ell}: {total}");
        }
    }

    #[test]
    fn nearest_product_second_moment() {
        let mean: f64 = (0..4u64)
            .map(|m| {
                let c = Configuration::from_mask(m, 2);
                (c.centered(0) * c.centered(1)).powi(2)
            })
            .sum::<f64>()
            / 4.0;
        assert_eq!(mean, 1.0 / 16.0);
    }

    fn setup(n: u64, b: f64) -> (TestFunction, RateKernel, SimParams) {
        let k = RateKernel::power_law(3.0, 4, None, 1.0).unwrap();
        let params = SimParams {
            n,
            length: 4,
            b,
            t_max: 0.05,
            seed: 1,
            checkpoint_times: vec![0.0, 0.01, 0.03, 0.05],
        };
        (gauss(), k, params)
    }

    #[test]
    fn incremental_integrands_match_scratch() {
        let (f, k, params) = setup(16, 1.0);
        let lf = LatticeTestFn::new(&f, &k, 16).unwrap();
        let pn = build_pn(&k, 16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut c = sample_bernoulli(params.n_sites(), 0.5, &mut rng).unwrap();
        let ells = [2usize, 3, 8];
        let mut obs = MartingaleObserver::new(&lf, &pn, 1.0, &c, &[], &ells).unwrap();
        for _ in 0..3000 {
            let x = rng.gen_range(0..64);
            let y = rng.gen_range(0..64);
            if c.occupied(x) && !c.occupied(y) {
                c.swap(x, y);
                obs.jumped(&c, x, y);
            }
        }
        let inc = obs.integrands();
        let direct = Integrands::evaluate(&c, &lf, &pn, &ells);
        for (a, b) in [
            (inc.y, direct.y),
            (inc.drift, direct.drift),
            (inc.pair, direct.pair),
            (inc.nearest, direct.nearest),
            (inc.qv, direct.qv),
        ]
        .into_iter()
        .chain(inc.blocks.iter().copied().zip(direct.blocks.iter().copied()))
        {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn decomposition_matches_generator_route() {
        let (f, k, params) = setup(16, 1.0);
        let lf = LatticeTestFn::new(&f, &k, 16).unwrap();
        let pn = build_pn(&k, 16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let init = sample_bernoulli(params.n_sites(), 0.5, &mut rng).unwrap();
        let mut dec = MartingaleObserver::new(&lf, &pn, 1.0, &init, &[0.25], &[]).unwrap();
        let mut gen = GeneratorObserver::new(&lf, &pn, &init);
        let traj = simulate(&init, &params, &pn, &mut [&mut dec, &mut gen], true, &mut rng).unwrap();
        assert!(!traj.events.is_empty());
        for (rec, &(t, m)) in dec.records().iter().zip(gen.values()) {
            assert_eq!(rec.t, t);
            assert!((rec.m - m).abs() < 1e-10, "t={t}: {} vs {m}", rec.m);
        }
        let again = decompose(&traj, &f, &k, &params, &[0.25]).unwrap();
        assert_eq!(again, dec.records());
    }

    #[test]
    fn frozen_trajectory() {
        let (f, k, mut params) = setup(8, 1.0);
        params.t_max = 1.0;
        params.checkpoint_times = vec![0.5, 1.0];
        let init = Configuration::from_occupancy(&[true; 32]);
        let pn = build_pn(&k, 8, 1.0).unwrap();
        let traj = simulate(&init, &params, &pn, &mut [], true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let recs = decompose(&traj, &f, &k, &params, &[]).unwrap();
        let lf = LatticeTestFn::new(&f, &k, 8).unwrap();
        let drift_rate = Integrands::evaluate(&init, &lf, &pn, &[]).drift;
        for r in &recs {
            assert!((r.y - fluctuation_field(&init, &f, 8)).abs() < 1e-12);
            assert!(r.a.abs() < 1e-9 && r.a_hat.abs() < 1e-9);
            assert!((r.m + r.t * drift_rate).abs() < 1e-9);
            assert_eq!(r.qv, 0.0);
        }
    }

    #[test]
    fn empty_checkpoint_list_is_an_error() {
        let (f, k, mut params) = setup(8, 0.0);
        params.checkpoint_times.clear();
        let init = Configuration::from_occupancy(&[true; 32]);
        let traj = Trajectory {
            initial: init,
            events: vec![],
            final_time: 0.05,
            attempts: 0,
            accepted: 0,
        };
        assert!(matches!(
            decompose(&traj, &f, &k, &params, &[]),
            Err(FieldsError::EmptyTrajectory(_))
        ));
    }

    #[test]
    fn nearest_neighbour_a_makes_remainder_vanish() {
        let f = gauss();
        let k = RateKernel::nearest_neighbor(1.0).unwrap();
        let params = SimParams {
            n: 16,
            length: 4,
            b: 1.0,
            t_max: 0.1,
            seed: 0,
            checkpoint_times: vec![0.05, 0.1],
        };
        let pn = build_pn(&k, 16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let init = sample_bernoulli(64, 0.5, &mut rng).unwrap();
        let traj = simulate(&init, &params, &pn, &mut [], true, &mut rng).unwrap();
        for r in decompose(&traj, &f, &k, &params, &[]).unwrap() {
            assert!(r.r.abs() < 1e-10);
        }
    }

    #[test]
    fn jump_size_cases() {
        let f = gauss();
        let init = Configuration::from_mask(1 << 16, 32);
        let mut traj = Trajectory {
            initial: init,
            events: vec![],
            final_time: 1.0,
            attempts: 0,
            accepted: 0,
        };
        assert_eq!(jump_size(&traj, &f, 8), 0.0);
        traj.events.push(crate::dynamics::Event { t: 0.1, x: 16, y: 17 });
        let expect = (f.value(2.0) - f.value(17.0 / 8.0)).abs() / 8f64.sqrt();
        assert!((jump_size(&traj, &f, 8) - expect).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn qv_rate_is_bounded_and_qv_monotone(seed in any::<u64>()) {
            let (f, k, params) = setup(16, 1.0);
            let lf = LatticeTestFn::new(&f, &k, 16).unwrap();
            let pn = build_pn(&k, 16, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = sample_bernoulli(64, 0.5, &mut rng).unwrap();
            let bound = lf.qv_rate_bound(&k);
            let rate = Integrands::evaluate(&init, &lf, &pn, &[]).qv;
            prop_assert!(rate >= 0.0 && rate <= bound);
            let traj = simulate(&init, &params, &pn, &mut [], true, &mut rng).unwrap();
            let recs = decompose(&traj, &f, &k, &params, &[]).unwrap();
            for w in recs.windows(2) {
                prop_assert!(w[1].qv >= w[0].qv);
                prop_assert!(w[1].qv - w[0].qv <= bound * (w[1].t - w[0].t) + 1e-12);
            }
            prop_assert!(jump_size(&traj, &f, 16) <= 2.0 * f.sup_norm() / 4.0);
        }

        #[test]
        fn martdec_reconstructs_exactly(seed in any::<u64>()) {
            let (f, k, params) = setup(16, 1.0);
            let pn = build_pn(&k, 16, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = sample_bernoulli(64, 0.5, &mut rng).unwrap();
            let traj = simulate(&init, &params, &pn, &mut [], true, &mut rng).unwrap();
            let y0 = fluctuation_field(&init, &f, 16);
            let g = pn.gamma_n * 4.0;
            for r in decompose(&traj, &f, &k, &params, &[]).unwrap() {
                let recon = r.y - y0 - r.drift_int - g / params.b * r.a;
                prop_assert!((recon - r.m).abs() < 1e-10);
            }
        }
    }
}
