use std::collections::HashMap;

use proptest::prelude::*;

use lrex::dynamics::{simulate, step, Observer, SimParams};
use lrex::kernel::{build_pn, JumpDistribution, RateKernel};
use lrex::lattice::{sample_bernoulli, Configuration};
use lrex::rng::replica_rng;

fn mask_of(c: &Configuration) -> u64 {
    c.occupancy()
        .iter()
        .enumerate()
        .fold(0, |m, (i, &o)| m | (u64::from(o) << i))
}

/// Exact jump rates out of `mask`: `n^2 p_n(z)` for every occupied `x` with
/// `x + z` empty.
fn exact_rates(mask: u64, n_sites: usize, pn: &JumpDistribution, n: u64) -> HashMap<(usize, usize), f64> {
    let r = pn.radius() as i64;
    let mut out = HashMap::new();
    for x in (0..n_sites).filter(|&x| mask >> x & 1 == 1) {
        for z in (-r..=r).filter(|&z| z != 0) {
            let y = (x as i64 + z).rem_euclid(n_sites as i64) as usize;
            if mask >> y & 1 == 0 {
                *out.entry((x, y)).or_insert(0.0) += (n * n) as f64 * pn.p(z);
            }
        }
    }
    out
}

#[test]
fn thinning_matches_exact_jump_chain() {
    let (n, n_sites) = (2u64, 8usize);
    let k = RateKernel::power_law(3.0, 2, None, 1.0).unwrap();
    let pn = build_pn(&k, n, 1.0).unwrap();
    let mask = 0b0010_1101u64;
    let rates = exact_rates(mask, n_sites, &pn, n);
    let total: f64 = rates.values().sum();

    let samples = 40_000;
    let mut rng = replica_rng(99, 0);
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    let mut hold = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut c = Configuration::from_mask(mask, n_sites);
        let mut t = 0.0;
        loop {
            let (dt, jump) = step(&mut c, &pn, n, &mut rng).unwrap();
            t += dt;
            if let Some(j) = jump {
                *counts.entry(j).or_default() += 1;
                break;
            }
        }
        hold.push(t);
    }
    assert!(counts.keys().all(|j| rates.contains_key(j)), "impossible jump sampled");
    for (j, &rate) in &rates {
        let p = rate / total;
        let freq = counts.get(j).copied().unwrap_or(0) as f64 / samples as f64;
        let se = (p * (1.0 - p) / samples as f64).sqrt();
        assert!((freq - p).abs() <= 4.0 * se, "{j:?}: {freq} vs {p}");
    }
    // holding time of the jump chain is exponential with rate `total`
    let mean = hold.iter().sum::<f64>() / samples as f64;
    let se = (1.0 / total) / (samples as f64).sqrt();
    assert!((mean - 1.0 / total).abs() <= 4.0 * se, "{mean} vs {}", 1.0 / total);
}

fn sector(n_sites: usize, particles: u32) -> Vec<u64> {
    (0..1u64 << n_sites).filter(|m| m.count_ones() == particles).collect()
}

#[test]
fn symmetric_rate_matrix_is_reversible_for_the_product_measure() {
    let (n, n_sites) = (3u64, 12usize);
    let k = RateKernel::power_law(3.0, 3, None, 1.0).unwrap();
    for b in [0.0, 1.0] {
        let pn = build_pn(&k, n, b).unwrap();
        let states = sector(n_sites, 6);
        let q: HashMap<u64, HashMap<(usize, usize), f64>> =
            states.iter().map(|&m| (m, exact_rates(m, n_sites, &pn, n))).collect();
        let rate = |from: u64, to: u64| -> f64 {
            let (x, y) = ((from & !to).trailing_zeros() as usize, (to & !from).trailing_zeros() as usize);
            q[&from].get(&(x, y)).copied().unwrap_or(0.0)
        };
        let (mut asym, mut balance) = (0.0f64, 0.0f64);
        for &m in &states {
            let mut out_flow = 0.0;
            let mut in_flow = 0.0;
            for (&(x, y), &r) in &q[&m] {
                let to = m ^ (1 << x) ^ (1 << y);
                out_flow += r;
                in_flow += rate(to, m);
                asym = asym.max((r - rate(to, m)).abs());
            }
            balance = balance.max((out_flow - in_flow).abs());
        }
        // uniform measure on the sector is invariant for every b, reversible only at b = 0
        assert!(balance < 1e-9, "b = {b}: {balance}");
        if b == 0.0 {
            assert_eq!(asym, 0.0);
        } else {
            assert!(asym > 1.0);
        }
    }
}

struct Transitions {
    prev: u64,
    counts: HashMap<(u64, u64), u64>,
    net_right: i64,
    n_sites: usize,
}

impl Observer for Transitions {
    fn advance(&mut self, _config: &Configuration, _t: f64) {}

    fn jumped(&mut self, config: &Configuration, x: usize, y: usize) {
        let next = mask_of(config);
        *self.counts.entry((self.prev, next)).or_default() += 1;
        let d = (y + self.n_sites - x) % self.n_sites;
        self.net_right += if d <= self.n_sites / 2 { 1 } else { -1 };
        self.prev = next;
    }
}

fn transitions(b: f64) -> Transitions {
    let n = 2u64;
    let k = RateKernel::power_law(3.0, 2, None, 1.0).unwrap();
    let pn = build_pn(&k, n, b).unwrap();
    let params = SimParams {
        n,
        length: 4,
        b,
        t_max: 4000.0,
        seed: 5,
        checkpoint_times: vec![],
    };
    let mut rng = replica_rng(5, 0);
    let init = Configuration::from_mask(0b0101_0101, 8);
    let mut obs = Transitions {
        prev: mask_of(&init),
        counts: HashMap::new(),
        net_right: 0,
        n_sites: 8,
    };
    simulate(&init, &params, &pn, &mut [&mut obs], false, &mut rng).unwrap();
    obs
}

#[test]
fn empirical_flux_balances_without_asymmetry() {
    let obs = transitions(0.0);
    let mut pairs = 0;
    for (&(a, b), &ab) in &obs.counts {
        if a < b {
            let ba = obs.counts.get(&(b, a)).copied().unwrap_or(0);
            let z = (ab as f64 - ba as f64) / ((ab + ba) as f64).sqrt();
            assert!(z.abs() <= 4.0, "{a:08b} <-> {b:08b}: {ab} vs {ba}");
            pairs += 1;
        }
    }
    assert!(pairs > 100);
    let total: u64 = obs.counts.values().sum();
    assert!((obs.net_right as f64).abs() <= 4.0 * (total as f64).sqrt());
}

#[test]
fn asymmetry_produces_a_net_current() {
    let obs = transitions(1.0);
    let total: u64 = obs.counts.values().sum();
    assert!(obs.net_right as f64 > 10.0 * (total as f64).sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn particle_number_is_conserved(seed in any::<u64>(), b in 0.0f64..2.0, zmax in 1usize..5) {
        let k = RateKernel::power_law(3.0, zmax, None, 1.0).unwrap();
        let n = 8;
        let pn = build_pn(&k, n, b).unwrap();
        let mut rng = replica_rng(seed, 0);
        let init = sample_bernoulli(32, 0.5, &mut rng).unwrap();
        let params = SimParams { n, length: 4, b, t_max: 0.5, seed, checkpoint_times: vec![] };
        let traj = simulate(&init, &params, &pn, &mut [], true, &mut rng).unwrap();
        let mut c = init.clone();
        for e in &traj.events {
            prop_assert!(c.occupied(e.x) && !c.occupied(e.y));
            c.swap(e.x, e.y);
            prop_assert_eq!(c.particle_count(), init.particle_count());
            prop_assert!(c.is_consistent());
        }
        prop_assert_eq!(c, traj.state_at(traj.final_time));
    }
}
