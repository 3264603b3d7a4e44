//! Acceptance criteria for the simulation toolkit. Each criterion runs a
//! fixed, seeded experiment and reports its sub-checks with the measured
//! values.

use std::thread::available_parallelism;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lrex::dynamics::{simulate, SimParams};
use lrex::farm::run_replicas;
use lrex::fields::{psi, GeneratorObserver, LatticeTestFn, MartingaleObserver};
use lrex::kernel::{build_pn, moments, RateKernel};
use lrex::lattice::{sample_bernoulli, Configuration};
use lrex::sbe::{ou_covariance, run_path, Scheme, SolverParams};
use lrex::stats::RunningStats;
use lrex::testfn::TestFunction;
use lrex::verify::enumeration::{check_equiv_dirichlet, dirichlet_form, generator_form, moving_particle_suite, LocalFunction};
use lrex::verify::montecarlo::{
    check_time_regularity, estimate_bg_error, estimate_ibp_error, run_stationary, stationary_statistics,
    two_time_covariance, Estimate, StationaryRun,
};
use lrex::verify::check_appendix_lemmas;

pub struct Outcome {
    pub pass: bool,
    /// One line per sub-check.
    pub details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            pass: true,
            details: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.pass &= ok;
        let tag = if ok { "ok" } else { "FAIL" };
        self.details.push(format!("{tag:>4}  {name}: {detail}"));
    }
}

fn threads() -> usize {
    available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn gaussian() -> TestFunction {
    TestFunction::gaussian(2.0, 0.4, 4.0).unwrap()
}

fn power_law() -> RateKernel {
    RateKernel::power_law(3.0, 8, None, 1.0).unwrap()
}

fn nearest() -> RateKernel {
    RateKernel::nearest_neighbor(1.0).unwrap()
}

pub fn exact_identities() -> Outcome {
    let mut out = Outcome::new();

    let mut worst = 0.0f64;
    for mask in 0..4u64 {
        let c = Configuration::from_mask(mask, 4);
        let (p, _) = psi(&c, 0, 2).unwrap();
        worst = worst.max((p - c.centered(0) * c.centered(1)).abs());
    }
    out.check("two-site block identity", worst == 0.0, format!("max deviation {worst:e}"));

    let mut worst = 0.0f64;
    for k in [nearest(), power_law(), RateKernel::power_law(2.5, 5, None, 0.5).unwrap()] {
        for n in [4u64, 16, 64, 256, 1024] {
            for b in [0.0, 0.5, 1.0, 3.0] {
                let pn = build_pn(&k, n, b).unwrap();
                worst = worst.max((pn.total() - k.s_values().values().sum::<f64>()).abs());
            }
        }
    }
    out.check("jump law mass", worst <= 1e-12, format!("max |sum p_n - sum s| = {worst:e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut involution = true;
    for _ in 0..2000 {
        let c = sample_bernoulli(96, 0.5, &mut rng).unwrap();
        let (x, y) = (rng.gen_range(0..96), rng.gen_range(0..96));
        let mut d = c.clone();
        d.swap(x, y);
        involution &= d.is_consistent() && d.particle_count() == c.particle_count();
        d.swap(x, y);
        involution &= d == c;
    }
    out.check("swap involution", involution, "2000 random swaps on 96 sites".into());

    let f = gaussian();
    let mut worst = 0.0f64;
    let mut jumps = 0;
    for (k, b) in [(nearest(), 1.0), (power_law(), 1.0), (power_law(), 0.0)] {
        let n = 32;
        let params = SimParams {
            n,
            length: 4,
            b,
            t_max: 0.25,
            seed: 3,
            checkpoint_times: vec![0.0, 0.05, 0.1, 0.2, 0.25],
        };
        let lf = LatticeTestFn::new(&f, &k, n).unwrap();
        let pn = build_pn(&k, n, b).unwrap();
        for r in 0..4u64 {
            let mut rng = lrex::rng::replica_rng(params.seed, r);
            let init = sample_bernoulli(params.n_sites(), 0.5, &mut rng).unwrap();
            let mut dec = MartingaleObserver::new(&lf, &pn, b, &init, &[0.125], &[]).unwrap();
            let mut gen = GeneratorObserver::new(&lf, &pn, &init);
            let traj = simulate(&init, &params, &pn, &mut [&mut dec, &mut gen], false, &mut rng).unwrap();
            jumps += traj.accepted;
            for (rec, &(_, m)) in dec.records().iter().zip(gen.values()) {
                worst = worst.max((rec.m - m).abs());
            }
        }
    }
    out.check(
        "martingale reconstruction",
        worst <= 1e-10,
        format!("max residual {worst:e} over 12 trajectories, {jumps} jumps"),
    );
    out
}

pub fn enumeration_suite() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n_sites = 12;

    let suite = moving_particle_suite(n_sites, 5, 1000, &mut rng).unwrap();
    let factors: Vec<String> = suite.minimal_factor.iter().map(|f| format!("{f:.3}")).collect();
    out.check(
        "moving particle",
        suite.violations == 0,
        format!(
            "{} checks, {} violations, largest ratio per z [{}]",
            suite.checks,
            suite.violations,
            factors.join(", ")
        ),
    );

    for (name, k) in [("nearest neighbour", nearest()), ("power law", RateKernel::power_law(3.0, 3, None, 1.0).unwrap())] {
        let rep = check_equiv_dirichlet(&k, n_sites, 300, &mut rng).unwrap();
        out.check(
            &format!("form equivalence, {name}"),
            rep.pass(),
            format!(
                "c1 = {:.4}, c2 = {:.4}, ratio range [{:.4}, {:.4}], violations {}/{}",
                rep.c1, rep.c2, rep.min_ratio, rep.max_ratio, rep.lower_violations, rep.upper_violations
            ),
        );
    }

    let k = nearest();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let h = LocalFunction::random(n_sites, 0, &mut rng).unwrap();
        let d = dirichlet_form(&h, n_sites).unwrap();
        let g = generator_form(&h, &k, n_sites).unwrap();
        worst = worst.max((d - 2.0 * g).abs());
    }
    out.check("nearest neighbour D = 2<h,-Sh>", worst <= 1e-12, format!("max deviation {worst:e}"));
    out
}

pub fn appendix_determinism() -> Outcome {
    let mut out = Outcome::new();
    let f = TestFunction::gaussian(2.0, 0.3, 4.0).unwrap();
    for (name, k) in [("nearest neighbour", nearest()), ("power law", power_law())] {
        let rep = check_appendix_lemmas(&f, &k, &[32, 64, 128, 256]);
        for l in [&rep.generator_sup, &rep.generator_l1, &rep.energy, &rep.tilted] {
            let errs: Vec<String> = l.errors.iter().map(|e| format!("{e:.3e}")).collect();
            out.check(
                &format!("{name} {}", l.lemma),
                l.pass,
                format!("[{}], exponent {:.3}", errs.join(", "), l.exponent),
            );
        }
        let rel = rep.energy_relative_error();
        out.check(
            &format!("{name} energy at n = 256"),
            rel <= 0.02,
            format!("{:.6} vs {:.6}, relative error {rel:.2e}", rep.energy_at_finest, rep.energy_limit),
        );
    }
    out
}

fn base_run(n: u64, b: f64, checkpoints: Vec<f64>, replicas: usize, seed: u64) -> StationaryRun {
    StationaryRun {
        kernel: power_law(),
        f: gaussian(),
        n,
        length: 4,
        b,
        checkpoints,
        eps_list: vec![],
        ells: vec![],
        replicas,
        threads: threads(),
        seed,
    }
}

fn fmt_est(e: &Estimate) -> String {
    format!("{:.5} +- {:.5}", e.mean, e.se)
}

pub fn stationary_statistics_check() -> Outcome {
    let mut out = Outcome::new();
    let run = base_run(64, 1.0, vec![0.0, 0.5, 1.0], 200, 404);
    let reps = run_stationary(&run).unwrap();
    let rep = stationary_statistics(&run, &reps, 1.0).unwrap();
    out.check(
        "Var Y_0",
        rep.var_y0.within(rep.var_y0_target),
        format!("{} vs {:.5}", fmt_est(&rep.var_y0), rep.var_y0_target),
    );
    out.check(
        "E<M>_t exact",
        rep.qv.within(rep.qv_exact),
        format!("{} vs {:.5}", fmt_est(&rep.qv), rep.qv_exact),
    );
    let rel = rep.qv.mean / rep.qv_continuum - 1.0;
    out.check(
        "E<M>_t continuum",
        rel.abs() <= 0.10,
        format!("{:.5} vs {:.5}, relative {rel:+.3}", rep.qv.mean, rep.qv_continuum),
    );
    out.check(
        "E[M^2] - E<M>",
        rep.m2_minus_qv.within(0.0),
        format!("{} vs 0", fmt_est(&rep.m2_minus_qv)),
    );
    out.check(
        "max jump",
        rep.max_jump <= rep.jump_bound,
        format!("{:.5} <= {:.5}", rep.max_jump, rep.jump_bound),
    );
    out
}

pub fn replacement_scalings() -> Outcome {
    let mut out = Outcome::new();

    let ibp = estimate_ibp_error(&base_run(64, 1.0, vec![0.0, 0.25, 0.5], 400, 505), &[16, 32, 64]).unwrap();
    let pts: Vec<String> = ibp.points.iter().map(|p| format!("n={} {:.3e}", p.n, p.r2.mean)).collect();
    out.check(
        "integration by parts error",
        ibp.pass(),
        format!(
            "[{}], exponent {:.3} in [{}, {}], monotone in t {}",
            pts.join(", "),
            ibp.exponent,
            ibp.exponent_window.0,
            ibp.exponent_window.1,
            ibp.monotone_in_t
        ),
    );

    let bg = estimate_bg_error(&base_run(64, 1.0, vec![0.0, 0.5], 400, 606), &[4, 8, 16, 32]).unwrap();
    let errs: Vec<String> = bg.error.iter().map(|e| format!("{:.3e}", e.mean)).collect();
    let consts: Vec<String> = bg.constants.iter().map(|c| format!("{c:.4}")).collect();
    out.check(
        "block replacement linear in ell",
        bg.linear_in_ell(),
        format!(
            "errors [{}], slope {:.3} (limit 1.2), constants [{}]",
            errs.join(", "),
            bg.error_slope,
            consts.join(", ")
        ),
    );
    out.check(
        "block normalization gap",
        bg.gap_exponent_ok(),
        format!("exponent {:.3} in [-2.5, -1.5]", bg.gap_exponent),
    );
    out.check(
        "two-site block is exact",
        bg.ell2_error <= 1e-9,
        format!("max |error| at ell = 2: {:e}", bg.ell2_error),
    );

    let cps = vec![0.0, 0.0625, 0.125, 0.25, 0.5, 0.5625, 0.625, 0.75, 1.0];
    let reps = run_stationary(&base_run(64, 1.0, cps, 400, 707)).unwrap();
    let reg = check_time_regularity(&reps, &[0.0625, 0.125, 0.25, 0.5], Some(0.5)).unwrap();
    let incs: Vec<String> = reg.increments.iter().map(fmt_est).collect();
    out.check(
        "tilted pair functional increments",
        reg.pass(),
        format!("[{}], exponent {:.3} (at least 1.2)", incs.join(", "), reg.exponent),
    );
    out.check("increments stationary in start time", reg.stationary(), format!("{} shifted gaps", reg.shifted.len()));
    out
}

pub fn spde_solver() -> Outcome {
    let mut out = Outcome::new();
    let f = gaussian();
    let (points, dt, t_max, replicas) = (256usize, 1e-4, 1.0, 400);
    let record_every = 100;
    let mo = moments(&power_law());
    let dx = f.length() / points as f64;
    let stationary = points as f64 / (4.0 * dx);
    let target = 0.25 * mo.sigma2 * t_max * f.d1_l2_norm_sq();
    for b in [0.0, 1.0] {
        let params = SolverParams {
            dt,
            t_max,
            noise_seed: 77,
            scheme: Scheme::ExponentialEuler,
            dealias: true,
        };
        let paths = run_replicas(replicas, threads(), 77 + b as u64, |_, rng| {
            run_path(points, &f, (mo.sigma2, b, mo.m), &params, &[], record_every, rng).unwrap()
        });
        let cutoff = points / 3;
        let mut worst = 0.0f64;
        for k in 1..=cutoff {
            let mean = paths.iter().map(|p| p.mean_power[k]).sum::<f64>() / replicas as f64;
            worst = worst.max((mean / stationary - 1.0).abs());
        }
        out.check(
            &format!("b = {b} mode variance below cutoff"),
            worst <= 0.10,
            format!("largest relative deviation {worst:.4} over modes 1..={cutoff}"),
        );
        let drift = paths.iter().map(|p| p.max_mass_drift).fold(0.0, f64::max);
        out.check(&format!("b = {b} mass per step"), drift <= 1e-10, format!("max |delta sum Y| = {drift:e}"));
        let mut st = RunningStats::new();
        let mut var = RunningStats::new();
        paths.iter().for_each(|p| {
            let m = *p.martingale.last().unwrap();
            st.push(m);
            var.push(m * m);
        });
        let est = Estimate {
            mean: var.mean(),
            se: var.se(),
        };
        out.check(
            &format!("b = {b} martingale variance"),
            est.within(target),
            format!("{} vs {target:.5} (mean {:.4})", fmt_est(&est), st.mean()),
        );
    }
    out
}

pub fn ou_cross_validation() -> Outcome {
    let mut out = Outcome::new();
    let times = [0.1, 0.5, 1.0];
    let run = base_run(64, 0.0, vec![0.0, 0.1, 0.5, 1.0], 400, 808);
    let reps = run_stationary(&run).unwrap();
    let cov = two_time_covariance(&reps, &times).unwrap();
    let sigma2 = moments(&run.kernel).sigma2;
    for (t, e) in times.iter().zip(&cov) {
        let target = ou_covariance(&run.f, &run.f, *t, sigma2);
        out.check(
            &format!("E[Y_t Y_0] at t = {t}"),
            e.within(target),
            format!("{} vs {target:.5}, z = {:+.2}", fmt_est(e), e.z_score(target)),
        );
    }
    out
}

pub type Criterion = (&'static str, fn() -> Outcome);

/// Criteria in order; criterion `i` is `CRITERIA[i - 1]`.
pub const CRITERIA: [Criterion; 7] = [
    ("exact identities", exact_identities),
    ("enumeration suite", enumeration_suite),
    ("appendix determinism", appendix_determinism),
    ("stationary statistics", stationary_statistics_check),
    ("replacement scalings", replacement_scalings),
    ("SPDE solver", spde_solver),
    ("cross-validation at b = 0", ou_cross_validation),
];
