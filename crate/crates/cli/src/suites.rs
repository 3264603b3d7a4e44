//! The experiment suites behind each subcommand.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use lrex::dynamics::simulate;
use lrex::farm::run_replicas;
use lrex::fields::{LatticeTestFn, MartingaleObserver};
use lrex::kernel::{build_pn, moments, KernelMoments, RateKernel};
use lrex::lattice::sample_bernoulli;
use lrex::rng::replica_rng;
use lrex::sbe::{cauchy_differences, ou_covariance, run_path, SbePath, Scheme, SolverParams};
use lrex::stats::RunningStats;
use lrex::testfn::TestFunction;
use lrex::verify::enumeration::{check_equiv_dirichlet, dirichlet_form, generator_form, moving_particle_suite, LocalFunction};
use lrex::verify::montecarlo::{
    check_time_regularity, estimate_bg_error, estimate_ibp_error, run_stationary, stationary_statistics,
    two_time_covariance, Estimate, ReplicaOutput, StationaryRun,
};
use lrex::verify::check_appendix_lemmas;

use crate::config::{ExperimentConfig, SuiteName};
use crate::report::{csv_writer, header, num, Summary};

/// Run-wide settings after command-line overrides.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out: PathBuf,
    pub threads: usize,
    pub seed: u64,
    pub replicas: usize,
}

impl RunContext {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn stationary_run(cfg: &ExperimentConfig, ctx: &RunContext, n: u64) -> Result<StationaryRun> {
    Ok(StationaryRun {
        kernel: cfg.build_kernel()?,
        f: cfg.observable()?.1,
        n,
        length: cfg.sim.length,
        b: cfg.sim.b,
        checkpoints: cfg.sim.checkpoint_times(),
        eps_list: cfg.fields.eps_list.clone(),
        ells: vec![],
        replicas: ctx.replicas,
        threads: ctx.threads,
        seed: ctx.seed,
    })
}

pub fn run_suite(name: SuiteName, cfg: &ExperimentConfig, ctx: &RunContext, dump_events: bool) -> Result<Summary> {
    fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    match name {
        SuiteName::ValidateKernel => validate_kernel(cfg, ctx),
        SuiteName::Simulate => simulate_suite(cfg, ctx, dump_events),
        SuiteName::CheckLemmas => check_lemmas(cfg, ctx),
        SuiteName::BgPrinciple => bg_principle(cfg, ctx),
        SuiteName::Sbe => sbe_suite(cfg, ctx),
        SuiteName::Compare => compare(cfg, ctx),
    }
}

#[derive(Serialize)]
struct JumpLaw {
    n: u64,
    gamma_n: f64,
    p: Vec<(i64, f64)>,
}

#[derive(Serialize)]
struct KernelReport<'a> {
    s: Vec<(i64, f64)>,
    a: Vec<(i64, f64)>,
    domination_c: f64,
    moments: &'a KernelMoments,
    jump_laws: Vec<JumpLaw>,
}

fn validate_kernel(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Summary> {
    let k = cfg.build_kernel()?;
    let mo = moments(&k);
    let mut sum = Summary::default();
    sum.info("sigma2", mo.sigma2, None);
    sum.info("m", mo.m, None);
    sum.info("c1", mo.c1, None);
    sum.info("c2", mo.c2, None);
    let s_mass: f64 = k.s_values().values().sum();
    let mut laws = Vec::new();
    for n in cfg.sim.n_values() {
        let pn = build_pn(&k, n, cfg.sim.b).with_context(|| format!("jump law at n = {n}"))?;
        sum.at_most(format!("n={n} |sum p_n - sum s|"), (pn.total() - s_mass).abs(), 1e-12);
        let sites = cfg.sim.length * n as usize;
        sum.at_most(format!("n={n} support radius"), k.support_radius() as f64, (sites / 4) as f64);
        laws.push(JumpLaw {
            n,
            gamma_n: pn.gamma_n,
            p: pn.p_values().iter().map(|(&z, &v)| (z, v)).collect(),
        });
    }
    let report = KernelReport {
        s: k.s_values().iter().map(|(&z, &v)| (z, v)).collect(),
        a: k.a_values().iter().map(|(&z, &v)| (z, v)).collect(),
        domination_c: k.domination_c(),
        moments: &mo,
        jump_laws: laws,
    };
    fs::write(ctx.path("kernel.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(sum)
}

fn trajectory_header(eps: &[f64]) -> Vec<String> {
    let mut h = header(&["replica", "t", "Y", "drift_int", "A", "A_hat", "R", "M", "QV"]);
    h.extend(eps.iter().map(|e| format!("A_eps_{e}")));
    h
}

fn write_trajectories(path: PathBuf, eps: &[f64], outs: &[ReplicaOutput]) -> Result<()> {
    let mut w = csv_writer(&path, &trajectory_header(eps))?;
    for o in outs {
        for r in &o.records {
            let mut row = vec![o.replica.to_string()];
            row.extend([r.t, r.y, r.drift_int, r.a, r.a_hat, r.r, r.m, r.qv].map(num));
            row.extend(r.a_eps.iter().map(|&v| num(v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn simulate_suite(cfg: &ExperimentConfig, ctx: &RunContext, dump_events: bool) -> Result<Summary> {
    let run = stationary_run(cfg, ctx, cfg.sim.main_n())?;
    let params = run.params();
    params.validate()?;
    let lf = LatticeTestFn::new(&run.f, &run.kernel, run.n)?;
    let pn = build_pn(&run.kernel, run.n, run.b)?;
    let results = run_replicas(run.replicas, run.threads, run.seed, |i, rng| -> Result<_> {
        let init = sample_bernoulli(params.n_sites(), 0.5, rng)?;
        let mut obs = MartingaleObserver::new(&lf, &pn, run.b, &init, &run.eps_list, &[])?;
        let traj = simulate(&init, &params, &pn, &mut [&mut obs], dump_events, rng)?;
        let out = ReplicaOutput {
            replica: i,
            y0: obs.initial_field(),
            max_jump: obs.max_jump(),
            records: obs.into_records(),
        };
        Ok((out, traj))
    });
    let mut outs = Vec::with_capacity(results.len());
    let (mut attempts, mut accepted) = (0u64, 0u64);
    if dump_events {
        fs::create_dir_all(ctx.path("events"))?;
    }
    for res in results {
        let (out, traj) = res?;
        attempts += traj.attempts;
        accepted += traj.accepted;
        if dump_events {
            let path = ctx.path(&format!("events/replica_{:05}.ndjson", out.replica));
            let mut file = std::io::BufWriter::new(fs::File::create(&path)?);
            for e in &traj.events {
                serde_json::to_writer(&mut file, e)?;
                file.write_all(b"\n")?;
            }
            file.flush()?;
        }
        outs.push(out);
    }
    write_trajectories(ctx.path("trajectories.csv"), &run.eps_list, &outs)?;

    let rep = stationary_statistics(&run, &outs, params.t_max)?;
    let mut sum = Summary::default();
    sum.estimate("Var Y_0", &rep.var_y0, rep.var_y0_target);
    sum.estimate("E<M>_t exact", &rep.qv, rep.qv_exact);
    sum.push(
        "E<M>_t continuum (10%)",
        rep.qv.mean,
        rep.qv_continuum,
        Some(rep.qv.se),
        (rep.qv.mean / rep.qv_continuum - 1.0).abs() <= 0.10,
    );
    sum.estimate("E[M^2] - E<M>", &rep.m2_minus_qv, 0.0);
    sum.at_most("max jump of Y", rep.max_jump, rep.jump_bound);
    sum.info("acceptance fraction", accepted as f64 / attempts.max(1) as f64, None);
    Ok(sum)
}

fn check_lemmas(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Summary> {
    let k = cfg.build_kernel()?;
    let (_, f) = cfg.observable()?;
    let mut sum = Summary::default();

    let ns = &cfg.enumeration.appendix_n;
    if ns.len() < 2 {
        bail!("enumeration.appendix_n needs at least two levels");
    }
    let rep = check_appendix_lemmas(&f, &k, ns);
    let mut w = csv_writer(&ctx.path("appendix_errors.csv"), &header(&["sequence", "n", "error"]))?;
    for l in [&rep.generator_sup, &rep.generator_l1, &rep.energy, &rep.tilted] {
        for (n, e) in l.params.iter().zip(&l.errors) {
            w.write_record([l.lemma.clone(), num(*n), num(*e)])?;
        }
        sum.push(format!("{} exponent (decreasing)", l.lemma), l.exponent, 0.0, None, l.pass);
    }
    w.flush()?;
    sum.at_most("energy relative error at finest n", rep.energy_relative_error(), 0.02);

    let e = &cfg.enumeration;
    let mut rng = replica_rng(ctx.seed, 0);
    let mut w = csv_writer(&ctx.path("enumeration.csv"), &header(&["quantity", "z", "value"]))?;
    let mp = moving_particle_suite(e.sites, e.zmax, e.trials, &mut rng)?;
    sum.at_most("moving particle violations", mp.violations as f64, 0.0);
    for (z, r) in mp.minimal_factor.iter().enumerate() {
        w.write_record(["largest_ratio".into(), (z + 1).to_string(), num(*r)])?;
        w.write_record(["factor".into(), (z + 1).to_string(), num(4.0 * (z + 1) as f64 - 3.0)])?;
    }
    if 2 * k.support_radius() <= e.sites {
        let eq = check_equiv_dirichlet(&k, e.sites, e.trials, &mut rng)?;
        sum.at_most("form equivalence lower violations", eq.lower_violations as f64, 0.0);
        sum.at_most("form equivalence upper violations", eq.upper_violations as f64, 0.0);
        for (q, v) in [("c1", eq.c1), ("c2", eq.c2), ("min_ratio", eq.min_ratio), ("max_ratio", eq.max_ratio)] {
            w.write_record([q.into(), String::new(), num(v)])?;
        }
    } else {
        sum.info("form equivalence skipped: support radius exceeds half the sites", k.support_radius() as f64, None);
    }
    w.flush()?;

    let nn = RateKernel::nearest_neighbor(1.0)?;
    let mut worst = 0.0f64;
    for _ in 0..e.trials.min(200) {
        let h = LocalFunction::random(e.sites, 0, &mut rng)?;
        worst = worst.max((dirichlet_form(&h, e.sites)? - 2.0 * generator_form(&h, &nn, e.sites)?).abs());
    }
    sum.at_most("nearest neighbour |D - 2<h,-Sh>|", worst, 1e-12);
    Ok(sum)
}

fn bg_principle(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Summary> {
    let mut sum = Summary::default();
    let mut w = csv_writer(&ctx.path("bg_errors.csv"), &header(&["quantity", "param", "mean", "se"]))?;
    let n = cfg.sim.main_n();
    let t = cfg.sim.t_max;

    let ns = cfg.sim.n_values();
    if ns.len() >= 2 {
        let mut base = stationary_run(cfg, ctx, n)?;
        base.checkpoints = vec![0.0, 0.5 * t, t];
        let ibp = estimate_ibp_error(&base, &ns)?;
        for p in &ibp.points {
            w.write_record(["ibp_r2".into(), p.n.to_string(), num(p.r2.mean), num(p.r2.se)])?;
        }
        sum.push("ibp exponent", ibp.exponent, ibp.exponent_window.1, None, ibp.pass());
    }

    let mut base = stationary_run(cfg, ctx, n)?;
    base.checkpoints = vec![0.0, t];
    let bg = estimate_bg_error(&base, &cfg.fields.ell_list)?;
    for (l, (e, g)) in bg.ells.iter().zip(bg.error.iter().zip(&bg.gap)) {
        w.write_record(["bg_error".into(), l.to_string(), num(e.mean), num(e.se)])?;
        w.write_record(["psi_gap".into(), l.to_string(), num(g.mean), num(g.se)])?;
    }
    sum.push("bg error slope in ell", bg.error_slope, 1.2, None, bg.linear_in_ell());
    sum.push("psi gap exponent", bg.gap_exponent, -1.5, None, bg.gap_exponent_ok());
    sum.at_most("bg error at ell = 2", bg.ell2_error, 1e-9);

    let mut base = stationary_run(cfg, ctx, n)?;
    base.checkpoints = [0.0, 1.0, 2.0, 4.0, 8.0, 9.0, 10.0, 12.0, 16.0].iter().map(|k| k * t / 16.0).collect();
    let reps = run_stationary(&base)?;
    let gaps: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|k| k * t / 16.0).collect();
    let reg = check_time_regularity(&reps, &gaps, Some(0.5 * t))?;
    for (h, e) in reg.gaps.iter().zip(&reg.increments) {
        w.write_record(["a_hat_increment".into(), num(*h), num(e.mean), num(e.se)])?;
    }
    w.flush()?;
    sum.push("a_hat increment exponent", reg.exponent, 1.2, None, reg.pass());
    sum.push("a_hat increments stationary", reg.shifted.len() as f64, f64::NAN, None, reg.stationary());
    Ok(sum)
}

struct SbeSettings {
    points: usize,
    params: SolverParams,
    coeffs: (f64, f64, f64),
    record_every: u64,
    replicas: usize,
}

fn sbe_settings(cfg: &ExperimentConfig, ctx: &RunContext, b: f64, t_max: f64) -> Result<SbeSettings> {
    let mo = moments(&cfg.build_kernel()?);
    let s = &cfg.sbe;
    Ok(SbeSettings {
        points: s.points,
        params: SolverParams {
            dt: s.dt,
            t_max,
            noise_seed: ctx.seed,
            scheme: Scheme::ExponentialEuler,
            dealias: s.dealias,
        },
        coeffs: (s.sigma2.unwrap_or(mo.sigma2), b, s.m.unwrap_or(mo.m)),
        record_every: s.record_every,
        replicas: s.replicas.unwrap_or(ctx.replicas),
    })
}

fn sbe_paths(st: &SbeSettings, f: &TestFunction, eps: &[f64], ctx: &RunContext) -> Result<Vec<SbePath>> {
    run_replicas(st.replicas, ctx.threads, ctx.seed, |_, rng| {
        run_path(st.points, f, st.coeffs, &st.params, eps, st.record_every, rng)
    })
    .into_iter()
    .map(|r| r.map_err(Into::into))
    .collect()
}

fn sbe_suite(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Summary> {
    let (_, f) = cfg.observable()?;
    let st = sbe_settings(cfg, ctx, cfg.sbe.b, cfg.sbe.t_max)?;
    let eps = &cfg.sbe.eps_list;
    let paths = sbe_paths(&st, &f, eps, ctx)?;
    let record_dt = st.params.dt * st.record_every as f64;

    let mut w = csv_writer(&ctx.path("sbe_paths.csv"), &header(&["replica", "t", "Y", "martingale", "drift"]))?;
    for (i, p) in paths.iter().enumerate() {
        for (k, ((y, m), d)) in p.y.iter().zip(&p.martingale).zip(&p.drift).enumerate() {
            w.write_record([i.to_string(), num(k as f64 * record_dt), num(*y), num(*m), num(*d)])?;
        }
    }
    w.flush()?;

    let mut w = csv_writer(
        &ctx.path("sbe_stats.csv"),
        &header(&["t", "mean_Y", "var_Y", "mean_martingale", "var_martingale", "var_martingale_se"]),
    )?;
    for k in 0..paths[0].y.len() {
        let y = RunningStats::from_slice(&paths.iter().map(|p| p.y[k]).collect::<Vec<_>>());
        let m = RunningStats::from_slice(&paths.iter().map(|p| p.martingale[k]).collect::<Vec<_>>());
        let m2 = Estimate::of(paths.iter().map(|p| p.martingale[k].powi(2)));
        w.write_record([k as f64 * record_dt, y.mean(), y.variance(), m.mean(), m2.mean, m2.se].map(num))?;
    }
    w.flush()?;

    let mut hdr = header(&["replica"]);
    hdr.extend(eps.iter().map(|e| format!("B_eps_{e}")));
    let mut w = csv_writer(&ctx.path("sbe_functionals.csv"), &hdr)?;
    for (i, p) in paths.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.burgers.iter().map(|&v| num(v)));
        w.write_record(&row)?;
    }
    w.flush()?;

    if cfg.sbe.snapshots {
        let mut w = csv_writer(&ctx.path("sbe_mode_power.csv"), &header(&["replica", "k", "final", "time_mean"]))?;
        for (i, p) in paths.iter().enumerate() {
            for (k, (a, b)) in p.final_power.iter().zip(&p.mean_power).enumerate() {
                w.write_record([i.to_string(), k.to_string(), num(*a), num(*b)])?;
            }
        }
        w.flush()?;
    }

    let mut sum = Summary::default();
    let dx = f.length() / st.points as f64;
    let stationary = st.points as f64 / (4.0 * dx);
    let cutoff = st.points / 3;
    let worst = (1..=cutoff)
        .map(|k| {
            let mean = paths.iter().map(|p| p.mean_power[k]).sum::<f64>() / paths.len() as f64;
            (mean / stationary - 1.0).abs()
        })
        .fold(0.0, f64::max);
    sum.at_most("mode variance deviation below cutoff", worst, 0.10);
    sum.at_most(
        "mass change per step",
        paths.iter().map(|p| p.max_mass_drift).fold(0.0, f64::max),
        1e-10,
    );
    let target = 0.25 * st.coeffs.0 * st.params.t_max * f.d1_l2_norm_sq();
    let var = Estimate::of(paths.iter().map(|p| p.martingale.last().unwrap().powi(2)));
    sum.estimate("martingale variance", &var, target);
    let means: Vec<f64> = (0..eps.len())
        .map(|j| paths.iter().map(|p| p.burgers[j]).sum::<f64>() / paths.len() as f64)
        .collect();
    for (e, m) in eps.iter().zip(&means) {
        sum.info(format!("mean B_eps at eps = {e}"), *m, None);
    }
    for (j, d) in cauchy_differences(&means).iter().enumerate() {
        sum.info(format!("|B_eps difference| {} -> {}", eps[j], eps[j + 1]), *d, None);
    }
    Ok(sum)
}

fn compare(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Summary> {
    let (_, f) = cfg.observable()?;
    let k = cfg.build_kernel()?;
    let sigma2 = moments(&k).sigma2;
    let times = cfg.sim.checkpoint_times();
    let b = cfg.sim.b;
    let mut sum = Summary::default();
    let mut w = csv_writer(
        &ctx.path("compare.csv"),
        &header(&["t", "source", "n", "mean", "se", "closed_form_b0"]),
    )?;
    let closed: Vec<f64> = times.iter().map(|&t| ou_covariance(&f, &f, t, sigma2)).collect();

    let st = sbe_settings(cfg, ctx, b, cfg.sim.t_max)?;
    if (st.coeffs.0 - sigma2).abs() > 1e-12 {
        bail!("sbe.sigma2 differs from the kernel variance; the two systems are not comparable");
    }
    let record_dt = st.params.dt * st.record_every as f64;
    let idx: Vec<usize> = times
        .iter()
        .map(|&t| {
            let i = (t / record_dt).round();
            if (i * record_dt - t).abs() > 1e-9 {
                bail!("checkpoint {t} is not a multiple of the solver record interval {record_dt}");
            }
            Ok(i as usize)
        })
        .collect::<Result<_>>()?;
    let paths = sbe_paths(&st, &f, &[], ctx)?;
    let sbe_cov: Vec<Estimate> = idx.iter().map(|&i| Estimate::of(paths.iter().map(|p| p.y[i] * p.y[0]))).collect();
    for ((t, e), c) in times.iter().zip(&sbe_cov).zip(&closed) {
        w.write_record([num(*t), "sbe".into(), String::new(), num(e.mean), num(e.se), num(*c)])?;
    }

    let mut particle = Vec::new();
    for n in cfg.sim.n_values() {
        let run = stationary_run(cfg, ctx, n)?;
        let reps = run_stationary(&run)?;
        let cov = two_time_covariance(&reps, &times)?;
        for ((t, e), c) in times.iter().zip(&cov).zip(&closed) {
            w.write_record([num(*t), "particle".into(), n.to_string(), num(e.mean), num(e.se), num(*c)])?;
        }
        particle.push((n, cov));
    }
    w.flush()?;

    let (n_fine, fine) = particle.last().unwrap();
    let var_target = 0.25 * f.l2_norm_sq();
    sum.estimate(format!("particle n={n_fine} equal-time variance"), &fine[0], var_target);
    sum.estimate("sbe equal-time variance", &sbe_cov[0], var_target);
    if b == 0.0 {
        for (i, t) in times.iter().enumerate().skip(1) {
            sum.estimate(format!("particle n={n_fine} E[Y_t Y_0] at t = {t}"), &fine[i], closed[i]);
            sum.estimate(format!("sbe E[Y_t Y_0] at t = {t}"), &sbe_cov[i], closed[i]);
        }
    } else {
        for (n, cov) in &particle {
            for (i, t) in times.iter().enumerate().skip(1) {
                let d = cov[i].mean - sbe_cov[i].mean;
                let se = (cov[i].se.powi(2) + sbe_cov[i].se.powi(2)).sqrt();
                sum.info(format!("n={n} particle - sbe E[Y_t Y_0] at t = {t}"), d, Some(se));
            }
        }
    }
    Ok(sum)
}
