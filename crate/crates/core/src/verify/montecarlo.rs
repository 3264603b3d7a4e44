//! Monte-Carlo estimators over stationary replicas.
//!
//! Every replica starts from Bernoulli(1/2), runs with its own seeded
//! stream and reports the martingale decomposition at the configured
//! checkpoints. Statistical checks use four standard errors of the replica
//! mean; scaling checks fit exponents by least squares on log-log values.

use serde::Serialize;

use crate::dynamics::{simulate, DynamicsError, SimParams};
use crate::farm::run_replicas;
use crate::fields::{FieldSnapshots, FieldsError, LatticeTestFn, MartingaleObserver, MartingaleRecord};
use crate::kernel::{build_pn, moments, KernelError, RateKernel};
use crate::lattice::{sample_bernoulli, LatticeError};
use crate::stats::{loglog_fit, RunningStats};
use crate::testfn::TestFunction;

/// Width of every statistical acceptance band, in standard errors.
pub const SE_BAND: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonteCarloError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Fields(#[from] FieldsError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("checkpoint {0} not configured")]
    MissingCheckpoint(f64),
}

/// Description of a batch of stationary replicas.
#[derive(Debug, Clone)]
pub struct StationaryRun {
    pub kernel: RateKernel,
    pub f: TestFunction,
    pub n: u64,
    pub length: usize,
    pub b: f64,
    pub checkpoints: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub ells: Vec<usize>,
    pub replicas: usize,
    pub threads: usize,
    pub seed: u64,
}

impl StationaryRun {
    pub fn params(&self) -> SimParams {
        SimParams {
            n: self.n,
            length: self.length,
            b: self.b,
            t_max: self.checkpoints.last().copied().unwrap_or(0.0),
            seed: self.seed,
            checkpoint_times: self.checkpoints.clone(),
        }
    }

    pub fn with_n(&self, n: u64) -> Self {
        Self { n, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaOutput {
    pub replica: usize,
    pub y0: f64,
    pub max_jump: f64,
    pub records: Vec<MartingaleRecord>,
}

impl ReplicaOutput {
    pub fn at(&self, t: f64) -> Result<&MartingaleRecord, MonteCarloError> {
        self.records
            .iter()
            .find(|r| (r.t - t).abs() < 1e-12)
            .ok_or(MonteCarloError::MissingCheckpoint(t))
    }
}

/// Runs the replicas and returns their decompositions in replica order.
pub fn run_stationary(run: &StationaryRun) -> Result<Vec<ReplicaOutput>, MonteCarloError> {
    let params = run.params();
    params.validate()?;
    let lf = LatticeTestFn::new(&run.f, &run.kernel, run.n)?;
    let pn = build_pn(&run.kernel, run.n, run.b)?;
    let results = run_replicas(run.replicas, run.threads, run.seed, |i, rng| {
        let init = sample_bernoulli(params.n_sites(), 0.5, rng)?;
        let mut obs = MartingaleObserver::new(&lf, &pn, run.b, &init, &run.eps_list, &run.ells)?;
        simulate(&init, &params, &pn, &mut [&mut obs], false, rng)?;
        Ok(ReplicaOutput {
            replica: i,
            y0: obs.initial_field(),
            max_jump: obs.max_jump(),
            records: obs.into_records(),
        })
    });
    results.into_iter().collect()
}

/// Mean and standard error of a per-replica statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut st = RunningStats::new();
        values.into_iter().for_each(|v| st.push(v));
        Self {
            mean: st.mean(),
            se: st.se(),
        }
    }

    /// `|mean - target| <= 4 se`.
    pub fn within(&self, target: f64) -> bool {
        (self.mean - target).abs() <= SE_BAND * self.se
    }

    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryReport {
    pub t: f64,
    pub var_y0: Estimate,
    pub var_y0_target: f64,
    pub qv: Estimate,
    pub qv_exact: f64,
    pub qv_continuum: f64,
    /// `M_t^2 - <M>_t`
    pub m2_minus_qv: Estimate,
    pub m_mean: Estimate,
    pub max_jump: f64,
    pub jump_bound: f64,
}

impl StationaryReport {
    pub fn checks(&self) -> [(&'static str, bool); 5] {
        [
            ("var_y0", self.var_y0.within(self.var_y0_target)),
            ("qv_exact", self.qv.within(self.qv_exact)),
            (
                "qv_continuum",
                (self.qv.mean / self.qv_continuum - 1.0).abs() <= 0.10,
            ),
            ("m2_minus_qv", self.m2_minus_qv.within(0.0)),
            ("max_jump", self.max_jump <= self.jump_bound),
        ]
    }

    pub fn pass(&self) -> bool {
        self.checks().iter().all(|c| c.1)
    }
}

/// Stationary moments of the field and of the martingale at time `t`.
pub fn stationary_statistics(
    run: &StationaryRun,
    out: &[ReplicaOutput],
    t: f64,
) -> Result<StationaryReport, MonteCarloError> {
    let lf = LatticeTestFn::new(&run.f, &run.kernel, run.n)?;
    let recs: Vec<&MartingaleRecord> = out.iter().map(|o| o.at(t)).collect::<Result<_, _>>()?;
    let sigma2 = moments(&run.kernel).sigma2;
    Ok(StationaryReport {
        t,
        var_y0: Estimate::of(out.iter().map(|o| o.y0 * o.y0)),
        var_y0_target: 0.25 * run.f.l2_norm_sq(),
        qv: Estimate::of(recs.iter().map(|r| r.qv)),
        qv_exact: lf.expected_qv(&run.kernel, t),
        qv_continuum: 0.25 * sigma2 * t * run.f.d1_l2_norm_sq(),
        m2_minus_qv: Estimate::of(recs.iter().map(|r| r.m * r.m - r.qv)),
        m_mean: Estimate::of(recs.iter().map(|r| r.m)),
        max_jump: out.iter().map(|o| o.max_jump).fold(0.0, f64::max),
        jump_bound: 2.0 * run.f.sup_norm() / (run.n as f64).sqrt(),
    })
}

/// `E[Y_t(f) Y_0(f)]` at every checkpoint.
pub fn two_time_covariance(out: &[ReplicaOutput], times: &[f64]) -> Result<Vec<Estimate>, MonteCarloError> {
    times
        .iter()
        .map(|&t| {
            let vals: Vec<f64> = out
                .iter()
                .map(|o| o.at(t).map(|r| r.y * o.y0))
                .collect::<Result<_, _>>()?;
            Ok(Estimate::of(vals))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IbpPoint {
    pub n: u64,
    pub t: f64,
    pub r2: Estimate,
    /// `E[R_t^2] n / t`, bounded in `n` when the `C t / n` bound holds.
    pub constant: f64,
    /// `min(t/n, t^2 n)`
    pub crude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IbpReport {
    pub points: Vec<IbpPoint>,
    pub exponent: f64,
    pub exponent_window: (f64, f64),
    /// `E[R_t^2]` increases along the checkpoints for every `n`.
    pub monotone_in_t: bool,
}

impl IbpReport {
    pub fn pass(&self) -> bool {
        self.exponent >= self.exponent_window.0
            && self.exponent <= self.exponent_window.1
            && self.monotone_in_t
    }
}

/// `E[(A_t - Â_t)^2]` across `n_list`, fitted at the last checkpoint.
pub fn estimate_ibp_error(base: &StationaryRun, n_list: &[u64]) -> Result<IbpReport, MonteCarloError> {
    let t = *base.checkpoints.last().ok_or(MonteCarloError::MissingCheckpoint(0.0))?;
    let mut points = Vec::new();
    let mut monotone = true;
    for &n in n_list {
        let out = run_stationary(&base.with_n(n))?;
        let per_t: Vec<f64> = base
            .checkpoints
            .iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| Estimate::of(out.iter().map(|o| o.at(s).unwrap().r.powi(2))).mean)
            .collect();
        monotone &= per_t.windows(2).all(|w| w[1] >= w[0]);
        let r2 = Estimate::of(out.iter().map(|o| o.at(t).unwrap().r.powi(2)));
        let nf = n as f64;
        points.push(IbpPoint {
            n,
            t,
            constant: r2.mean * nf / t,
            crude: (t / nf).min(t * t * nf),
            r2,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.r2.mean).collect();
    Ok(IbpReport {
        exponent: loglog_fit(&xs, &ys).0,
        exponent_window: (-1.4, -0.6),
        monotone_in_t: monotone,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BgReport {
    pub n: u64,
    pub t: f64,
    pub ells: Vec<usize>,
    /// `E[(int sum (etabar etabar_+1 - psi^ell) tilted f)^2]`
    pub error: Vec<Estimate>,
    /// `error / (ell t / n^2 sum (tilted f)^2)`
    pub constants: Vec<f64>,
    pub error_slope: f64,
    /// `E[(int sum (psi^ell - psi_tilde^ell) tilted f)^2]`
    pub gap: Vec<Estimate>,
    pub gap_exponent: f64,
    /// Largest `|error|` at `ell = 2` over replicas (identically zero).
    pub ell2_error: f64,
}

impl BgReport {
    /// Error grows at most linearly in `ell`.
    pub fn linear_in_ell(&self) -> bool {
        self.error_slope <= 1.2
    }

    pub fn gap_exponent_ok(&self) -> bool {
        (-2.5..=-1.5).contains(&self.gap_exponent)
    }
}

/// Block-replacement errors over `ell_list` at the last checkpoint.
pub fn estimate_bg_error(base: &StationaryRun, ell_list: &[usize]) -> Result<BgReport, MonteCarloError> {
    let t = *base.checkpoints.last().ok_or(MonteCarloError::MissingCheckpoint(0.0))?;
    let mut run = base.clone();
    run.ells = ell_list.iter().copied().chain([2]).collect();
    let out = run_stationary(&run)?;
    let lf = LatticeTestFn::new(&run.f, &run.kernel, run.n)?;
    let tilted_sq: f64 = lf.tilted_values().iter().map(|v| v * v).sum();
    let nf = run.n as f64;
    let last: Vec<&MartingaleRecord> = out.iter().map(|o| o.at(t)).collect::<Result<_, _>>()?;
    let error: Vec<Estimate> = ell_list
        .iter()
        .map(|&l| Estimate::of(last.iter().map(|r| r.bg_error(l).powi(2))))
        .collect();
    let gap: Vec<Estimate> = ell_list
        .iter()
        .map(|&l| Estimate::of(last.iter().map(|r| r.psi_gap(l).powi(2))))
        .collect();
    let xs: Vec<f64> = ell_list.iter().map(|&l| l as f64).collect();
    let constants = ell_list
        .iter()
        .zip(&error)
        .map(|(&l, e)| e.mean / (l as f64 * t / (nf * nf) * tilted_sq))
        .collect();
    Ok(BgReport {
        n: run.n,
        t,
        ells: ell_list.to_vec(),
        error_slope: loglog_fit(&xs, &error.iter().map(|e| e.mean).collect::<Vec<_>>()).0,
        gap_exponent: loglog_fit(&xs, &gap.iter().map(|e| e.mean).collect::<Vec<_>>()).0,
        constants,
        error,
        gap,
        ell2_error: last.iter().map(|r| r.bg_error(2).abs()).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub gaps: Vec<f64>,
    /// `E[(Â_{s+h} - Â_s)^2]` from `s = 0`.
    pub increments: Vec<Estimate>,
    pub exponent: f64,
    /// Same statistic from a later start, for the gaps that fit.
    pub shifted: Vec<(f64, Estimate)>,
}

impl RegularityReport {
    pub fn pass(&self) -> bool {
        self.exponent >= 1.2
    }

    /// Increments from both starts agree within the combined band.
    pub fn stationary(&self) -> bool {
        self.shifted.iter().all(|(h, e)| {
            let i = self.gaps.iter().position(|g| (g - h).abs() < 1e-12).unwrap();
            let base = self.increments[i];
            (e.mean - base.mean).abs() <= SE_BAND * (e.se.powi(2) + base.se.powi(2)).sqrt()
        })
    }
}

/// Time regularity of `Â` over dyadic gaps; `shift` is a later start time
/// whose increments are compared with those from 0.
pub fn check_time_regularity(
    out: &[ReplicaOutput],
    gaps: &[f64],
    shift: Option<f64>,
) -> Result<RegularityReport, MonteCarloError> {
    let inc = |s: f64, h: f64| -> Result<Estimate, MonteCarloError> {
        let vals: Vec<f64> = out
            .iter()
            .map(|o| Ok((o.at(s + h)?.a_hat - o.at(s)?.a_hat).powi(2)))
            .collect::<Result<_, MonteCarloError>>()?;
        Ok(Estimate::of(vals))
    };
    let increments: Vec<Estimate> = gaps.iter().map(|&h| inc(0.0, h)).collect::<Result<_, _>>()?;
    let mut shifted = Vec::new();
    if let Some(s) = shift {
        for &h in gaps {
            if let Ok(e) = inc(s, h) {
                shifted.push((h, e));
            }
        }
    }
    let means: Vec<f64> = increments.iter().map(|e| e.mean).collect();
    Ok(RegularityReport {
        exponent: loglog_fit(gaps, &means).0,
        gaps: gaps.to_vec(),
        increments,
        shifted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversalReport {
    pub times: Vec<f64>,
    /// `E[Y_0(f) Y_t(g)]` under the forward kernel.
    pub forward: Vec<Estimate>,
    /// `E[Y_t(f) Y_0(g)]` under the reversed kernel.
    pub reversed: Vec<Estimate>,
    /// `E[Y_t(f) Y_0(g)]` under the forward kernel, for contrast.
    pub forward_unreversed: Vec<Estimate>,
    pub z_scores: Vec<f64>,
}

impl ReversalReport {
    pub fn pass(&self) -> bool {
        self.z_scores.iter().all(|z| z.abs() <= SE_BAND)
    }
}

/// `(t, values)` pairs recorded along one replica.
type PairedSamples = Vec<(f64, Vec<f64>)>;

/// Compares two-time field statistics of the forward process read backwards
/// with those of the process run under `p_n^*(z) = p_n(-z)`.
pub fn reverse_time_law_check(
    params: &SimParams,
    kernel: &RateKernel,
    f: &TestFunction,
    g: &TestFunction,
    replicas: usize,
    threads: usize,
) -> Result<ReversalReport, MonteCarloError> {
    params.validate()?;
    let run = |k: &RateKernel, seed: u64| -> Result<Vec<PairedSamples>, MonteCarloError> {
        let lf = LatticeTestFn::new(f, k, params.n)?;
        let lg = LatticeTestFn::new(g, k, params.n)?;
        let pn = build_pn(k, params.n, params.b)?;
        let mut cps = params.checkpoint_times.clone();
        if cps.first() != Some(&0.0) {
            cps.insert(0, 0.0);
        }
        let p = SimParams {
            checkpoint_times: cps,
            ..params.clone()
        };
        run_replicas(replicas, threads, seed, |_, rng| {
            let init = sample_bernoulli(p.n_sites(), 0.5, rng)?;
            let mut snaps = FieldSnapshots::new(vec![&lf, &lg]);
            simulate(&init, &p, &pn, &mut [&mut snaps], false, rng)?;
            Ok(snaps.into_values())
        })
        .into_iter()
        .collect()
    };
    let fwd = run(kernel, params.seed)?;
    let rev = run(&kernel.reversed(), params.seed ^ 0x0005_eed0_f7e7_e75e)?;
    let times: Vec<f64> = fwd[0].iter().map(|(t, _)| *t).collect();
    let mut report = ReversalReport {
        times: times.clone(),
        forward: vec![],
        reversed: vec![],
        forward_unreversed: vec![],
        z_scores: vec![],
    };
    for k in 0..times.len() {
        let fw = Estimate::of(fwd.iter().map(|r| r[0].1[0] * r[k].1[1]));
        let rv = Estimate::of(rev.iter().map(|r| r[k].1[0] * r[0].1[1]));
        let fu = Estimate::of(fwd.iter().map(|r| r[k].1[0] * r[0].1[1]));
        report
            .z_scores
            .push((fw.mean - rv.mean) / (fw.se.powi(2) + rv.se.powi(2)).sqrt());
        report.forward.push(fw);
        report.reversed.push(rv);
        report.forward_unreversed.push(fu);
    }
    Ok(report)
}
