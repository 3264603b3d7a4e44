use lrex::farm::run_replicas;
use lrex::sbe::{sample_stationary, Scheme, Solver, SolverParams};
use lrex::stats::{loglog_fit, RunningStats};
use lrex::testfn::TestFunction;

const POINTS: usize = 64;
const LENGTH: f64 = 4.0;

fn params(dt: f64, t_max: f64) -> SolverParams {
    SolverParams {
        dt,
        t_max,
        noise_seed: 0,
        scheme: Scheme::ExponentialEuler,
        dealias: true,
    }
}

/// `(Y_t(f), Y_t(g))` at `t = 0, every * dt, ...` along one stationary path.
fn paired_path(b: f64, f: &TestFunction, g: &TestFunction, steps: u64, every: u64, seed: u64, replica: usize) -> Vec<(f64, f64)> {
    let dx = LENGTH / POINTS as f64;
    let mut rng = lrex::rng::replica_rng(seed, replica as u64);
    let mut field = sample_stationary(POINTS, dx, &mut rng).unwrap().with_coefficients(1.0, b, 1.0);
    let mut solver = Solver::new(POINTS, dx, params(1e-3, steps as f64 * 1e-3)).unwrap();
    let pair = |field: &lrex::sbe::GridField| (field.pair(|u| f.value(u)), field.pair(|u| g.value(u)));
    let mut out = vec![pair(&field)];
    for s in 1..=steps {
        solver.step(&mut field, &mut rng).unwrap();
        if s % every == 0 {
            out.push(pair(&field));
        }
    }
    out
}

#[test]
fn reversed_asymmetry_matches_time_reversal() {
    // under the stationary white-noise law, reading a path with drift b
    // backwards gives the law of the path with drift -b
    let f = TestFunction::gaussian(1.6, 0.3, LENGTH).unwrap();
    let g = TestFunction::gaussian(2.2, 0.3, LENGTH).unwrap();
    let replicas = 600;
    let run = |b: f64, seed: u64| run_replicas(replicas, 1, seed, |i, _| paired_path(b, &f, &g, 200, 50, seed, i));
    let fwd = run(1.0, 3);
    let rev = run(-1.0, 4);
    for k in 1..fwd[0].len() {
        let a = RunningStats::from_slice(&fwd.iter().map(|p| p[0].0 * p[k].1).collect::<Vec<_>>());
        let r = RunningStats::from_slice(&rev.iter().map(|p| p[k].0 * p[0].1).collect::<Vec<_>>());
        let z = (a.mean() - r.mean()) / (a.se().powi(2) + r.se().powi(2)).sqrt();
        assert!(z.abs() <= 4.0, "lag {k}: {} vs {} (z = {z})", a.mean(), r.mean());
    }
    // equal-time covariance is the white-noise value for both
    let target = 0.25 * f.periodic_quadrature(POINTS, |u| f.value(u) * g.value(u));
    for runs in [&fwd, &rev] {
        let c = RunningStats::from_slice(&runs.iter().map(|p| p.last().unwrap().0 * p.last().unwrap().1).collect::<Vec<_>>());
        assert!((c.mean() - target).abs() <= 4.0 * c.se());
    }
}

#[test]
fn drift_integral_has_vanishing_quadratic_variation() {
    // sum over a grid of spacing delta of (A_{t+delta} - A_t)^2 shrinks at
    // least like delta^(1/2); a Brownian-type term would not shrink at all
    let f = TestFunction::gaussian(2.0, 0.4, LENGTH).unwrap();
    let dx = LENGTH / POINTS as f64;
    let fv: Vec<f64> = (0..POINTS).map(|j| f.value(j as f64 * dx)).collect();
    let steps = 512u64;
    let sums = run_replicas(100, 1, 21, |_, rng| {
        let mut field = sample_stationary(POINTS, dx, rng).unwrap().with_coefficients(1.0, 1.0, 1.0);
        let mut solver = Solver::new(POINTS, dx, params(1e-3, steps as f64 * 1e-3)).unwrap();
        let mut a = vec![0.0];
        for _ in 0..steps {
            solver.step(&mut field, rng).unwrap();
            let inc: f64 = solver.last_drift().iter().zip(&fv).map(|(d, w)| d * w).sum::<f64>() * dx * 1e-3;
            a.push(a.last().unwrap() + inc);
        }
        [8usize, 16, 32, 64, 128]
            .map(|h| a.iter().step_by(h).collect::<Vec<_>>().windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>())
    });
    let deltas: Vec<f64> = [8.0, 16.0, 32.0, 64.0, 128.0].iter().map(|h| h * 1e-3).collect();
    let means: Vec<f64> = (0..5).map(|i| sums.iter().map(|s| s[i]).sum::<f64>() / sums.len() as f64).collect();
    let (exponent, _) = loglog_fit(&deltas, &means);
    assert!(exponent >= 0.5, "{exponent}: {means:?}");
}
