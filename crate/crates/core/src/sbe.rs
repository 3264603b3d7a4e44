//! Reference solver for the stochastic Burgers equation
//! `dY = sigma^2/2 Y'' dt + b m (Y^2)' dt + sigma/2 d(xi')` on a periodic grid.
//!
//! The state lives in Fourier space. Each step applies the quadratic drift
//! by explicit Euler (dealiased), then integrates the linear part exactly in
//! law: mode `k` is an Ornstein-Uhlenbeck process with rate
//! `sigma^2 khat^2 / 2` whose stationary law is discrete white noise of
//! variance `1 / (4 dx)` per cell.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::testfn::TestFunction;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SbeError {
    #[error("grid needs at least 8 points, got {0}")]
    GridTooSmall(usize),
    #[error("field blew up at step {step}")]
    Instability { step: u64 },
    #[error("invalid solver parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub dx: f64,
    pub values: Vec<f64>,
    pub sigma2: f64,
    pub b: f64,
    pub m: f64,
}

impl GridField {
    pub fn points(&self) -> usize {
        self.values.len()
    }

    pub fn length(&self) -> f64 {
        self.dx * self.values.len() as f64
    }

    pub fn with_coefficients(mut self, sigma2: f64, b: f64, m: f64) -> Self {
        self.sigma2 = sigma2;
        self.b = b;
        self.m = m;
        self
    }

    /// `Y(f) = sum_j Y_j f(x_j) dx`.
    pub fn pair(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(j, y)| y * f(j as f64 * self.dx))
            .sum::<f64>()
            * self.dx
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Discrete white noise: i.i.d. `N(0, 1/(4 dx))` cells.
pub fn sample_stationary<R: Rng + ?Sized>(
    points: usize,
    dx: f64,
    rng: &mut R,
) -> Result<GridField, SbeError> {
    if points < 8 {
        return Err(SbeError::GridTooSmall(points));
    }
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(SbeError::BadParameter(format!("dx = {dx}")));
    }
    let sd = (0.25 / dx).sqrt();
    Ok(GridField {
        dx,
        values: (0..points)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        sigma2: 1.0,
        b: 0.0,
        m: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact-in-law linear part, explicit Euler drift.
    ExponentialEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub dt: f64,
    pub t_max: f64,
    pub noise_seed: u64,
    pub scheme: Scheme,
    /// Zero drift modes with `|k| > M/3`.
    pub dealias: bool,
}

impl SolverParams {
    pub fn steps(&self) -> u64 {
        (self.t_max / self.dt).round() as u64
    }

    fn validate(&self) -> Result<(), SbeError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SbeError::BadParameter(format!("dt = {}", self.dt)));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(SbeError::BadParameter(format!("t_max = {}", self.t_max)));
        }
        Ok(())
    }
}

/// Solver bound to a grid size, holding the transform plans.
pub struct Solver {
    points: usize,
    dx: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex64>,
    scratch: Vec<Complex64>,
    work: Vec<Complex64>,
    params: SolverParams,
    steps_taken: u64,
    /// Drift applied in the most recent step.
    last_drift: Vec<f64>,
}

impl Solver {
    pub fn new(points: usize, dx: f64, params: SolverParams) -> Result<Self, SbeError> {
        if points < 8 {
            return Err(SbeError::GridTooSmall(points));
        }
        params.validate()?;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(points);
        let inverse = planner.plan_fft_inverse(points);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Ok(Self {
            points,
            dx,
            forward,
            inverse,
            spectrum: vec![Complex64::default(); points],
            scratch: vec![Complex64::default(); scratch_len],
            work: vec![Complex64::default(); points],
            params,
            steps_taken: 0,
            last_drift: vec![0.0; points],
        })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    /// `khat = 2 pi k / L` for the signed frequency of index `i`.
    fn khat(&self, i: usize) -> f64 {
        let k = if i <= self.points / 2 {
            i as f64
        } else {
            i as f64 - self.points as f64
        };
        2.0 * PI * k / (self.dx * self.points as f64)
    }

    fn signed(&self, i: usize) -> i64 {
        if i <= self.points / 2 {
            i as i64
        } else {
            i as i64 - self.points as i64
        }
    }

    /// Drift `b m (Y_{j+1}^2 - Y_{j-1}^2 + Y_j (Y_{j+1} - Y_{j-1})) / (3 dx)`,
    /// a conservative discretization of `b m (Y^2)'`.
    pub fn drift(field: &GridField) -> Vec<f64> {
        let y = &field.values;
        let n = y.len();
        let c = field.b * field.m / (3.0 * field.dx);
        (0..n)
            .map(|j| {
                let (l, r) = (y[(j + n - 1) % n], y[(j + 1) % n]);
                c * (r * r - l * l + y[j] * (r - l))
            })
            .collect()
    }

    /// Drift applied in the most recent step (after dealiasing).
    pub fn last_drift(&self) -> &[f64] {
        &self.last_drift
    }

    pub fn step<R: Rng + ?Sized>(&mut self, field: &mut GridField, rng: &mut R) -> Result<(), SbeError> {
        let m = self.points;
        let dt = self.params.dt;
        for (s, &v) in self.spectrum.iter_mut().zip(&field.values) {
            *s = Complex64::new(v, 0.0);
        }
        self.forward
            .process_with_scratch(&mut self.spectrum, &mut self.scratch);

        if field.b * field.m != 0.0 {
            let drift = Self::drift(field);
            for (w, d) in self.work.iter_mut().zip(&drift) {
                *w = Complex64::new(*d, 0.0);
            }
            self.forward.process_with_scratch(&mut self.work, &mut self.scratch);
            self.work[0] = Complex64::default();
            if self.params.dealias {
                for i in 0..m {
                    if 3 * self.signed(i).unsigned_abs() as usize > m {
                        self.work[i] = Complex64::default();
                    }
                }
            }
            for (s, w) in self.spectrum.iter_mut().zip(&self.work) {
                *s += dt * w;
            }
            self.inverse.process_with_scratch(&mut self.work, &mut self.scratch);
            for (d, w) in self.last_drift.iter_mut().zip(&self.work) {
                *d = w.re / m as f64;
            }
        } else {
            self.last_drift.iter_mut().for_each(|d| *d = 0.0);
        }

        // exact OU update per mode; E|Y_k|^2 = M / (4 dx) at stationarity
        let var = m as f64 / (4.0 * self.dx);
        for i in 1..=m / 2 {
            let lam = 0.5 * field.sigma2 * self.khat(i).powi(2);
            let decay = (-lam * dt).exp();
            let sd = (var * (1.0 - decay * decay)).sqrt();
            if 2 * i == m {
                let z: f64 = rng.sample(StandardNormal);
                let re = decay * self.spectrum[i].re + sd * z;
                self.spectrum[i] = Complex64::new(re, 0.0);
            } else {
                let (zr, zi): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                let noise = Complex64::new(zr, zi) * (sd / 2f64.sqrt());
                let v = decay * self.spectrum[i] + noise;
                self.spectrum[i] = v;
                self.spectrum[m - i] = v.conj();
            }
        }

        self.inverse
            .process_with_scratch(&mut self.spectrum, &mut self.scratch);
        let mut bad = false;
        for (v, s) in field.values.iter_mut().zip(&self.spectrum) {
            *v = s.re / m as f64;
            bad |= !v.is_finite() || v.abs() > 1e12;
        }
        self.steps_taken += 1;
        if bad {
            return Err(SbeError::Instability {
                step: self.steps_taken,
            });
        }
        Ok(())
    }

    /// `|Y_k|^2` for `k = 0..=M/2`.
    pub fn mode_power(&mut self, field: &GridField) -> Vec<f64> {
        for (s, &v) in self.work.iter_mut().zip(&field.values) {
            *s = Complex64::new(v, 0.0);
        }
        self.forward.process_with_scratch(&mut self.work, &mut self.scratch);
        self.work[..=self.points / 2].iter().map(|c| c.norm_sqr()).collect()
    }

    /// Stationary value of `E|Y_k|^2` for `k != 0`.
    pub fn stationary_mode_power(&self) -> f64 {
        self.points as f64 / (4.0 * self.dx)
    }

    /// Highest mode index kept by dealiasing.
    pub fn dealias_cutoff(&self) -> usize {
        self.points / 3
    }
}

/// One step with freshly planned transforms.
pub fn step<R: Rng + ?Sized>(
    field: &mut GridField,
    params: &SolverParams,
    rng: &mut R,
) -> Result<(), SbeError> {
    Solver::new(field.points(), field.dx, params.clone())?.step(field, rng)
}

/// Fourier coefficients `int_0^L f(u) e^{-i khat u} du` for `k = 0..M`,
/// by the periodic trapezoid rule.
fn fourier_coefficients(f: &TestFunction, points: usize) -> Vec<Complex64> {
    let l = f.length();
    let h = l / points as f64;
    let mut buf: Vec<Complex64> = (0..points)
        .map(|j| Complex64::new(f.value(j as f64 * h) * h, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(points).process(&mut buf);
    buf
}

/// `1/4 <f, exp(sigma2 t Laplacian / 2) g>` on the torus of `f`.
pub fn ou_covariance(f: &TestFunction, g: &TestFunction, t: f64, sigma2: f64) -> f64 {
    let points = 4096;
    let l = f.length();
    let (fh, gh) = (fourier_coefficients(f, points), fourier_coefficients(g, points));
    let mut sum = 0.0;
    for i in 0..points {
        let k = if i <= points / 2 {
            i as f64
        } else {
            i as f64 - points as f64
        };
        let kh = 2.0 * PI * k / l;
        sum += (-0.5 * sigma2 * kh * kh * t).exp() * (fh[i] * gh[i].conj()).re;
    }
    0.25 * sum / l
}

/// `Y * iota_eps` at cell `j`: the mean of the `w` cells `j, ..., j+w-1`.
fn forward_window_means(values: &[f64], w: usize) -> Vec<f64> {
    let n = values.len();
    let mut sum: f64 = (0..w).map(|k| values[k % n]).sum();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        out.push(sum / w as f64);
        sum += values[(j + w) % n] - values[j];
    }
    out
}

/// Cell count of the window at scale `eps`.
pub fn window_cells(eps: f64, dx: f64) -> usize {
    ((eps / dx).round() as usize).max(1)
}

/// Time integrals `int sum_j (Y * iota_eps)_j^2 f'(x_j) dx ds` for each
/// `eps`, accumulated along a run.
#[derive(Debug, Clone)]
pub struct BurgersAccumulator {
    eps_list: Vec<f64>,
    windows: Vec<usize>,
    df: Vec<f64>,
    dx: f64,
    values: Vec<f64>,
}

impl BurgersAccumulator {
    pub fn new(f: &TestFunction, points: usize, eps_list: &[f64]) -> Self {
        let dx = f.length() / points as f64;
        Self {
            eps_list: eps_list.to_vec(),
            windows: eps_list.iter().map(|&e| window_cells(e, dx)).collect(),
            df: (0..points).map(|j| f.d1(j as f64 * dx)).collect(),
            dx,
            values: vec![0.0; eps_list.len()],
        }
    }

    /// Integrand at one field state.
    pub fn integrand(&self, field: &GridField) -> Vec<f64> {
        self.windows
            .iter()
            .map(|&w| {
                forward_window_means(&field.values, w)
                    .iter()
                    .zip(&self.df)
                    .map(|(y, d)| y * y * d)
                    .sum::<f64>()
                    * self.dx
            })
            .collect()
    }

    /// Adds `dt` times the integrand at `field`.
    pub fn push(&mut self, field: &GridField, dt: f64) {
        let integrand = self.integrand(field);
        for (v, i) in self.values.iter_mut().zip(integrand) {
            *v += dt * i;
        }
    }

    pub fn eps_list(&self) -> &[f64] {
        &self.eps_list
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mollified Burgers functionals over a stored history sampled every `dt`
/// (left-point rule).
pub fn burgers_functional(history: &[GridField], dt: f64, f: &TestFunction, eps_list: &[f64]) -> Vec<f64> {
    let Some(first) = history.first() else {
        return vec![0.0; eps_list.len()];
    };
    let mut acc = BurgersAccumulator::new(f, first.points(), eps_list);
    for field in &history[..history.len() - 1] {
        acc.push(field, dt);
    }
    acc.values
}

/// `|B_eps - B_{eps'}|` for consecutive entries of `eps_list`.
pub fn cauchy_differences(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
}

/// Path statistics of one solver run against a test function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SbePath {
    /// `Y_t(f)` at `t = 0, record_every * dt, ...`
    pub y: Vec<f64>,
    /// `Y_t - Y_0 - int Y(sigma^2 f''/2) - int <N, f>` at the same times.
    pub martingale: Vec<f64>,
    /// `int <N, f> ds` at the same times.
    pub drift: Vec<f64>,
    /// Mollified functionals at `t_max`, in `eps` order.
    pub burgers: Vec<f64>,
    /// `|Y_k|^2` at `t_max`, `k = 0..=M/2`.
    pub final_power: Vec<f64>,
    /// `|Y_k|^2` averaged over the recorded times after 0.
    pub mean_power: Vec<f64>,
    /// Largest per-step change of `sum_j Y_j`.
    pub max_mass_drift: f64,
}

/// Runs one stationary replica and records the observables used by the
/// acceptance checks.
pub fn run_path<R: Rng + ?Sized>(
    points: usize,
    f: &TestFunction,
    coeffs: (f64, f64, f64),
    params: &SolverParams,
    eps_list: &[f64],
    record_every: u64,
    rng: &mut R,
) -> Result<SbePath, SbeError> {
    let dx = f.length() / points as f64;
    let (sigma2, b, m) = coeffs;
    let mut field = sample_stationary(points, dx, rng)?.with_coefficients(sigma2, b, m);
    let mut solver = Solver::new(points, dx, params.clone())?;
    let fv: Vec<f64> = (0..points).map(|j| f.value(j as f64 * dx)).collect();
    let lap: Vec<f64> = (0..points).map(|j| 0.5 * sigma2 * f.d2(j as f64 * dx)).collect();
    let pair = |vals: &[f64], w: &[f64]| vals.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() * dx;
    let mut acc = BurgersAccumulator::new(f, points, eps_list);

    let y0 = pair(&field.values, &fv);
    let (mut lin_int, mut drift_int) = (0.0, 0.0);
    let mut out = SbePath {
        y: vec![y0],
        martingale: vec![0.0],
        drift: vec![0.0],
        burgers: vec![],
        final_power: vec![],
        mean_power: vec![0.0; points / 2 + 1],
        max_mass_drift: 0.0,
    };
    let mut recorded = 0usize;
    let dt = params.dt;
    for s in 1..=params.steps() {
        let lin = pair(&field.values, &lap);
        acc.push(&field, dt);
        let mass = field.total();
        solver.step(&mut field, rng)?;
        out.max_mass_drift = out.max_mass_drift.max((field.total() - mass).abs());
        lin_int += lin * dt;
        drift_int += pair(solver.last_drift(), &fv) * dt;
        if s % record_every == 0 {
            let y = pair(&field.values, &fv);
            out.y.push(y);
            out.martingale.push(y - y0 - lin_int - drift_int);
            out.drift.push(drift_int);
            for (acc, p) in out.mean_power.iter_mut().zip(solver.mode_power(&field)) {
                *acc += p;
            }
            recorded += 1;
        }
    }
    out.burgers = acc.values().to_vec();
    out.final_power = solver.mode_power(&field);
    if recorded > 0 {
        out.mean_power.iter_mut().for_each(|p| *p /= recorded as f64);
    }
    Ok(out)
}
