//! Exact continuous-time simulation of the accelerated exclusion process.
//!
//! Attempts arrive at total rate `n^2 K sum_z p_n(z)` for `K` particles. Each
//! attempt picks a uniform particle and a displacement `z ~ p_n / sum p_n`; it
//! succeeds only if the target is empty. Thinning by the exclusion rule is
//! exact in law, and the attempt rate does not depend on the configuration,
//! so holding times between accepted jumps integrate additive functionals
//! without quadrature error. Times are macroscopic.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::kernel::JumpDistribution;
use crate::lattice::Configuration;

pub use crate::verify::montecarlo::{reverse_time_law_check, ReversalReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("lattice has no particles")]
    EmptyLattice,
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n: u64,
    /// Macroscopic torus length; the lattice has `length * n` sites.
    pub length: usize,
    pub b: f64,
    pub t_max: f64,
    pub seed: u64,
    pub checkpoint_times: Vec<f64>,
}

impl SimParams {
    pub fn n_sites(&self) -> usize {
        self.length * self.n as usize
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: String| Err(DynamicsError::InvalidParams(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.length == 0 {
            return bad("length must be positive".into());
        }
        // t_max = 0 is accepted and yields an empty trajectory
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be non-negative, got {}", self.t_max));
        }
        if self
            .checkpoint_times
            .windows(2)
            .any(|w| w[0] >= w[1])
        {
            return bad("checkpoint times must be strictly increasing".into());
        }
        if self
            .checkpoint_times
            .iter()
            .any(|&t| !(0.0..=self.t_max).contains(&t))
        {
            return bad("checkpoint times must lie in [0, t_max]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: Configuration,
    pub events: Vec<Event>,
    pub final_time: f64,
    pub attempts: u64,
    pub accepted: u64,
}

impl Trajectory {
    /// State at time `t` obtained by replaying the events up to `t`.
    pub fn state_at(&self, t: f64) -> Configuration {
        let mut c = self.initial.clone();
        for e in self.events.iter().take_while(|e| e.t <= t) {
            c.swap(e.x, e.y);
        }
        c
    }
}

/// Receives the piecewise-constant path of the process.
///
/// `advance(config, t)` announces that `config` held from the previous
/// advance time up to `t`; `jumped` follows immediately after a swap has been
/// applied to `config`.
pub trait Observer {
    fn advance(&mut self, config: &Configuration, t: f64);
    fn jumped(&mut self, config: &Configuration, x: usize, y: usize);
    fn checkpoint(&mut self, _config: &Configuration, _t: f64) {}
}

/// Total attempt rate `n^2 K sum p_n` in macroscopic time.
pub fn attempt_rate(config: &Configuration, pn: &JumpDistribution, n: u64) -> f64 {
    let n = n as f64;
    n * n * config.particle_count() as f64 * pn.total()
}

/// One attempt: returns the holding time and the accepted jump, if any.
pub fn step<R: Rng + ?Sized>(
    config: &mut Configuration,
    pn: &JumpDistribution,
    n: u64,
    rng: &mut R,
) -> Result<(f64, Option<(usize, usize)>), DynamicsError> {
    let k = config.particle_count();
    if k == 0 {
        return Err(DynamicsError::EmptyLattice);
    }
    let e: f64 = rng.sample(Exp1);
    let dt = e / attempt_rate(config, pn, n);
    let (x, y) = propose(config, pn, rng);
    if config.occupied(y) {
        Ok((dt, None))
    } else {
        config.swap(x, y);
        Ok((dt, Some((x, y))))
    }
}

#[inline]
fn propose<R: Rng + ?Sized>(
    config: &Configuration,
    pn: &JumpDistribution,
    rng: &mut R,
) -> (usize, usize) {
    let x = config.particle(rng.gen_range(0..config.particle_count()));
    let z = pn.sample(rng);
    (x, config.wrap(x, z))
}

/// Runs the process from `initial` to `params.t_max`.
///
/// Observers see every accepted jump and every checkpoint; with
/// `record_events` the accepted jumps are also kept in the returned
/// trajectory.
pub fn simulate<R: Rng + ?Sized>(
    initial: &Configuration,
    params: &SimParams,
    pn: &JumpDistribution,
    observers: &mut [&mut dyn Observer],
    record_events: bool,
    rng: &mut R,
) -> Result<Trajectory, DynamicsError> {
    params.validate()?;
    if initial.n_sites() != params.n_sites() {
        return Err(DynamicsError::InvalidParams(format!(
            "configuration has {} sites, expected {}",
            initial.n_sites(),
            params.n_sites()
        )));
    }
    if pn.n != params.n {
        return Err(DynamicsError::InvalidParams(format!(
            "jump distribution built for n = {}, params say n = {}",
            pn.n, params.n
        )));
    }
    if 4 * pn.radius() > initial.n_sites() {
        return Err(DynamicsError::InvalidParams(format!(
            "kernel radius {} exceeds a quarter of the {} sites",
            pn.radius(),
            initial.n_sites()
        )));
    }

    let mut config = initial.clone();
    let mut events = Vec::new();
    let mut checkpoints = params.checkpoint_times.iter().copied().peekable();
    let (mut attempts, mut accepted) = (0u64, 0u64);
    let mut t = 0.0;

    if config.particle_count() == 0 || config.particle_count() == config.n_sites() {
        // nothing can move; still report checkpoints
        for cp in checkpoints {
            observers.iter_mut().for_each(|o| o.advance(&config, cp));
            observers.iter_mut().for_each(|o| o.checkpoint(&config, cp));
        }
        observers.iter_mut().for_each(|o| o.advance(&config, params.t_max));
        return Ok(Trajectory {
            initial: initial.clone(),
            events,
            final_time: params.t_max,
            attempts,
            accepted,
        });
    }

    let rate = attempt_rate(&config, pn, params.n);
    loop {
        let e: f64 = rng.sample(Exp1);
        let t_next = t + e / rate;
        while let Some(&cp) = checkpoints.peek() {
            if cp > t_next {
                break;
            }
            observers.iter_mut().for_each(|o| o.advance(&config, cp));
            observers.iter_mut().for_each(|o| o.checkpoint(&config, cp));
            checkpoints.next();
        }
        if t_next > params.t_max {
            observers
                .iter_mut()
                .for_each(|o| o.advance(&config, params.t_max));
            break;
        }
        t = t_next;
        attempts += 1;
        let (x, y) = propose(&config, pn, rng);
        if config.occupied(y) {
            continue;
        }
        accepted += 1;
        observers.iter_mut().for_each(|o| o.advance(&config, t));
        config.swap(x, y);
        observers.iter_mut().for_each(|o| o.jumped(&config, x, y));
        if record_events {
            events.push(Event { t, x, y });
        }
    }

    Ok(Trajectory {
        initial: initial.clone(),
        events,
        final_time: params.t_max,
        attempts,
        accepted,
    })
}

/// Replays a recorded trajectory through observers, reproducing exactly the
/// callbacks `simulate` issued.
pub fn replay(traj: &Trajectory, checkpoints: &[f64], observers: &mut [&mut dyn Observer]) {
    let mut config = traj.initial.clone();
    let mut cps = checkpoints.iter().copied().peekable();
    for e in &traj.events {
        while let Some(&cp) = cps.peek() {
            if cp > e.t {
                break;
            }
            observers.iter_mut().for_each(|o| o.advance(&config, cp));
            observers.iter_mut().for_each(|o| o.checkpoint(&config, cp));
            cps.next();
        }
        observers.iter_mut().for_each(|o| o.advance(&config, e.t));
        config.swap(e.x, e.y);
        observers.iter_mut().for_each(|o| o.jumped(&config, e.x, e.y));
    }
    for cp in cps {
        observers.iter_mut().for_each(|o| o.advance(&config, cp));
        observers.iter_mut().for_each(|o| o.checkpoint(&config, cp));
    }
    observers
        .iter_mut()
        .for_each(|o| o.advance(&config, traj.final_time));
}
