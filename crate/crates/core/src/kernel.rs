//! Jump-rate kernels `p_n(z) = s(z) + gamma_n a(z)`.
//!
//! A [`RateKernel`] holds a finitely supported symmetric part `s` and an
//! antisymmetric part `a` dominated by `C s`. Analytic families are truncated
//! at `support_radius` and the missing mass of `s` is recorded, never
//! redistributed: the simulated process uses the truncated rates exactly.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, WeightedAliasIndex};
use serde::{Deserialize, Serialize};

/// Relative slack used when comparing kernel values that should agree exactly.
const VALUE_TOL: f64 = 1e-12;
/// Tolerance on `sum s + tail = 1`.
const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("kernel support is empty")]
    EmptySupport,
    #[error("s must vanish at z = 0 (got {0})")]
    ZeroJump(f64),
    #[error("rate at z = {z} is not a finite value: {value}")]
    NotFinite { z: i64, value: f64 },
    #[error("s is not symmetric: s({z}) = {value} but s({neg}) = {mirror}", neg = -z)]
    SymmetryViolation { z: i64, value: f64, mirror: f64 },
    #[error("a is not antisymmetric: a({z}) = {value} but a({neg}) = {mirror}", neg = -z)]
    AntisymmetryViolation { z: i64, value: f64, mirror: f64 },
    #[error("|a({z})| = {a} exceeds C s({z}) = {bound}")]
    DominationViolation { z: i64, a: f64, bound: f64 },
    #[error("support of s generates {gcd}Z, not Z")]
    Reducible { gcd: i64 },
    #[error("s has total mass {mass} (including tail {tail}), expected 1")]
    NotNormalized { mass: f64, tail: f64 },
    #[error("p_n({z}) = {value} is negative")]
    NegativeRate { z: i64, value: f64 },
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
}

/// Validated pair `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateKernel {
    support_radius: usize,
    s_values: BTreeMap<i64, f64>,
    a_values: BTreeMap<i64, f64>,
    domination_c: f64,
    tail_mass_s: f64,
    // dense copies indexed by z - 1 for z = 1..=support_radius
    s_pos: Vec<f64>,
    a_pos: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    pub sigma2: f64,
    pub m: f64,
    pub c1: f64,
    pub c2: f64,
    pub path_to_one: Vec<i64>,
}

/// Serializable description of a kernel, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `s(+-1) = 1/2`, `a(+-1) = +-a_scale/2`.
    NearestNeighbor {
        #[serde(default = "one")]
        a_scale: f64,
    },
    /// `s(z) = c |z|^-(1+beta)` for `1 <= |z| <= zmax`, `a(z) = a_scale sgn(z) s(z)`.
    /// When `c` is omitted it normalizes the untruncated series.
    PowerLaw {
        beta: f64,
        zmax: usize,
        #[serde(default)]
        c: Option<f64>,
        #[serde(default = "one")]
        a_scale: f64,
    },
    /// Explicit tables keyed by displacement.
    Explicit {
        s: BTreeMap<i64, f64>,
        a: BTreeMap<i64, f64>,
        domination_c: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn build(&self) -> Result<RateKernel, KernelError> {
        match *self {
            KernelSpec::NearestNeighbor { a_scale } => RateKernel::nearest_neighbor(a_scale),
            KernelSpec::PowerLaw {
                beta,
                zmax,
                c,
                a_scale,
            } => RateKernel::power_law(beta, zmax, c, a_scale),
            KernelSpec::Explicit {
                ref s,
                ref a,
                domination_c,
            } => validate_kernel(s, a, domination_c),
        }
    }
}

/// Validates explicit tables (zero tail mass).
pub fn validate_kernel(
    s_values: &BTreeMap<i64, f64>,
    a_values: &BTreeMap<i64, f64>,
    domination_c: f64,
) -> Result<RateKernel, KernelError> {
    RateKernel::with_tail(s_values.clone(), a_values.clone(), domination_c, 0.0)
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a.abs()
}

fn close(x: f64, y: f64) -> bool {
    (x - y).abs() <= VALUE_TOL * x.abs().max(y.abs()).max(f64::MIN_POSITIVE)
}

impl RateKernel {
    /// Validates `(s, a)` with a recorded tail mass for `s`.
    pub fn with_tail(
        s_values: BTreeMap<i64, f64>,
        mut a_values: BTreeMap<i64, f64>,
        domination_c: f64,
        tail_mass_s: f64,
    ) -> Result<Self, KernelError> {
        if !(domination_c.is_finite() && domination_c > 0.0) {
            return Err(KernelError::InvalidParameter(format!(
                "domination constant must be positive, got {domination_c}"
            )));
        }
        if !(tail_mass_s.is_finite() && (0.0..1.0).contains(&tail_mass_s)) {
            return Err(KernelError::InvalidParameter(format!(
                "tail mass must lie in [0, 1), got {tail_mass_s}"
            )));
        }
        if s_values.values().all(|&v| v == 0.0) {
            return Err(KernelError::EmptySupport);
        }
        for (&z, &v) in s_values.iter().chain(a_values.iter()) {
            if !v.is_finite() {
                return Err(KernelError::NotFinite { z, value: v });
            }
        }
        if let Some(&v) = s_values.get(&0) {
            if v != 0.0 {
                return Err(KernelError::ZeroJump(v));
            }
        }
        a_values.retain(|&z, v| z != 0 || *v != 0.0);
        if let Some(&v) = a_values.get(&0) {
            return Err(KernelError::AntisymmetryViolation {
                z: 0,
                value: v,
                mirror: -v,
            });
        }

        for (&z, &v) in &s_values {
            let mirror = s_values.get(&-z).copied().unwrap_or(0.0);
            if v < 0.0 || !close(v, mirror) {
                return Err(KernelError::SymmetryViolation {
                    z,
                    value: v,
                    mirror,
                });
            }
        }
        for (&z, &v) in &a_values {
            let mirror = a_values.get(&-z).copied().unwrap_or(0.0);
            if !close(v, -mirror) {
                return Err(KernelError::AntisymmetryViolation {
                    z,
                    value: v,
                    mirror,
                });
            }
        }
        for (&z, &v) in &a_values {
            let s = s_values.get(&z).copied().unwrap_or(0.0);
            let bound = domination_c * s;
            if v.abs() > bound * (1.0 + VALUE_TOL) {
                return Err(KernelError::DominationViolation { z, a: v, bound });
            }
        }

        let g = s_values
            .iter()
            .filter(|&(&z, &v)| z > 0 && v > 0.0)
            .fold(0, |acc, (&z, _)| gcd(acc, z));
        if g != 1 {
            return Err(KernelError::Reducible { gcd: g });
        }

        let mass: f64 = s_values.values().sum::<f64>() + tail_mass_s;
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(KernelError::NotNormalized {
                mass,
                tail: tail_mass_s,
            });
        }

        let support_radius = s_values
            .iter()
            .chain(a_values.iter())
            .filter(|(_, &v)| v != 0.0)
            .map(|(&z, _)| z.unsigned_abs() as usize)
            .max()
            .unwrap_or(0);
        let s_pos = (1..=support_radius as i64)
            .map(|z| s_values.get(&z).copied().unwrap_or(0.0))
            .collect();
        let a_pos = (1..=support_radius as i64)
            .map(|z| a_values.get(&z).copied().unwrap_or(0.0))
            .collect();

        Ok(Self {
            support_radius,
            s_values,
            a_values,
            domination_c,
            tail_mass_s,
            s_pos,
            a_pos,
        })
    }

    pub fn nearest_neighbor(a_scale: f64) -> Result<Self, KernelError> {
        let s = BTreeMap::from([(-1, 0.5), (1, 0.5)]);
        let a = BTreeMap::from([(-1, -0.5 * a_scale), (1, 0.5 * a_scale)]);
        Self::with_tail(s, a, a_scale.abs().max(f64::MIN_POSITIVE), 0.0)
    }

    /// Truncated power law `c / |z|^(1 + beta)`.
    pub fn power_law(
        beta: f64,
        zmax: usize,
        c: Option<f64>,
        a_scale: f64,
    ) -> Result<Self, KernelError> {
        if beta.is_nan() || beta <= 0.0 || zmax == 0 {
            return Err(KernelError::InvalidParameter(format!(
                "power law needs beta > 0 and zmax >= 1 (beta = {beta}, zmax = {zmax})"
            )));
        }
        let exponent = 1.0 + beta;
        let c = c.unwrap_or_else(|| 0.5 / zeta(exponent));
        let mut s = BTreeMap::new();
        let mut a = BTreeMap::new();
        for z in 1..=zmax as i64 {
            let v = c * (z as f64).powf(-exponent);
            s.insert(z, v);
            s.insert(-z, v);
            a.insert(z, a_scale * v);
            a.insert(-z, -a_scale * v);
        }
        // tail = 2c * sum_{z > zmax} z^-(1+beta); only meaningful when c normalizes
        let tail = 1.0 - s.values().sum::<f64>();
        let tail = if tail.abs() < 1e-15 { 0.0 } else { tail };
        Self::with_tail(s, a, a_scale.abs().max(f64::MIN_POSITIVE), tail)
    }

    pub fn support_radius(&self) -> usize {
        self.support_radius
    }

    pub fn s_values(&self) -> &BTreeMap<i64, f64> {
        &self.s_values
    }

    pub fn a_values(&self) -> &BTreeMap<i64, f64> {
        &self.a_values
    }

    pub fn domination_c(&self) -> f64 {
        self.domination_c
    }

    pub fn tail_mass_s(&self) -> f64 {
        self.tail_mass_s
    }

    /// `s(z)`, zero outside the support.
    pub fn s(&self, z: i64) -> f64 {
        let k = z.unsigned_abs() as usize;
        if k == 0 || k > self.support_radius {
            0.0
        } else {
            self.s_pos[k - 1]
        }
    }

    /// `a(z)`, zero outside the support.
    pub fn a(&self, z: i64) -> f64 {
        let k = z.unsigned_abs() as usize;
        if k == 0 || k > self.support_radius {
            0.0
        } else {
            z.signum() as f64 * self.a_pos[k - 1]
        }
    }

    /// Total mass of the truncated symmetric part.
    pub fn s_mass(&self) -> f64 {
        2.0 * self.s_pos.iter().sum::<f64>()
    }

    /// Kernel of the time-reversed process, `p*(z) = p(-z)`, i.e. `a -> -a`.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        for v in out.a_values.values_mut() {
            *v = -*v;
        }
        for v in &mut out.a_pos {
            *v = -*v;
        }
        out
    }
}

/// Riemann zeta for real argument > 1 (direct sum plus Euler-Maclaurin tail).
fn zeta(s: f64) -> f64 {
    const N: usize = 64;
    let head: f64 = (1..N).map(|k| (k as f64).powf(-s)).sum();
    let n = N as f64;
    // sum_{k >= N} k^-s ~ N^{1-s}/(s-1) + N^-s/2 + s N^{-s-1}/12 - s(s+1)(s+2) N^{-s-3}/720
    head + n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * n.powf(-s - 3.0) / 720.0
}

/// Moments of a kernel and the Dirichlet-form comparison constants.
pub fn moments(kernel: &RateKernel) -> KernelMoments {
    let sigma2: f64 = kernel
        .s_values
        .iter()
        .map(|(&z, &v)| (z * z) as f64 * v)
        .sum();
    let m: f64 = kernel
        .a_values
        .iter()
        .map(|(&z, &v)| z as f64 * v)
        .sum();
    let path = path_to_one(kernel);
    let hops = path.len() as f64 - 1.0;
    let min_s = path
        .windows(2)
        .map(|w| kernel.s(w[1] - w[0]))
        .fold(f64::INFINITY, f64::min);
    KernelMoments {
        sigma2,
        m,
        c1: 1.0 / (4.0 * sigma2),
        c2: (4.0 * hops - 3.0) * hops / min_s,
        path_to_one: path,
    }
}

/// Fewest-hop path `0 = x_0, ..., x_m = 1` with steps in the support of `s`;
/// among shortest paths, the one maximizing the smallest step rate.
fn path_to_one(kernel: &RateKernel) -> Vec<i64> {
    let steps: Vec<(i64, f64)> = kernel
        .s_values
        .iter()
        .filter(|(_, &v)| v > 0.0)
        .map(|(&z, &v)| (z, v))
        .collect();
    let r = kernel.support_radius as i64;
    let bound = r * r + r + 1;

    // layered BFS carrying the best bottleneck to each node
    let mut best: HashMap<i64, (usize, f64, i64)> = HashMap::new();
    best.insert(0, (0, f64::INFINITY, 0));
    let mut queue = VecDeque::from([0i64]);
    while let Some(x) = queue.pop_front() {
        let (depth, bottleneck, _) = best[&x];
        if x == 1 {
            break;
        }
        for &(z, v) in &steps {
            let y = x + z;
            if y.abs() > bound {
                continue;
            }
            let cand = bottleneck.min(v);
            match best.get_mut(&y) {
                None => {
                    best.insert(y, (depth + 1, cand, x));
                    queue.push_back(y);
                }
                Some(entry) if entry.0 == depth + 1 && cand > entry.1 => {
                    entry.1 = cand;
                    entry.2 = x;
                }
                _ => {}
            }
        }
    }
    // finish the layer containing 1 so its bottleneck is final
    let target_depth = best.get(&1).map(|e| e.0).expect("irreducible kernel reaches 1");
    let mut path = vec![1i64];
    let mut cur = 1i64;
    while cur != 0 {
        cur = best[&cur].2;
        path.push(cur);
    }
    path.reverse();
    debug_assert_eq!(path.len() - 1, target_depth);
    path
}

/// `gamma_n = b / sqrt(n)` when `n >= (b C)^2`, else 0.
pub fn gamma_sequence(n: u64, b: f64, domination_c: f64) -> f64 {
    if n == 0 || b == 0.0 {
        return 0.0;
    }
    let bc = b * domination_c;
    if (n as f64) >= bc * bc {
        b / (n as f64).sqrt()
    } else {
        0.0
    }
}

/// Sampled transition probability `p_n` of the accelerated process.
#[derive(Debug, Clone)]
pub struct JumpDistribution {
    pub n: u64,
    pub gamma_n: f64,
    p_values: BTreeMap<i64, f64>,
    displacements: Vec<i64>,
    alias: WeightedAliasIndex<f64>,
    total: f64,
    // p_n(z) at index z + radius
    dense: Vec<f64>,
    radius: usize,
}

impl JumpDistribution {
    pub fn p_values(&self) -> &BTreeMap<i64, f64> {
        &self.p_values
    }

    /// `p_n(z)`, zero outside the support.
    #[inline]
    pub fn p(&self, z: i64) -> f64 {
        let idx = z + self.radius as i64;
        if idx < 0 || idx as usize >= self.dense.len() {
            0.0
        } else {
            self.dense[idx as usize]
        }
    }

    /// `sum_z p_n(z)`.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Draws a displacement with probability `p_n(z) / sum p_n`.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.displacements[self.alias.sample(rng)]
    }
}

/// Builds `p_n = s + gamma_n a`, checking positivity displacement by displacement.
pub fn build_pn(kernel: &RateKernel, n: u64, b: f64) -> Result<JumpDistribution, KernelError> {
    let gamma_n = gamma_sequence(n, b, kernel.domination_c);
    let radius = kernel.support_radius;
    let mut p_values = BTreeMap::new();
    for z in (-(radius as i64))..=(radius as i64) {
        if z == 0 {
            continue;
        }
        let s = kernel.s(z);
        let mut p = s + gamma_n * kernel.a(z);
        if p < 0.0 {
            // gamma_n C = 1 may leave a rounding residue of either sign
            if p > -1e-14 * s {
                p = 0.0;
            } else {
                return Err(KernelError::NegativeRate { z, value: p });
            }
        }
        p_values.insert(z, p);
    }
    let total: f64 = (1..=radius as i64)
        .map(|z| p_values[&z] + p_values[&-z])
        .sum();
    let (displacements, weights): (Vec<i64>, Vec<f64>) = p_values
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(&z, &p)| (z, p))
        .unzip();
    let alias = WeightedAliasIndex::new(weights)
        .map_err(|e| KernelError::InvalidParameter(format!("alias table: {e}")))?;
    let mut dense = vec![0.0; 2 * radius + 1];
    for (&z, &p) in &p_values {
        dense[(z + radius as i64) as usize] = p;
    }
    Ok(JumpDistribution {
        n,
        gamma_n,
        p_values,
        displacements,
        alias,
        total,
        dense,
        radius,
    })
}
