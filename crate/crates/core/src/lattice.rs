//! Occupancy configurations on the periodic lattice `Z / N Z`.

use rand::Rng;

const EMPTY: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LatticeError {
    #[error("density must lie strictly between 0 and 1, got {0}")]
    DegenerateDensity(String),
    #[error("lattice needs at least one site")]
    NoSites,
    #[error("block length {ell} outside 1..={n_sites}")]
    BadBlock { ell: usize, n_sites: usize },
    #[error("malformed configuration snapshot: {0}")]
    BadSnapshot(String),
}

/// Bit-packed occupancy with a dense particle list for O(1) uniform particle
/// selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    n_sites: usize,
    words: Vec<u64>,
    particles: Vec<u32>,
    slot_of: Vec<u32>,
}

impl Configuration {
    pub fn empty(n_sites: usize) -> Self {
        Self {
            n_sites,
            words: vec![0; n_sites.div_ceil(64)],
            particles: Vec::new(),
            slot_of: vec![EMPTY; n_sites],
        }
    }

    pub fn from_occupancy(occ: &[bool]) -> Self {
        let mut c = Self::empty(occ.len());
        for (x, &o) in occ.iter().enumerate() {
            if o {
                c.insert(x);
            }
        }
        c
    }

    /// Configuration whose site `x` is bit `x` of `mask` (`n_sites <= 64`).
    pub fn from_mask(mask: u64, n_sites: usize) -> Self {
        assert!(n_sites <= 64);
        let occ: Vec<bool> = (0..n_sites).map(|x| mask >> x & 1 == 1).collect();
        Self::from_occupancy(&occ)
    }

    fn insert(&mut self, x: usize) {
        debug_assert!(!self.occupied(x));
        self.words[x / 64] |= 1 << (x % 64);
        self.slot_of[x] = self.particles.len() as u32;
        self.particles.push(x as u32);
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    #[inline]
    pub fn occupied(&self, x: usize) -> bool {
        self.words[x / 64] >> (x % 64) & 1 == 1
    }

    /// `eta(x) - 1/2`.
    #[inline]
    pub fn centered(&self, x: usize) -> f64 {
        if self.occupied(x) {
            0.5
        } else {
            -0.5
        }
    }

    #[inline]
    pub fn particle_count(&self) -> usize {
        self.particles.len()
    }

    /// Site of the `i`-th particle in the internal list.
    #[inline]
    pub fn particle(&self, i: usize) -> usize {
        self.particles[i] as usize
    }

    pub fn particles(&self) -> impl Iterator<Item = usize> + '_ {
        self.particles.iter().map(|&x| x as usize)
    }

    pub fn occupancy(&self) -> Vec<bool> {
        (0..self.n_sites).map(|x| self.occupied(x)).collect()
    }

    /// Site `x + z` on the torus.
    #[inline]
    pub fn wrap(&self, x: usize, z: i64) -> usize {
        (x as i64 + z).rem_euclid(self.n_sites as i64) as usize
    }

    /// Exchanges the occupancies of `x` and `y`.
    pub fn swap(&mut self, x: usize, y: usize) {
        let (ox, oy) = (self.occupied(x), self.occupied(y));
        if ox == oy {
            return;
        }
        let (from, to) = if ox { (x, y) } else { (y, x) };
        let slot = self.slot_of[from];
        self.particles[slot as usize] = to as u32;
        self.slot_of[to] = slot;
        self.slot_of[from] = EMPTY;
        self.words[from / 64] ^= 1 << (from % 64);
        self.words[to / 64] ^= 1 << (to % 64);
    }

    /// Mean occupancy of `x, x+1, ..., x+ell-1` (wrapping).
    pub fn block_average(&self, x: usize, ell: usize) -> Result<f64, LatticeError> {
        if ell == 0 || ell > self.n_sites {
            return Err(LatticeError::BadBlock {
                ell,
                n_sites: self.n_sites,
            });
        }
        let count = (0..ell)
            .filter(|&k| self.occupied((x + k) % self.n_sites))
            .count();
        Ok(count as f64 / ell as f64)
    }

    /// Checks the particle list and the site index against the occupancy bits.
    pub fn is_consistent(&self) -> bool {
        let bits = (0..self.n_sites).filter(|&x| self.occupied(x)).count();
        bits == self.particles.len()
            && self
                .particles
                .iter()
                .enumerate()
                .all(|(i, &x)| self.slot_of[x as usize] == i as u32 && self.occupied(x as usize))
            && (0..self.n_sites).all(|x| self.occupied(x) == (self.slot_of[x] != EMPTY))
    }

    /// Hex string of the occupancy bits, site `x` at bit `x % 8` of byte `x / 8`.
    pub fn to_hex(&self) -> String {
        let bytes: Vec<u8> = (0..self.n_sites.div_ceil(8))
            .map(|i| (self.words[i / 8] >> (8 * (i % 8))) as u8)
            .collect();
        hex::encode(bytes)
    }

    pub fn from_hex(s: &str, n_sites: usize) -> Result<Self, LatticeError> {
        let bytes = hex::decode(s).map_err(|e| LatticeError::BadSnapshot(e.to_string()))?;
        if bytes.len() != n_sites.div_ceil(8) {
            return Err(LatticeError::BadSnapshot(format!(
                "{} bytes for {} sites",
                bytes.len(),
                n_sites
            )));
        }
        let occ: Vec<bool> = (0..n_sites)
            .map(|x| bytes[x / 8] >> (x % 8) & 1 == 1)
            .collect();
        if (n_sites..bytes.len() * 8).any(|x| bytes[x / 8] >> (x % 8) & 1 == 1) {
            return Err(LatticeError::BadSnapshot("bits set beyond the last site".into()));
        }
        Ok(Self::from_occupancy(&occ))
    }
}

/// Product Bernoulli(`rho`) configuration.
pub fn sample_bernoulli<R: Rng + ?Sized>(
    n_sites: usize,
    rho: f64,
    rng: &mut R,
) -> Result<Configuration, LatticeError> {
    if n_sites == 0 {
        return Err(LatticeError::NoSites);
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(LatticeError::DegenerateDensity(rho.to_string()));
    }
    let occ: Vec<bool> = (0..n_sites).map(|_| rng.gen_bool(rho)).collect();
    Ok(Configuration::from_occupancy(&occ))
}
