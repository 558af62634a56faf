//! Seeded random primitives.
//!
//! Every replica owns an [`RngStream`] derived from a master seed and a
//! stream index, so results do not depend on how replicas are scheduled
//! across threads. The samplers are generic over [`rand::Rng`] so tests
//! can drive them with scripted uniforms.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Largest `N` for which `Gamma(N + 1)` is drawn as an explicit sum of
/// exponentials.
pub const GAMMA_SUM_MAX_N: usize = 64;

/// A reproducible random stream keyed by `(master_seed, stream_index)`.
///
/// Backed by ChaCha8 with the stream index mapped onto ChaCha's 64-bit
/// stream selector, so distinct indices give non-overlapping keystreams.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// A sibling stream under a different master seed derived from this one.
    ///
    /// Used when one replica needs several independent sub-streams.
    pub fn substream(&self, tag: u64) -> Self {
        let mixed = splitmix64(self.master_seed ^ splitmix64(tag.wrapping_add(0x9e37_79b9)));
        Self::new(mixed, self.stream_index)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform variate on `(0, 1]`.
#[inline]
pub fn uniform_open0<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Inverse CDF of the standard exponential for `u` in `(0, 1]`.
#[inline]
pub fn exponential_from_uniform(u: f64) -> f64 {
    -u.ln()
}

#[inline]
pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    exponential_from_uniform(uniform_open0(rng))
}

/// `n` i.i.d. mean-one exponential variates.
pub fn sample_exponentials<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::EmptyRequest("sample_exponentials needs n >= 1"));
    }
    Ok((0..n).map(|_| sample_exponential(rng)).collect())
}

/// The `N` rightmost atoms of a Poisson point process with intensity
/// `e^{-x} dx`, ranked in decreasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct TopAtoms {
    atoms: Vec<f64>,
}

impl TopAtoms {
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.atoms[0]
    }

    pub fn last(&self) -> f64 {
        self.atoms[self.atoms.len() - 1]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.atoms
    }
}

/// Draws the top `n` atoms as `p_k = -log(E_1 + ... + E_k)`.
pub fn sample_top_atoms<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<TopAtoms> {
    if n == 0 {
        return Err(Error::EmptyRequest("sample_top_atoms needs N >= 1"));
    }
    let mut atoms = Vec::with_capacity(n);
    fill_top_atoms(&mut atoms, n, rng);
    Ok(TopAtoms { atoms })
}

/// Allocation-free variant used by the simulators.
pub(crate) fn fill_top_atoms<R: Rng + ?Sized>(out: &mut Vec<f64>, n: usize, rng: &mut R) {
    out.clear();
    let mut arrival = 0.0;
    for _ in 0..n {
        arrival += sample_exponential(rng);
        out.push(-arrival.ln());
    }
    enforce_strict_decrease(out);
}

/// Nudges ties (a zero exponential, or rounding) one ulp downward so the
/// sequence stays strictly decreasing.
pub(crate) fn enforce_strict_decrease(xs: &mut [f64]) {
    for k in 1..xs.len() {
        if xs[k] >= xs[k - 1] {
            xs[k] = xs[k - 1].next_down();
        }
    }
}

/// `Gamma(shape = n + 1, scale = 1)`.
pub fn sample_gamma_n_plus_one<R: Rng + ?Sized>(n: usize, rng: &mut R) -> f64 {
    if n <= GAMMA_SUM_MAX_N {
        (0..=n).map(|_| sample_exponential(rng)).sum()
    } else {
        // shape > 1 and scale = 1 are always valid
        Gamma::new((n + 1) as f64, 1.0)
            .expect("valid gamma parameters")
            .sample(rng)
    }
}

/// `Z_N = -log G` with `G ~ Gamma(N + 1)`; density `e^{-(N+1)x - e^{-x}} / N!`.
pub fn sample_zn<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyRequest("sample_zn needs N >= 1"));
    }
    Ok(-sample_gamma_n_plus_one(n, rng).ln())
}

#[cfg(test)]
pub(crate) mod testing {
    use rand::RngCore;

    /// Replays a fixed list of uniforms through `rng.random::<f64>()`.
    ///
    /// `random::<f64>()` keeps the top 53 bits of `next_u64`, so each
    /// scripted value `v` in `[0, 1)` is encoded as `v * 2^53 << 11`.
    pub struct ScriptedUniforms {
        values: Vec<f64>,
        pos: usize,
    }

    impl ScriptedUniforms {
        /// `uniforms` are the desired outputs of `uniform_open0`, in `(0, 1]`.
        pub fn open0(uniforms: &[f64]) -> Self {
            Self {
                values: uniforms.iter().map(|u| 1.0 - u).collect(),
                pos: 0,
            }
        }
    }

    impl RngCore for ScriptedUniforms {
        fn next_u32(&mut self) -> u32 {
            (self.next_u64() >> 32) as u32
        }

        fn next_u64(&mut self) -> u64 {
            let v = self.values[self.pos % self.values.len()];
            self.pos += 1;
            ((v * (1u64 << 53) as f64) as u64) << 11
        }

        fn fill_bytes(&mut self, dst: &mut [u8]) {
            for chunk in dst.chunks_mut(8) {
                let bytes = self.next_u64().to_le_bytes();
                chunk.copy_from_slice(&bytes[..chunk.len()]);
            }
        }
    }
}
