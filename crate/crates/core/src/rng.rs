//! Counter-based deterministic random streams.
//!
//! Every draw is a pure function of `(master_seed, run, agent, iteration,
//! counter)`, so Monte Carlo runs are order-independent and can be sharded
//! across workers without changing a single bit of output. Gaussian variates
//! come from Box–Muller on top of a splitmix64 mixing chain; circularly
//! symmetric complex normals have independent real/imaginary parts of
//! variance 1/2 each.

use crate::C64;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// The splitmix64 finalizer: a high-quality 64-bit bijective mixer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn absorb(state: u64, word: u64) -> u64 {
    mix64(state ^ word.wrapping_mul(GOLDEN))
}

/// Derive the stream key for one `(run, agent, iteration)` cell.
#[inline]
pub fn stream_key(master_seed: u64, run: u64, agent: u64, iteration: u64) -> u64 {
    let mut s = mix64(master_seed ^ GOLDEN);
    s = absorb(s, run.wrapping_add(0x1));
    s = absorb(s, agent.wrapping_add(0x1000_0000));
    s = absorb(s, iteration.wrapping_add(0x2000_0000_0000));
    s
}

/// Sequential draws from one stream cell.
#[derive(Debug, Clone)]
pub struct DrawSeq {
    state: u64,
}

impl DrawSeq {
    pub fn new(key: u64) -> Self {
        Self { state: key }
    }

    /// Convenience constructor from the full cell coordinates.
    pub fn for_cell(master_seed: u64, run: u64, agent: u64, iteration: u64) -> Self {
        Self::new(stream_key(master_seed, run, agent, iteration))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in the half-open interval (0, 1].
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / (1u64 << 53) as f64)
    }

    /// A pair of independent standard normals (Box–Muller).
    #[inline]
    pub fn next_gaussian_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_unit();
        let u2 = self.next_unit();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = core::f64::consts::TAU * u2;
        (r * libm::cos(theta), r * libm::sin(theta))
    }

    /// Standard circularly symmetric complex normal: `E|z|² = 1`.
    #[inline]
    pub fn next_complex_gaussian(&mut self) -> C64 {
        let (a, b) = self.next_gaussian_pair();
        C64::new(a * core::f64::consts::FRAC_1_SQRT_2, b * core::f64::consts::FRAC_1_SQRT_2)
    }
}
