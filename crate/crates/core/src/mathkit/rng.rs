//! Counter-keyed random streams.
//!
//! A stream is identified by `(root_seed, worker_id, frame, lane)`. The tuple is
//! hashed into a ChaCha key and stream id, so any stream can be materialised
//! from its key alone without touching shared generator state. This is what
//! makes simulation results independent of how workers are scheduled across
//! threads.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// What a stream is used for. Distinct lanes of the same `(worker, frame)`
/// never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Lane {
    Channel = 1,
    Noise = 2,
    ModelInit = 3,
    Data = 4,
    Lipschitz = 5,
    Diagnostics = 6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub root_seed: u64,
    pub worker_id: u32,
    pub frame: u64,
    pub lane: Lane,
    /// Number of 32-bit words already consumed from the stream.
    pub draw_counter: u64,
}

impl RngStream {
    pub fn new(root_seed: u64, worker_id: u32, frame: u64, lane: Lane) -> Self {
        Self {
            root_seed,
            worker_id,
            frame,
            lane,
            draw_counter: 0,
        }
    }

    pub fn with_frame(self, frame: u64) -> Self {
        Self {
            frame,
            draw_counter: 0,
            ..self
        }
    }

    pub fn with_worker(self, worker_id: u32) -> Self {
        Self {
            worker_id,
            draw_counter: 0,
            ..self
        }
    }

    pub fn with_lane(self, lane: Lane) -> Self {
        Self {
            lane,
            draw_counter: 0,
            ..self
        }
    }

    /// Positions a generator at `draw_counter` within this stream.
    pub fn generator(&self) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = self.root_seed ^ splitmix64(self.frame.wrapping_add(0x5851_f42d_4c95_7f2d));
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(((self.worker_id as u64) << 8) | self.lane as u64);
        inner.set_word_pos(self.draw_counter as u128);
        StreamRng { inner }
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator materialised from an [`RngStream`].
#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    /// The stream key advanced past everything drawn so far.
    pub fn position(&self) -> u64 {
        self.inner.get_word_pos() as u64
    }
}

impl rand::RngCore for StreamRng {
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

/// Circularly symmetric complex Gaussian `CN(0, variance)`: real and imaginary
/// parts are independent `N(0, variance / 2)`.
pub fn sample_complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Result<Complex<f64>> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Domain(format!(
            "complex Gaussian variance must be positive and finite, got {variance}"
        )));
    }
    let scale = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Ok(Complex::new(scale * re, scale * im))
}

/// Real zero-mean Gaussian. A zero variance returns exactly `0.0` without
/// consuming any randomness.
pub fn sample_real_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Result<f64> {
    if variance < 0.0 || !variance.is_finite() {
        return Err(Error::Domain(format!(
            "real Gaussian variance must be non-negative and finite, got {variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(0.0);
    }
    let z: f64 = StandardNormal.sample(rng);
    Ok(variance.sqrt() * z)
}
