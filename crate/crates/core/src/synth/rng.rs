//! Counter-based random streams.
//!
//! Every stream is keyed by `(seed, stream, frame, entity)`, so the numbers an
//! actor or frame receives do not depend on how many other entities exist or
//! in which order they are processed.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream identifiers used across the crate.
pub mod streams {
    pub const ACTORS: u64 = 1;
    pub const SWEEPS: u64 = 2;
    pub const LABEL_NOISE: u64 = 3;
    pub const OUTLIERS: u64 = 4;
    pub const MAP: u64 = 5;
    pub const DETECTIONS: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const POSE_NOISE: u64 = 8;
    pub const INIT: u64 = 9;
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    state: u64,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64, frame: u64, entity: u64) -> Self {
        let mut k = mix64(seed ^ GOLDEN);
        for part in [stream, frame, entity] {
            k = mix64(k ^ mix64(part.wrapping_add(GOLDEN)));
        }
        Self { state: k }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` (`n > 0`), by widening multiplication.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// `Laplace(0, b)` by inverse CDF: `b·sign(u)·ln(1 - 2|u|)`, `u` uniform on `(-1/2, 1/2)`.
    pub fn laplace(&mut self, b: f64) -> f64 {
        let u = self.uniform_open() - 0.5;
        let sign = if u < 0.0 { -1.0 } else { 1.0 };
        b * sign * (1.0 - 2.0 * u.abs()).ln()
    }

    /// Standard normal by Box-Muller (one value per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
