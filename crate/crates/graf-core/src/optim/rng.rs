//! Deterministic, portable random numbers for initialization and the GA.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood; public-domain reference
//! by Vigna, <https://prng.di.unimi.it/splitmix64.c>): a 64-bit counter-based
//! scheme whose output is a fixed finalizer mix of the counter. Same seed,
//! same stream, on every platform. Gaussians come from Box-Muller on top of
//! the uniform stream, so they inherit the same portability.

use std::f64::consts::PI;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Rejection-free modulo is fine here: n is tiny (population sizes)
        // compared to 2^64, so the bias is far below anything observable.
        (self.next_u64() % n as u64) as usize
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller (two uniform draws per sample).
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// Phase vector i.i.d. uniform on [-pi, pi).
    pub fn phases(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.uniform(-PI, PI)).collect()
    }
}
