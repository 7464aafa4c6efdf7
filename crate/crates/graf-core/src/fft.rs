//! 1-D FFT/IFFT, circular shifts, and 2-D fftshift.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * forward transform is the unnormalized DFT with the `e^(-j2*pi*kn/N)`
//!   kernel: `X[k] = sum_n x[n] * e^(-j2*pi*kn/N)`;
//! * inverse carries the `1/N` factor, so `ifft(fft(x)) = x`.
//!
//! Power-of-two lengths run through an iterative radix-2 transform with a
//! precomputed twiddle table. Any other length falls back to a direct
//! `O(N^2)` DFT: correct for the small odd lengths used in tests, but slow
//! for large non-power-of-two N, so prefer powers of two in hot paths.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mat::RMat;

/// Reusable transform plan for a fixed length. Immutable after construction,
/// safe to share across threads.
#[derive(Clone, Debug)]
pub struct FftPlan {
    n: usize,
    // e^(-j2*pi*j/n) for j in 0..n/2 (radix-2), or the full kernel row
    // basis e^(-j2*pi*j/n) for j in 0..n (direct).
    twiddles: Vec<Complex64>,
    radix2: bool,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("FFT length must be at least 1"));
        }
        let radix2 = n.is_power_of_two();
        let count = if radix2 { (n / 2).max(1) } else { n };
        let twiddles = (0..count)
            .map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / n as f64))
            .collect();
        Ok(FftPlan { n, twiddles, radix2 })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Unnormalized forward DFT, in place.
    pub fn forward_inplace(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        if self.radix2 {
            self.radix2_inplace(buf);
        } else {
            self.direct(buf, false);
        }
    }

    /// Inverse DFT with 1/N normalization, in place.
    pub fn inverse_inplace(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        if self.radix2 {
            // ifft(x) = conj(fft(conj(x))) / n
            for v in buf.iter_mut() {
                *v = v.conj();
            }
            self.radix2_inplace(buf);
            let scale = 1.0 / self.n as f64;
            for v in buf.iter_mut() {
                *v = v.conj() * scale;
            }
        } else {
            self.direct(buf, true);
        }
    }

    fn radix2_inplace(&self, buf: &mut [Complex64]) {
        let n = self.n;
        if n <= 1 {
            return;
        }

        // Bit-reversal permutation.
        let mut j = 0usize;
        for i in 0..n - 1 {
            if i < j {
                buf.swap(i, j);
            }
            let mut bit = n >> 1;
            while bit <= j {
                j -= bit;
                bit >>= 1;
            }
            j += bit;
        }

        // Butterflies; the shared table holds e^(-j2*pi*j/n), stage `len`
        // needs e^(-j2*pi*j/len) = twiddles[j * (n/len)].
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            let mut start = 0;
            while start < n {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
                start += len;
            }
            len <<= 1;
        }
    }

    fn direct(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (idx, &x) in buf.iter().enumerate() {
                // Index into the length-n kernel table modulo n.
                let w = self.twiddles[(k * idx) % n];
                let w = if inverse { w.conj() } else { w };
                acc += x * w;
            }
            *slot = if inverse { acc / n as f64 } else { acc };
        }
        buf.copy_from_slice(&out);
    }
}

/// Unnormalized forward DFT: `X[k] = sum_n x[n] * e^(-j2*pi*kn/N)`.
pub fn fft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let plan = FftPlan::new(x.len())?;
    let mut buf = x.to_vec();
    plan.forward_inplace(&mut buf);
    Ok(buf)
}

/// Inverse DFT: `x[n] = (1/N) * sum_k X[k] * e^(+j2*pi*kn/N)`.
pub fn ifft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let plan = FftPlan::new(x.len())?;
    let mut buf = x.to_vec();
    plan.inverse_inplace(&mut buf);
    Ok(buf)
}

/// Circular shift: `y[n] = x[(n-k) mod N]`. Any integer `k` wraps.
pub fn circshift(x: &[Complex64], k: i64) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let shift = k.rem_euclid(n as i64) as usize;
    let mut out = Vec::with_capacity(n);
    for idx in 0..n {
        out.push(x[(idx + n - shift) % n]);
    }
    out
}

/// Rotate both axes of a square real matrix by `floor(N/2)` so the former
/// `(0,0)` cell lands at `(floor(N/2), floor(N/2))`.
pub fn fftshift2(m: &RMat) -> Result<RMat> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "fftshift2 requires a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let half = n / 2;
    let mut out = RMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out[((r + half) % n, (c + half) % n)] = m[(r, c)];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::rng::SplitMix64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_signal(rng: &mut SplitMix64, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| c(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
            .collect()
    }

    fn assert_close(a: &[Complex64], b: &[Complex64], tol: f64) {
        assert_eq!(a.len(), b.len());
        let scale = b.iter().map(|z| z.norm()).fold(1e-30, f64::max).max(1.0);
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!(
                (x - y).norm() <= tol * scale,
                "mismatch at {i}: {x} vs {y}"
            );
        }
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let x = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let out = fft(&x).unwrap();
        assert_close(&out, &[c(1.0, 0.0); 4], 1e-15);
    }

    #[test]
    fn dc_concentrates_in_bin_zero() {
        let x = vec![c(1.0, 0.0); 4];
        let out = fft(&x).unwrap();
        let expected = vec![c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert_close(&out, &expected, 1e-15);
    }

    #[test]
    fn single_tone_lands_in_bin_one() {
        // x[n] = e^(+j2*pi*n/4) = [1, j, -1, -j] -> 4 in bin 1 under the
        // forward (-j) kernel.
        let x = vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        let out = fft(&x).unwrap();
        let expected = vec![c(0.0, 0.0), c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert_close(&out, &expected, 1e-12);
    }

    #[test]
    fn ifft_of_dc_spectrum() {
        let spec = vec![c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let out = ifft(&spec).unwrap();
        assert_close(&out, &[c(1.0, 0.0); 4], 1e-15);
        let out2 = ifft(&[c(1.0, 0.0); 4]).unwrap();
        let expected = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert_close(&out2, &expected, 1e-15);
    }

    #[test]
    fn roundtrip_identity() {
        let mut rng = SplitMix64::new(7);
        for &n in &[2usize, 3, 5, 8, 13, 16, 64] {
            let x = random_signal(&mut rng, n);
            let back = ifft(&fft(&x).unwrap()).unwrap();
            assert_close(&back, &x, 1e-12);
        }
    }

    #[test]
    fn empty_input_rejected() {
        assert!(fft(&[]).is_err());
        assert!(ifft(&[]).is_err());
    }

    #[test]
    fn parseval_over_random_vectors() {
        let mut rng = SplitMix64::new(11);
        for trial in 0..100 {
            let n = 2 + (rng.next_u64() % 63) as usize; // 2..=64
            let x = random_signal(&mut rng, n);
            let spec = fft(&x).unwrap();
            let lhs: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
            let rhs: f64 = n as f64 * x.iter().map(|z| z.norm_sqr()).sum::<f64>();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * rhs.max(1.0),
                "Parseval failed at trial {trial}, n={n}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn linearity() {
        let mut rng = SplitMix64::new(13);
        for _ in 0..20 {
            let n = 16;
            let x = random_signal(&mut rng, n);
            let y = random_signal(&mut rng, n);
            let alpha = c(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
            let beta = c(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
            let mixed: Vec<Complex64> = x
                .iter()
                .zip(&y)
                .map(|(a, b)| alpha * a + beta * b)
                .collect();
            let lhs = fft(&mixed).unwrap();
            let fx = fft(&x).unwrap();
            let fy = fft(&y).unwrap();
            let rhs: Vec<Complex64> = fx
                .iter()
                .zip(&fy)
                .map(|(a, b)| alpha * a + beta * b)
                .collect();
            assert_close(&lhs, &rhs, 1e-12);
        }
    }

    #[test]
    fn shift_theorem() {
        let mut rng = SplitMix64::new(17);
        let n = 16usize;
        let x = random_signal(&mut rng, n);
        let fx = fft(&x).unwrap();
        for k in [1i64, 3, 7, -2] {
            let shifted = circshift(&x, k);
            let lhs = fft(&shifted).unwrap();
            let rhs: Vec<Complex64> = (0..n)
                .map(|m| {
                    fx[m] * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * m as f64 / n as f64)
                })
                .collect();
            assert_close(&lhs, &rhs, 1e-12);
        }
    }

    #[test]
    fn circshift_basics() {
        let x = vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)];
        let y = circshift(&x, 1);
        assert_close(
            &y,
            &[c(4.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)],
            0.0,
        );
        assert_close(&circshift(&x, 0), &x, 0.0);
        assert_close(&circshift(&x, 4), &x, 0.0);
        assert_close(&circshift(&x, -3), &circshift(&x, 1), 0.0);
    }

    #[test]
    fn fftshift2_examples() {
        let m = RMat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = fftshift2(&m).unwrap();
        assert_eq!(s.as_slice(), &[4.0, 3.0, 2.0, 1.0]);

        let mut single = RMat::zeros(4, 4);
        single[(0, 0)] = 1.0;
        let shifted = fftshift2(&single).unwrap();
        assert_eq!(shifted[(2, 2)], 1.0);
        assert_eq!(shifted.as_slice().iter().sum::<f64>(), 1.0);

        let mut rng = SplitMix64::new(23);
        let data: Vec<f64> = (0..36).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let m = RMat::from_vec(6, 6, data).unwrap();
        let twice = fftshift2(&fftshift2(&m).unwrap()).unwrap();
        assert_eq!(twice.as_slice(), m.as_slice());

        let rect = RMat::zeros(2, 3);
        assert!(fftshift2(&rect).is_err());
    }

    #[test]
    fn scaling_smoke_benchmark() {
        // Doubling N should less than triple wall time once N is large.
        // Smoke check only: generous bound, no strict assertion on ratio.
        let time_one = |n: usize| {
            let plan = FftPlan::new(n).unwrap();
            let mut buf = vec![c(1.0, 0.5); n];
            let start = std::time::Instant::now();
            for _ in 0..8 {
                plan.forward_inplace(&mut buf);
            }
            start.elapsed().as_secs_f64()
        };
        let t1 = time_one(1 << 14);
        let t2 = time_one(1 << 15);
        assert!(
            t2 < 6.0 * t1.max(1e-6),
            "scaling looks worse than O(N log N): {t1} -> {t2}"
        );
    }
}
