//! Discrete periodic ambiguity function: differentiable pipeline and a
//! brute-force oracle on an independent code path.
//!
//! The raw surface is `chi[k,m] = |X[k,m]|^2` with
//! `X[k,m] = sum_n s[n] * conj(s[(n-k) mod N]) * e^(-j2*pi*mn/N)`:
//! delay `k` down the rows, Doppler `m` across the columns. The Doppler
//! axis follows the forward-FFT kernel `e^(-j...)`; conventions that use
//! the `e^(+j...)` kernel produce the mirror image `m -> -m`, which leaves
//! the magnitude surface and every metric derived from it unchanged.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::fftshift2;
use crate::mat::RMat;
use crate::optim::rng::SplitMix64;
use crate::tape::{NodeId, Shape, Tape};

/// Largest length accepted by the O(N^3) oracle.
pub const ORACLE_MAX_N: usize = 512;

/// The optimization variable: either a free complex sequence or a phase
/// vector realized as `e^(j*theta)` (constant modulus by construction).
#[derive(Clone, Debug, PartialEq)]
pub enum Waveform {
    FreeComplex(Vec<Complex64>),
    PhaseOnly(Vec<f64>),
}

impl Waveform {
    pub fn from_phases(theta: Vec<f64>) -> Self {
        Waveform::PhaseOnly(theta)
    }

    pub fn random_phases(n: usize, rng: &mut SplitMix64) -> Self {
        Waveform::PhaseOnly(rng.phases(n))
    }

    pub fn len(&self) -> usize {
        match self {
            Waveform::FreeComplex(s) => s.len(),
            Waveform::PhaseOnly(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn samples(&self) -> Vec<Complex64> {
        match self {
            Waveform::FreeComplex(s) => s.clone(),
            Waveform::PhaseOnly(t) => t
                .iter()
                .map(|&a| Complex64::from_polar(1.0, a))
                .collect(),
        }
    }

    pub fn phases(&self) -> Option<&[f64]> {
        match self {
            Waveform::PhaseOnly(t) => Some(t),
            Waveform::FreeComplex(_) => None,
        }
    }

    /// Total energy `sum |s[n]|^2`.
    pub fn energy(&self) -> f64 {
        match self {
            Waveform::FreeComplex(s) => s.iter().map(|z| z.norm_sqr()).sum(),
            Waveform::PhaseOnly(t) => t.len() as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Delay 0 and Doppler 0 in the first row/column.
    Raw,
    /// Both axes rotated so zero delay/Doppler sits at `(N/2, N/2)`.
    Shifted,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AmbiguityOpts {
    pub shifted: bool,
    /// Divide by the surface maximum (a differentiable tape op when built
    /// through [`ambiguity_node`]). Off by default: PSL and ISL are already
    /// ratios, and the division inserts an argmax subgradient into every
    /// downstream loss.
    pub normalize: bool,
}

/// N x N power surface over (delay, Doppler).
#[derive(Clone, Debug)]
pub struct AmbiguitySurface {
    pub chi: RMat,
    pub layout: Layout,
    pub normalized: bool,
}

impl AmbiguitySurface {
    pub fn n(&self) -> usize {
        self.chi.rows()
    }

    /// Delay index of each row, in the surface's own ordering.
    pub fn delay_axis(&self) -> Vec<i64> {
        let n = self.n() as i64;
        match self.layout {
            Layout::Raw => (0..n).collect(),
            Layout::Shifted => (-(n / 2)..n - n / 2).collect(),
        }
    }

    /// Doppler index of each column.
    pub fn doppler_axis(&self) -> Vec<i64> {
        self.delay_axis()
    }

    /// Value at zero delay / zero Doppler.
    pub fn origin_value(&self) -> f64 {
        match self.layout {
            Layout::Raw => self.chi[(0, 0)],
            Layout::Shifted => {
                let h = self.n() / 2;
                self.chi[(h, h)]
            }
        }
    }

    /// The zero-Doppler slice (squared circular autocorrelation magnitude),
    /// delay ordered like [`Self::delay_axis`].
    pub fn zero_doppler_cut(&self) -> Vec<f64> {
        let n = self.n();
        let col = match self.layout {
            Layout::Raw => 0,
            Layout::Shifted => n / 2,
        };
        (0..n).map(|k| self.chi[(k, col)]).collect()
    }
}

/// Appends the ambiguity pipeline to `tape` and returns the raw-layout
/// surface node. All gradients flow back to `s_node`.
pub fn ambiguity_node(tape: &mut Tape, s_node: NodeId, normalize: bool) -> Result<NodeId> {
    match tape.value(s_node).shape() {
        Shape::Vector(n) if n >= 2 => {}
        Shape::Vector(_) => return Err(Error::invalid("ambiguity requires N >= 2")),
        _ => return Err(Error::Usage("ambiguity expects a complex vector node".into())),
    }
    let shifts = tape.shift_matrix(s_node)?;
    let products = tape.conj_product(s_node, shifts)?;
    let spectra = tape.fft_rows(products)?;
    let chi = tape.abs2(spectra)?;
    if normalize {
        let peak = tape.max(chi)?;
        tape.div_by_scalar(chi, peak)
    } else {
        Ok(chi)
    }
}

/// Computes the surface eagerly (internally via the same tape pipeline).
pub fn ambiguity(s: &Waveform, opts: AmbiguityOpts) -> Result<AmbiguitySurface> {
    if s.len() < 2 {
        return Err(Error::invalid("ambiguity requires N >= 2"));
    }
    let mut tape = Tape::new();
    let leaf = tape.leaf_complex(s.samples())?;
    let chi_node = ambiguity_node(&mut tape, leaf, opts.normalize)?;
    let raw = tape
        .value(chi_node)
        .as_real()
        .expect("surface node is real")
        .to_rmat()?;
    let (chi, layout) = if opts.shifted {
        (fftshift2(&raw)?, Layout::Shifted)
    } else {
        (raw, Layout::Raw)
    };
    Ok(AmbiguitySurface {
        chi,
        layout,
        normalized: opts.normalize,
    })
}

/// Literal triple-loop evaluation of the defining sum. No FFT, no tape:
/// an independent reference for testing the fast path. Refuses N > 512,
/// where the O(N^3) cost stops being a reasonable test fixture.
pub fn ambiguity_oracle(s: &Waveform) -> Result<AmbiguitySurface> {
    let n = s.len();
    if n < 2 {
        return Err(Error::invalid("ambiguity requires N >= 2"));
    }
    if n > ORACLE_MAX_N {
        return Err(Error::invalid(format!(
            "oracle is O(N^3) and capped at N = {ORACLE_MAX_N}; use ambiguity() for N = {n}"
        )));
    }
    let sv = s.samples();
    let mut chi = RMat::zeros(n, n);
    for k in 0..n {
        for m in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for idx in 0..n {
                let kernel =
                    Complex64::from_polar(1.0, -2.0 * PI * (m * idx) as f64 / n as f64);
                acc += sv[idx] * sv[(idx + n - k) % n].conj() * kernel;
            }
            chi[(k, m)] = acc.norm_sqr();
        }
    }
    Ok(AmbiguitySurface {
        chi,
        layout: Layout::Raw,
        normalized: false,
    })
}

/// The classic length-13 Barker phase code as a unit-modulus waveform.
pub fn barker13() -> Waveform {
    let signs = [1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
    Waveform::FreeComplex(signs.iter().map(|&s| Complex64::new(s, 0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check_complex;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn impulse(n: usize) -> Waveform {
        let mut s = vec![c(0.0, 0.0); n];
        s[0] = c(1.0, 0.0);
        Waveform::FreeComplex(s)
    }

    fn random_wave(rng: &mut SplitMix64, n: usize) -> Waveform {
        Waveform::FreeComplex(
            (0..n)
                .map(|_| c(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
                .collect(),
        )
    }

    fn max_rel_diff(a: &RMat, b: &RMat) -> f64 {
        let scale = b.as_slice().iter().cloned().fold(1e-30, f64::max).max(1.0);
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs() / scale)
            .fold(0.0, f64::max)
    }

    #[test]
    fn impulse_surface_is_a_doppler_ridge() {
        let surf = ambiguity(&impulse(4), AmbiguityOpts::default()).unwrap();
        for k in 0..4 {
            for m in 0..4 {
                let expected = if k == 0 { 1.0 } else { 0.0 };
                assert!(
                    (surf.chi[(k, m)] - expected).abs() < 1e-12,
                    "chi[{k},{m}] = {}",
                    surf.chi[(k, m)]
                );
            }
        }
    }

    #[test]
    fn dc_surface_is_a_delay_ridge() {
        let surf = ambiguity(
            &Waveform::FreeComplex(vec![c(1.0, 0.0); 4]),
            AmbiguityOpts::default(),
        )
        .unwrap();
        for k in 0..4 {
            for m in 0..4 {
                let expected = if m == 0 { 16.0 } else { 0.0 };
                assert!(
                    (surf.chi[(k, m)] - expected).abs() < 1e-10,
                    "chi[{k},{m}] = {}",
                    surf.chi[(k, m)]
                );
            }
        }
    }

    #[test]
    fn matches_oracle_on_random_signals() {
        let mut rng = SplitMix64::new(41);
        for &n in &[2usize, 3, 4, 5, 8, 16] {
            for _ in 0..20 {
                let w = random_wave(&mut rng, n);
                let fast = ambiguity(&w, AmbiguityOpts::default()).unwrap();
                let slow = ambiguity_oracle(&w).unwrap();
                let diff = max_rel_diff(&fast.chi, &slow.chi);
                assert!(diff <= 1e-10, "n={n} diff={diff}");
            }
        }
    }

    #[test]
    fn volume_identity() {
        let mut rng = SplitMix64::new(43);
        for &n in &[4usize, 8, 16] {
            let w = random_wave(&mut rng, n);
            let surf = ambiguity(&w, AmbiguityOpts::default()).unwrap();
            let total: f64 = surf.chi.as_slice().iter().sum();
            let expected = n as f64 * w.energy() * w.energy();
            assert!(
                (total - expected).abs() <= 1e-10 * expected,
                "n={n}: {total} vs {expected}"
            );
        }
    }

    #[test]
    fn origin_peak_and_point_symmetry() {
        let mut rng = SplitMix64::new(47);
        let w = random_wave(&mut rng, 16);
        let surf = ambiguity(&w, AmbiguityOpts::default()).unwrap();
        let peak = surf.chi[(0, 0)];
        let e = w.energy();
        assert!((peak - e * e).abs() <= 1e-12 * e * e);
        let n = 16;
        for k in 0..n {
            for m in 0..n {
                assert!(surf.chi[(k, m)] <= peak * (1.0 + 1e-12));
                let mirrored = surf.chi[((n - k) % n, (n - m) % n)];
                assert!((surf.chi[(k, m)] - mirrored).abs() <= 1e-10 * peak);
            }
        }
    }

    #[test]
    fn shifted_layout_centers_the_peak() {
        let mut rng = SplitMix64::new(53);
        let w = random_wave(&mut rng, 8);
        let surf = ambiguity(
            &w,
            AmbiguityOpts {
                shifted: true,
                normalize: false,
            },
        )
        .unwrap();
        assert_eq!(surf.layout, Layout::Shifted);
        let e = w.energy();
        assert!((surf.origin_value() - e * e).abs() <= 1e-12 * e * e);
        assert_eq!(surf.delay_axis().first(), Some(&-4));
    }

    #[test]
    fn normalized_surface_peaks_at_one() {
        let mut rng = SplitMix64::new(59);
        let w = random_wave(&mut rng, 8);
        let surf = ambiguity(
            &w,
            AmbiguityOpts {
                shifted: false,
                normalize: true,
            },
        )
        .unwrap();
        let mx = surf.chi.as_slice().iter().cloned().fold(0.0, f64::max);
        assert!((mx - 1.0).abs() < 1e-12);
        assert!(surf.normalized);
    }

    #[test]
    fn zero_doppler_cut_examples() {
        let ones = ambiguity(
            &Waveform::FreeComplex(vec![c(1.0, 0.0); 4]),
            AmbiguityOpts::default(),
        )
        .unwrap();
        assert_eq!(ones.zero_doppler_cut(), vec![16.0; 4]);

        let imp = ambiguity(&impulse(4), AmbiguityOpts::default()).unwrap();
        let cut = imp.zero_doppler_cut();
        assert!((cut[0] - 1.0).abs() < 1e-12);
        assert!(cut[1..].iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn barker13_cut_matches_direct_autocorrelation() {
        let w = barker13();
        let surf = ambiguity(&w, AmbiguityOpts::default()).unwrap();
        let cut = surf.zero_doppler_cut();
        assert!((cut[0] - 169.0).abs() < 1e-9);

        // Independent periodic autocorrelation of the published +-1 code.
        let s = w.samples();
        for k in 1..13 {
            let mut acc = c(0.0, 0.0);
            for idx in 0..13 {
                acc += s[idx] * s[(idx + 13 - k) % 13].conj();
            }
            assert!(
                (cut[k] - acc.norm_sqr()).abs() < 1e-9,
                "lag {k}: {} vs {}",
                cut[k],
                acc.norm_sqr()
            );
        }
    }

    #[test]
    fn oracle_agrees_with_fast_path_on_impulse() {
        let fast = ambiguity(&impulse(4), AmbiguityOpts::default()).unwrap();
        let slow = ambiguity_oracle(&impulse(4)).unwrap();
        assert!(max_rel_diff(&fast.chi, &slow.chi) <= 1e-12);
    }

    #[test]
    fn size_guards() {
        assert!(ambiguity(&impulse(1), AmbiguityOpts::default()).is_err());
        let big = Waveform::PhaseOnly(vec![0.0; ORACLE_MAX_N + 1]);
        assert!(ambiguity_oracle(&big).is_err());
    }

    #[test]
    fn surface_sum_gradient_checks_out() {
        let mut rng = SplitMix64::new(61);
        let w = random_wave(&mut rng, 8);
        let err = grad_check_complex(
            |tape: &mut Tape, leaf: NodeId| {
                let chi = ambiguity_node(tape, leaf, false)?;
                tape.sum(chi)
            },
            &w.samples(),
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "err {err}");
    }

    #[test]
    fn origin_cell_is_flat_on_the_unit_modulus_manifold() {
        // chi[0,0] = (sum |s|^2)^2 is constant when |s[n]| = 1, so the phase
        // gradient must vanish.
        let mut rng = SplitMix64::new(67);
        let theta = rng.phases(8);
        let mut tape = Tape::new();
        let leaf = tape.leaf_real(theta).unwrap();
        let s = tape.phase_to_signal(leaf).unwrap();
        let chi = ambiguity_node(&mut tape, s, false).unwrap();
        let origin = tape.entry_at(chi, 0, 0).unwrap();
        tape.set_root(origin).unwrap();
        let grads = tape.backward().unwrap();
        let g = grads.real(leaf).unwrap();
        assert!(g.data.iter().all(|v| v.abs() < 1e-10), "gradient {:?}", g.data);
    }
}
