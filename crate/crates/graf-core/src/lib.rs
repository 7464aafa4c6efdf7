//! Differentiable periodic ambiguity functions for radar waveform design.
//!
//! The surface `chi[k,m] = |sum_n s[n] * conj(s[(n-k) mod N]) * e^(-j2*pi*mn/N)|^2`
//! is computed as circulant shift -> conjugate product -> row FFT -> squared
//! magnitude, every step recorded on a Wirtinger reverse-mode tape so radar
//! metrics (PSL, ISL, mainlobe width, spectral variance, ...) can be
//! minimized by gradient descent. A genetic-algorithm baseline, an
//! experiment sweep harness, and the `graf` CLI sit on top.

pub mod ambiguity;
pub mod error;
pub mod fft;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod mat;
pub mod optim;
pub mod sweep;
pub mod tape;

pub use ambiguity::{ambiguity, ambiguity_oracle, AmbiguityOpts, AmbiguitySurface, Layout, Waveform};
pub use error::{Error, Result};
pub use mat::{CMat, Mat, RMat};
