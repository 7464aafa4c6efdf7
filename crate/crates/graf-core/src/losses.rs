//! Differentiable radar waveform metrics and their weighted combinations.
//!
//! Every metric is a scalar tape node built on top of the raw (unshifted,
//! unnormalized) ambiguity surface and/or the signal node, so one backward
//! pass yields the joint gradient of any combination. Eager value-only
//! evaluators are provided for trace reporting where no gradient is needed.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::ambiguity::{ambiguity_node, AmbiguitySurface, Layout, Waveform};
use crate::error::{Error, Result};
use crate::fft::fft;
use crate::tape::{compensated_sum, NodeId, RealArray, Shape, Tape};

pub const DEFAULT_GAMMA: f64 = 50.0;
pub const DEFAULT_ALPHA: f64 = 2000.0;

/// Half-widths of the mainlobe box excluded from the sidelobe region: in
/// shifted coordinates the mainlobe is `|k| <= g_k`, `|m| <= g_m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRegion {
    pub g_k: usize,
    pub g_m: usize,
}

impl Default for ExclusionRegion {
    fn default() -> Self {
        ExclusionRegion { g_k: 1, g_m: 1 }
    }
}

impl ExclusionRegion {
    /// Is raw-layout cell `(k, m)` inside the mainlobe box?
    pub fn in_mainlobe(&self, n: usize, k: usize, m: usize) -> bool {
        k.min(n - k) <= self.g_k && m.min(n - m) <= self.g_m
    }

    /// Row-major mask of the full-plane sidelobe region of a raw N x N surface.
    pub fn sidelobe_mask(&self, n: usize) -> Result<Arc<Vec<bool>>> {
        let mut mask = vec![false; n * n];
        let mut any = false;
        for k in 0..n {
            for m in 0..n {
                if !self.in_mainlobe(n, k, m) {
                    mask[k * n + m] = true;
                    any = true;
                }
            }
        }
        if !any {
            return Err(Error::invalid(format!(
                "exclusion region ({}, {}) leaves no sidelobe cells at N = {n}",
                self.g_k, self.g_m
            )));
        }
        Ok(Arc::new(mask))
    }

    /// Mask restricted to the zero-Doppler column (classic code-table PSL).
    pub fn zero_doppler_mask(&self, n: usize) -> Result<Arc<Vec<bool>>> {
        let mut mask = vec![false; n * n];
        let mut any = false;
        for k in 0..n {
            if k.min(n - k) > self.g_k {
                mask[k * n] = true;
                any = true;
            }
        }
        if !any {
            return Err(Error::invalid(format!(
                "g_k = {} leaves no zero-Doppler sidelobe cells at N = {n}",
                self.g_k
            )));
        }
        Ok(Arc::new(mask))
    }
}

/// Leaf node(s) for one waveform on a tape.
#[derive(Clone, Copy, Debug)]
pub struct SignalNodes {
    /// Complex signal node (a leaf, or `e^(j*theta)` of the phase leaf).
    pub s: NodeId,
    /// Phase leaf when the waveform is phase-parameterized.
    pub theta: Option<NodeId>,
}

/// Puts a waveform on the tape, phase-parameterized when it is `PhaseOnly`.
pub fn signal_nodes(tape: &mut Tape, w: &Waveform) -> Result<SignalNodes> {
    match w {
        Waveform::FreeComplex(s) => Ok(SignalNodes {
            s: tape.leaf_complex(s.clone())?,
            theta: None,
        }),
        Waveform::PhaseOnly(t) => {
            let theta = tape.leaf_real(t.clone())?;
            let s = tape.phase_to_signal(theta)?;
            Ok(SignalNodes {
                s,
                theta: Some(theta),
            })
        }
    }
}

fn square_side(tape: &Tape, chi: NodeId) -> Result<usize> {
    match tape.value(chi).shape() {
        Shape::Matrix(r, c) if r == c => Ok(r),
        _ => Err(Error::Usage("expected a square surface node".into())),
    }
}

/// Peak sidelobe level: `max over sidelobes of chi / chi[0,0]`, a linear
/// power ratio. Differentiable through the max subgradient.
pub fn psl_node(
    tape: &mut Tape,
    chi: NodeId,
    region: &ExclusionRegion,
    zero_doppler_only: bool,
) -> Result<NodeId> {
    let n = square_side(tape, chi)?;
    let mask = if zero_doppler_only {
        region.zero_doppler_mask(n)?
    } else {
        region.sidelobe_mask(n)?
    };
    let peak_sidelobe = tape.masked_max(chi, mask)?;
    let origin = tape.entry_at(chi, 0, 0)?;
    tape.div_scalars(peak_sidelobe, origin)
}

/// Integrated sidelobe level: `sum over sidelobes of chi / chi[0,0]`.
pub fn isl_node(
    tape: &mut Tape,
    chi: NodeId,
    region: &ExclusionRegion,
    zero_doppler_only: bool,
) -> Result<NodeId> {
    let n = square_side(tape, chi)?;
    let mask = if zero_doppler_only {
        region.zero_doppler_mask(n)?
    } else {
        region.sidelobe_mask(n)?
    };
    let total = tape.masked_sum(chi, mask)?;
    let origin = tape.entry_at(chi, 0, 0)?;
    tape.div_scalars(total, origin)
}

/// Soft mainlobe width: `sum_tau |tau| * sigmoid(gamma * (cut(tau) - 0.5))`
/// over the zero-Doppler cut normalized by `chi[0,0]` (so `gamma` is
/// scale-free). A soft count weighted by |tau|, not the literal -3 dB width.
pub fn mainlobe_width_node(tape: &mut Tape, chi: NodeId, gamma: f64) -> Result<NodeId> {
    if gamma <= 0.0 {
        return Err(Error::invalid("gamma must be positive"));
    }
    let n = square_side(tape, chi)?;
    let cut = tape.zero_doppler_cut_shifted(chi)?;
    let origin = tape.entry_at(chi, 0, 0)?;
    let cut_norm = tape.div_by_scalar(cut, origin)?;
    let scaled = tape.mul_const(cut_norm, gamma)?;
    let centered = tape.add_const(scaled, -0.5 * gamma)?;
    let soft = tape.sigmoid(centered)?;
    let half = (n / 2) as i64;
    let weights: Vec<f64> = (0..n).map(|i| (i as i64 - half).abs() as f64).collect();
    tape.weighted_sum(soft, Arc::new(weights))
}

/// Population variance of the normalized power spectrum
/// `p = |fft(s)|^2 / sum|fft(s)|^2`; zero for a perfectly flat spectrum.
pub fn spectral_variance_node(tape: &mut Tape, s: NodeId) -> Result<NodeId> {
    match tape.value(s).shape() {
        Shape::Vector(n) if n >= 2 => {}
        _ => return Err(Error::invalid("spectral variance requires N >= 2")),
    }
    let p = tape.power_spectrum(s)?;
    let total = tape.sum(p)?;
    if tape.scalar_value(total)? <= 0.0 {
        return Err(Error::invalid(
            "spectral variance of all-zero signal is undefined",
        ));
    }
    let normalized = tape.div_by_scalar(p, total)?;
    tape.variance(normalized)
}

/// Population variance of `|s|`: zero exactly on constant-modulus waveforms.
pub fn constant_modulus_node(tape: &mut Tape, s: NodeId) -> Result<NodeId> {
    match tape.value(s).shape() {
        Shape::Vector(n) if n >= 2 => {}
        _ => return Err(Error::invalid("constant-modulus penalty requires N >= 2")),
    }
    let mags = tape.abs_mag(s)?;
    tape.variance(mags)
}

/// Squared Frobenius distance between the surface node and a raw-layout
/// target surface.
pub fn match_node(tape: &mut Tape, chi: NodeId, target: &AmbiguitySurface) -> Result<NodeId> {
    if target.layout != Layout::Raw {
        return Err(Error::invalid("match target must be in raw layout"));
    }
    let n = square_side(tape, chi)?;
    if target.n() != n {
        return Err(Error::invalid(format!(
            "match target is {}x{} but surface is {n}x{n}",
            target.n(),
            target.n()
        )));
    }
    let arr = RealArray::matrix(n, n, target.chi.as_slice().to_vec());
    tape.frobenius_dist_sq(chi, Arc::new(arr))
}

/// Sum of squared wrapped circular phase increments of a phase leaf.
pub fn phase_smoothness_node(tape: &mut Tape, signal: &SignalNodes) -> Result<NodeId> {
    let theta = signal.theta.ok_or_else(|| {
        Error::invalid("phase smoothness requires a phase-parameterized waveform")
    })?;
    tape.phase_smoothness(theta)
}

// ---------------------------------------------------------------------------
// Loss specifications
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Match,
    Psl,
    Isl,
    MainlobeWidth,
    ConstantModulus,
    SpectralVariance,
    PhaseSmoothness,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_m: Option<usize>,
    /// Restrict PSL/ISL to the zero-Doppler column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_doppler_only: Option<bool>,
}

impl TermParams {
    fn region(&self) -> ExclusionRegion {
        let d = ExclusionRegion::default();
        ExclusionRegion {
            g_k: self.g_k.unwrap_or(d.g_k),
            g_m: self.g_m.unwrap_or(d.g_m),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub metric: Metric,
    pub weight: f64,
    #[serde(default)]
    pub params: TermParams,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// Weighted combination of metric terms.
///
/// JSON form:
/// `{"terms":[{"metric":"psl","weight":1.0,"params":{"g_k":1,"g_m":1}}],"gamma":50.0,"alpha":2000.0}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub terms: Vec<LossTerm>,
    /// Sigmoid sharpness of the mainlobe-width term.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Scale applied to the spectral-variance term wherever a loss pairs it
    /// with PSL-like ratios.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Raw-layout target surface rows for the match term.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<Vec<f64>>>,
}

impl LossSpec {
    pub fn single(metric: Metric, weight: f64, params: TermParams) -> Self {
        LossSpec {
            terms: vec![LossTerm {
                metric,
                weight,
                params,
            }],
            gamma: DEFAULT_GAMMA,
            alpha: DEFAULT_ALPHA,
            target: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::invalid("loss must contain at least one term"));
        }
        for t in &self.terms {
            if !t.weight.is_finite() || t.weight < 0.0 {
                return Err(Error::invalid("term weights must be finite and >= 0"));
            }
            if t.metric == Metric::Match && self.target.is_none() {
                return Err(Error::invalid("match term requires a target surface"));
            }
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid("gamma must be positive"));
        }
        if self.alpha <= 0.0 {
            return Err(Error::invalid("alpha must be positive"));
        }
        Ok(())
    }

    fn target_surface(&self, n: usize) -> Result<Option<AmbiguitySurface>> {
        let Some(rows) = &self.target else {
            return Ok(None);
        };
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(format!("target surface must be {n}x{n}")));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(Some(AmbiguitySurface {
            chi: crate::mat::RMat::from_vec(n, n, data)?,
            layout: Layout::Raw,
            normalized: false,
        }))
    }
}

/// One scenario of a multi-condition loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub spec: LossSpec,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
}

/// Fully-built loss: the scalar root plus the interior nodes callers need
/// for gradients and trace metrics.
#[derive(Clone, Copy, Debug)]
pub struct LossGraph {
    pub root: NodeId,
    pub signal: SignalNodes,
    /// Raw surface node, when any term required one.
    pub chi: Option<NodeId>,
}

fn chi_for(tape: &mut Tape, signal: &SignalNodes, chi: &mut Option<NodeId>) -> Result<NodeId> {
    if let Some(id) = *chi {
        return Ok(id);
    }
    let id = ambiguity_node(tape, signal.s, false)?;
    *chi = Some(id);
    Ok(id)
}

fn build_composite_with_chi(
    tape: &mut Tape,
    signal: &SignalNodes,
    spec: &LossSpec,
    chi: &mut Option<NodeId>,
) -> Result<NodeId> {
    spec.validate()?;
    let mut acc: Option<NodeId> = None;
    for term in &spec.terms {
        let metric_node = match term.metric {
            Metric::Psl => {
                let surface = chi_for(tape, signal, chi)?;
                let zd = term.params.zero_doppler_only.unwrap_or(false);
                psl_node(tape, surface, &term.params.region(), zd)?
            }
            Metric::Isl => {
                let surface = chi_for(tape, signal, chi)?;
                let zd = term.params.zero_doppler_only.unwrap_or(false);
                isl_node(tape, surface, &term.params.region(), zd)?
            }
            Metric::MainlobeWidth => {
                let surface = chi_for(tape, signal, chi)?;
                mainlobe_width_node(tape, surface, spec.gamma)?
            }
            Metric::ConstantModulus => constant_modulus_node(tape, signal.s)?,
            Metric::SpectralVariance => spectral_variance_node(tape, signal.s)?,
            Metric::PhaseSmoothness => phase_smoothness_node(tape, signal)?,
            Metric::Match => {
                let surface = chi_for(tape, signal, chi)?;
                let n = square_side(tape, surface)?;
                let target = spec
                    .target_surface(n)?
                    .ok_or_else(|| Error::invalid("match term requires a target surface"))?;
                match_node(tape, surface, &target)?
            }
        };
        let weighted = tape.mul_const(metric_node, term.weight)?;
        acc = Some(match acc {
            None => weighted,
            Some(prev) => tape.add(prev, weighted)?,
        });
    }
    Ok(acc.expect("validated non-empty terms"))
}

/// `sum_i weight_i * metric_i` on one tape.
pub fn build_composite(tape: &mut Tape, signal: &SignalNodes, spec: &LossSpec) -> Result<LossGraph> {
    let mut chi = None;
    let root = build_composite_with_chi(tape, signal, spec, &mut chi)?;
    Ok(LossGraph {
        root,
        signal: *signal,
        chi,
    })
}

/// The joint detection/LPI study objective:
/// `PSL + lambda * SpectralVariance * alpha` with PSL a linear power ratio.
pub fn build_experiment(
    tape: &mut Tape,
    signal: &SignalNodes,
    lambda: f64,
    alpha: f64,
    region: &ExclusionRegion,
) -> Result<LossGraph> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    if alpha <= 0.0 {
        return Err(Error::invalid("alpha must be positive"));
    }
    let mut chi = None;
    let surface = chi_for(tape, signal, &mut chi)?;
    let psl = psl_node(tape, surface, region, false)?;
    let root = if lambda == 0.0 {
        psl
    } else {
        let sv = spectral_variance_node(tape, signal.s)?;
        let scaled = tape.mul_const(sv, lambda * alpha)?;
        tape.add(psl, scaled)?
    };
    Ok(LossGraph {
        root,
        signal: *signal,
        chi,
    })
}

/// `sum_i weight_i * composite_i`, all scenarios sharing one tape and one
/// surface node.
pub fn build_multi_scenario(
    tape: &mut Tape,
    signal: &SignalNodes,
    set: &ScenarioSet,
) -> Result<LossGraph> {
    if set.scenarios.is_empty() {
        return Err(Error::invalid("scenario set must contain at least one scenario"));
    }
    let mut chi = None;
    let mut acc: Option<NodeId> = None;
    for scenario in &set.scenarios {
        if !scenario.weight.is_finite() || scenario.weight < 0.0 {
            return Err(Error::invalid("scenario weights must be finite and >= 0"));
        }
        let part = build_composite_with_chi(tape, signal, &scenario.spec, &mut chi)?;
        let weighted = tape.mul_const(part, scenario.weight)?;
        acc = Some(match acc {
            None => weighted,
            Some(prev) => tape.add(prev, weighted)?,
        });
    }
    Ok(LossGraph {
        root: acc.expect("non-empty scenario set"),
        signal: *signal,
        chi,
    })
}

/// Loss selector shared by the optimizers and the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    Composite { spec: LossSpec },
    Experiment {
        lambda: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        region: ExclusionRegion,
    },
    MultiScenario { set: ScenarioSet },
}

impl LossKind {
    pub fn experiment(lambda: f64, alpha: f64, region: ExclusionRegion) -> Self {
        LossKind::Experiment {
            lambda,
            alpha,
            region,
        }
    }

    pub fn build(&self, tape: &mut Tape, signal: &SignalNodes) -> Result<LossGraph> {
        match self {
            LossKind::Composite { spec } => build_composite(tape, signal, spec),
            LossKind::Experiment {
                lambda,
                alpha,
                region,
            } => build_experiment(tape, signal, *lambda, *alpha, region),
            LossKind::MultiScenario { set } => build_multi_scenario(tape, signal, set),
        }
    }

    /// Forward-only evaluation; the single loss implementation behind both
    /// the gradient method and the GA.
    pub fn evaluate(&self, w: &Waveform) -> Result<f64> {
        let mut tape = Tape::new();
        let signal = signal_nodes(&mut tape, w)?;
        let graph = self.build(&mut tape, &signal)?;
        tape.scalar_value(graph.root)
    }
}

// ---------------------------------------------------------------------------
// Eager (value-only) metric evaluation for traces and reports
// ---------------------------------------------------------------------------

/// `10*log10(x)` for reporting linear power ratios in dB.
pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

fn shifted_abs_coords(surface: &AmbiguitySurface, r: usize, c: usize) -> (usize, usize) {
    let n = surface.n();
    match surface.layout {
        Layout::Raw => (r.min(n - r), c.min(n - c)),
        Layout::Shifted => {
            let h = (n / 2) as i64;
            ((r as i64 - h).unsigned_abs() as usize, (c as i64 - h).unsigned_abs() as usize)
        }
    }
}

/// Value-only PSL over a raw-layout row-major surface slice.
pub fn psl_from_raw(chi: &[f64], n: usize, region: &ExclusionRegion) -> Result<f64> {
    if chi.len() != n * n {
        return Err(Error::invalid("surface slice length does not match n"));
    }
    let origin = chi[0];
    let mut best: Option<f64> = None;
    for k in 0..n {
        for m in 0..n {
            if region.in_mainlobe(n, k, m) {
                continue;
            }
            let v = chi[k * n + m];
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    let peak = best.ok_or_else(|| Error::invalid("empty sidelobe region"))?;
    Ok(peak / origin)
}

/// Value-only PSL of a surface in either layout.
pub fn psl_value(surface: &AmbiguitySurface, region: &ExclusionRegion) -> Result<f64> {
    if surface.layout == Layout::Raw {
        return psl_from_raw(surface.chi.as_slice(), surface.n(), region);
    }
    let n = surface.n();
    let origin = surface.origin_value();
    let mut best: Option<f64> = None;
    for r in 0..n {
        for c in 0..n {
            let (ka, ma) = shifted_abs_coords(surface, r, c);
            if ka <= region.g_k && ma <= region.g_m {
                continue;
            }
            let v = surface.chi[(r, c)];
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    let peak = best.ok_or_else(|| Error::invalid("empty sidelobe region"))?;
    Ok(peak / origin)
}

/// Value-only ISL of a surface in either layout.
pub fn isl_value(surface: &AmbiguitySurface, region: &ExclusionRegion) -> Result<f64> {
    let n = surface.n();
    let origin = surface.origin_value();
    let mut cells = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let (ka, ma) = shifted_abs_coords(surface, r, c);
            if ka <= region.g_k && ma <= region.g_m {
                continue;
            }
            cells.push(surface.chi[(r, c)]);
        }
    }
    if cells.is_empty() {
        return Err(Error::invalid("empty sidelobe region"));
    }
    Ok(compensated_sum(cells.into_iter()) / origin)
}

/// Value-only spectral variance of a waveform.
pub fn spectral_variance_value(w: &Waveform) -> Result<f64> {
    if w.len() < 2 {
        return Err(Error::invalid("spectral variance requires N >= 2"));
    }
    let spectrum = fft(&w.samples())?;
    let power: Vec<f64> = spectrum.iter().map(|z| z.norm_sqr()).collect();
    let total = compensated_sum(power.iter().copied());
    if total <= 0.0 {
        return Err(Error::invalid(
            "spectral variance of all-zero signal is undefined",
        ));
    }
    let n = power.len() as f64;
    let mean = compensated_sum(power.iter().map(|p| p / total)) / n;
    Ok(compensated_sum(power.iter().map(|p| {
        let d = p / total - mean;
        d * d
    })) / n)
}
