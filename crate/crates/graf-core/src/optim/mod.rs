//! Waveform optimizers: Adam over phases (or projected complex descent) and
//! a generational GA baseline. Both consume the identical loss
//! implementation from [`crate::losses`], so comparisons measure the
//! optimizer, not the objective.

pub mod rng;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::ambiguity::{ambiguity, AmbiguityOpts, Waveform};
use crate::error::{Error, Result};
use crate::fft::{fft, ifft};
use crate::losses::{
    psl_from_raw, psl_value, spectral_variance_value, to_db, ExclusionRegion, LossKind,
    SignalNodes,
};
use crate::tape::Tape;
use rng::SplitMix64;

fn default_lr() -> f64 {
    0.01
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_iterations() -> usize {
    2000
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps_adam: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps_adam: default_eps(),
            iterations: default_iterations(),
            seed: 0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::invalid("beta parameters must lie in (0, 1)"));
        }
        if self.eps_adam <= 0.0 {
            return Err(Error::invalid("eps must be positive"));
        }
        Ok(())
    }
}

/// First/second moment buffers for Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// One bias-corrected Adam update (`t` is 1-based).
pub fn adam_step(
    state: &mut AdamState,
    theta: &mut [f64],
    grad: &[f64],
    t: usize,
    cfg: &AdamConfig,
) -> Result<()> {
    if theta.len() != grad.len() || theta.len() != state.dim() {
        return Err(Error::invalid("adam_step shapes disagree"));
    }
    if t == 0 {
        return Err(Error::invalid("adam_step iteration index is 1-based"));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            op: "adam_step".into(),
            detail: "gradient contains NaN or Inf".into(),
        });
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..theta.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps_adam);
    }
    Ok(())
}

/// `s[n] / |s[n]|` elementwise. Zero samples are replaced with 1+0j (the
/// projection is undefined there) and a warning goes to stderr.
pub fn project_unit_modulus(s: &[Complex64]) -> Vec<Complex64> {
    let mut warned = false;
    s.iter()
        .map(|z| {
            let mag = z.norm();
            if mag == 0.0 {
                if !warned {
                    eprintln!("warning: zero sample replaced with 1+0j during unit-modulus projection");
                    warned = true;
                }
                Complex64::new(1.0, 0.0)
            } else {
                z / mag
            }
        })
        .collect()
}

/// `ifft(mask .* fft(s))`: frequency-domain masking, a projection for
/// binary masks.
pub fn apply_spectral_mask(s: &[Complex64], mask: &[f64]) -> Result<Vec<Complex64>> {
    if mask.len() != s.len() {
        return Err(Error::invalid("mask length must match signal length"));
    }
    if mask.iter().any(|&m| !(0.0..=1.0).contains(&m)) {
        return Err(Error::invalid("mask entries must lie in [0, 1]"));
    }
    let mut spectrum = fft(s)?;
    for (v, &m) in spectrum.iter_mut().zip(mask) {
        *v *= m;
    }
    ifft(&spectrum)
}

fn default_population() -> usize {
    50
}
fn default_generations() -> usize {
    300
}
fn default_tournament() -> usize {
    3
}
fn default_crossover() -> f64 {
    0.9
}
fn default_sigma() -> f64 {
    0.1
}
fn default_elitism() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_generations")]
    pub generations: usize,
    #[serde(default = "default_tournament")]
    pub tournament_size: usize,
    #[serde(default = "default_crossover")]
    pub crossover_rate: f64,
    /// Std-dev of the Gaussian phase mutation, radians.
    #[serde(default = "default_sigma")]
    pub mutation_sigma: f64,
    /// Per-gene mutation probability; `None` means `1/N`.
    #[serde(default)]
    pub mutation_rate: Option<f64>,
    #[serde(default = "default_elitism")]
    pub elitism: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: default_population(),
            generations: default_generations(),
            tournament_size: default_tournament(),
            crossover_rate: default_crossover(),
            mutation_sigma: default_sigma(),
            mutation_rate: None,
            elitism: default_elitism(),
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid("population must be at least 2"));
        }
        if self.generations == 0 {
            return Err(Error::invalid("generations must be positive"));
        }
        if self.tournament_size < 2 {
            return Err(Error::invalid("tournament size must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::invalid("crossover rate must lie in [0, 1]"));
        }
        if self.mutation_sigma <= 0.0 {
            return Err(Error::invalid("mutation sigma must be positive"));
        }
        if let Some(r) = self.mutation_rate {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid("mutation rate must lie in [0, 1]"));
            }
        }
        if self.elitism >= self.population {
            return Err(Error::invalid("elitism must be smaller than the population"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gradient,
    Ga,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Gradient => write!(f, "gradient"),
            Method::Ga => write!(f, "ga"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Optimize phases `theta` with `s = e^(j*theta)`; constant modulus by
    /// construction, Adam state has dimension N.
    PhaseParam,
    /// Optimize the free complex vector with a unit-modulus projection
    /// after every step; Adam state has dimension 2N.
    ProjectedComplex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub time_s: f64,
    pub loss: f64,
    pub psl_db: f64,
    pub spectral_variance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub loss: f64,
    pub psl_linear: f64,
    pub psl_db: f64,
    pub spectral_variance: f64,
}

/// Final waveform in serializable form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveformData {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<f64>>,
}

impl From<&Waveform> for WaveformData {
    fn from(w: &Waveform) -> Self {
        let samples = w.samples();
        WaveformData {
            re: samples.iter().map(|z| z.re).collect(),
            im: samples.iter().map(|z| z.im).collect(),
            phases: w.phases().map(|t| t.to_vec()),
        }
    }
}

impl WaveformData {
    pub fn to_waveform(&self) -> Waveform {
        match &self.phases {
            Some(t) => Waveform::PhaseOnly(t.clone()),
            None => Waveform::FreeComplex(
                self.re
                    .iter()
                    .zip(&self.im)
                    .map(|(&re, &im)| Complex64::new(re, im))
                    .collect(),
            ),
        }
    }
}

/// Full record of one optimization run: config snapshot, per-iteration
/// trace, and the final waveform with its metrics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub n: usize,
    pub seed: u64,
    pub loss: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam: Option<AdamConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<GradientMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ga: Option<GaConfig>,
    pub trace: Vec<TraceRow>,
    /// Loss evaluations spent optimizing (excludes reporting evaluations):
    /// `iterations` for the gradient method, `population * generations`
    /// for the GA.
    pub eval_count: u64,
    pub final_waveform: WaveformData,
    pub final_metrics: FinalMetrics,
    pub status: RunStatus,
    pub time_s: f64,
}

/// Region used for trace/report PSL: the loss's own region when it has
/// one, the default 3x3 exclusion otherwise.
pub fn metrics_region(loss: &LossKind) -> ExclusionRegion {
    match loss {
        LossKind::Experiment { region, .. } => *region,
        LossKind::Composite { spec } => spec
            .terms
            .iter()
            .find(|t| matches!(t.metric, crate::losses::Metric::Psl | crate::losses::Metric::Isl))
            .map(|t| ExclusionRegion {
                g_k: t.params.g_k.unwrap_or(1),
                g_m: t.params.g_m.unwrap_or(1),
            })
            .unwrap_or_default(),
        LossKind::MultiScenario { .. } => ExclusionRegion::default(),
    }
}

fn waveform_metrics(w: &Waveform, loss_value: f64, region: &ExclusionRegion) -> Result<FinalMetrics> {
    let surf = ambiguity(w, AmbiguityOpts::default())?;
    let psl = psl_value(&surf, region)?;
    Ok(FinalMetrics {
        loss: loss_value,
        psl_linear: psl,
        psl_db: to_db(psl),
        spectral_variance: spectral_variance_value(w)?,
    })
}

/// Gradient-based optimization with Adam.
///
/// Phase mode keeps the waveform on the unit circle by construction;
/// projected mode renormalizes after every step. A non-finite loss or
/// gradient truncates the trace and flags the record as failed.
pub fn optimize_gradient(
    initial: &Waveform,
    loss: &LossKind,
    cfg: &AdamConfig,
    mode: GradientMode,
) -> Result<RunRecord> {
    cfg.validate()?;
    let n = initial.len();
    if n < 2 {
        return Err(Error::invalid("optimization requires N >= 2"));
    }
    let region = metrics_region(loss);
    let start = Instant::now();
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut eval_count = 0u64;
    let mut status = RunStatus::Ok;

    // Phase mode state: theta (N). Projected mode state: [re; im] (2N).
    let mut theta: Vec<f64> = match (mode, initial) {
        (GradientMode::PhaseParam, Waveform::PhaseOnly(t)) => t.clone(),
        (GradientMode::PhaseParam, Waveform::FreeComplex(s)) => {
            s.iter().map(|z| z.arg()).collect()
        }
        (GradientMode::ProjectedComplex, w) => {
            let s = project_unit_modulus(&w.samples());
            s.iter()
                .map(|z| z.re)
                .chain(s.iter().map(|z| z.im))
                .collect()
        }
    };
    let dim = match mode {
        GradientMode::PhaseParam => n,
        GradientMode::ProjectedComplex => 2 * n,
    };
    let mut state = AdamState::new(dim);

    let current_wave = |theta: &[f64]| -> Waveform {
        match mode {
            GradientMode::PhaseParam => Waveform::PhaseOnly(theta.to_vec()),
            GradientMode::ProjectedComplex => Waveform::FreeComplex(
                (0..n)
                    .map(|i| Complex64::new(theta[i], theta[n + i]))
                    .collect(),
            ),
        }
    };

    for iter in 1..=cfg.iterations {
        let mut tape = Tape::new();
        let (signal, leaf_theta, leaf_s) = match mode {
            GradientMode::PhaseParam => {
                let t = tape.leaf_real(theta.clone())?;
                let s = tape.phase_to_signal(t)?;
                (SignalNodes { s, theta: Some(t) }, Some(t), s)
            }
            GradientMode::ProjectedComplex => {
                let samples: Vec<Complex64> =
                    (0..n).map(|i| Complex64::new(theta[i], theta[n + i])).collect();
                let s = tape.leaf_complex(samples)?;
                (SignalNodes { s, theta: None }, None, s)
            }
        };

        let built = (|| -> Result<(crate::losses::LossGraph, f64)> {
            let graph = loss.build(&mut tape, &signal)?;
            tape.set_root(graph.root)?;
            Ok((graph, tape.scalar_value(graph.root)?))
        })();
        eval_count += 1;

        let (graph, loss_val) = match built {
            Ok((g, v)) if v.is_finite() => (g, v),
            _ => {
                status = RunStatus::Failed;
                break;
            }
        };

        // Trace metrics reuse the surface already on the tape.
        let wave = current_wave(&theta);
        let psl = match graph.chi {
            Some(chi) => {
                let arr = tape.value(chi).as_real().expect("surface node is real");
                psl_from_raw(&arr.data, n, &region)?
            }
            None => {
                let surf = ambiguity(&wave, AmbiguityOpts::default())?;
                psl_value(&surf, &region)?
            }
        };
        trace.push(TraceRow {
            iter,
            time_s: start.elapsed().as_secs_f64(),
            loss: loss_val,
            psl_db: to_db(psl),
            spectral_variance: spectral_variance_value(&wave)?,
        });

        let grads = tape.backward()?;
        let grad: Vec<f64> = match mode {
            GradientMode::PhaseParam => {
                // Real leaf carries dL/dtheta directly.
                match grads.real(leaf_theta.expect("phase leaf")) {
                    Some(g) => g.data.clone(),
                    None => vec![0.0; n],
                }
            }
            GradientMode::ProjectedComplex => {
                // dL/dRe = 2*Re(g), dL/dIm = 2*Im(g): the Wirtinger factor
                // of two is applied here so `lr` means what it does in
                // mainstream frameworks.
                match grads.complex(leaf_s) {
                    Some(g) => g
                        .data
                        .iter()
                        .map(|z| 2.0 * z.re)
                        .chain(g.data.iter().map(|z| 2.0 * z.im))
                        .collect(),
                    None => vec![0.0; 2 * n],
                }
            }
        };

        if adam_step(&mut state, &mut theta, &grad, iter, cfg).is_err() {
            status = RunStatus::Failed;
            break;
        }

        if mode == GradientMode::ProjectedComplex {
            let projected = project_unit_modulus(
                &(0..n)
                    .map(|i| Complex64::new(theta[i], theta[n + i]))
                    .collect::<Vec<_>>(),
            );
            for (i, z) in projected.iter().enumerate() {
                theta[i] = z.re;
                theta[n + i] = z.im;
            }
        }
    }

    let final_wave = current_wave(&theta);
    // Reporting evaluation, deliberately not counted in eval_count.
    let final_loss = loss.evaluate(&final_wave)?;
    let final_metrics = waveform_metrics(&final_wave, final_loss, &region)?;
    Ok(RunRecord {
        method: Method::Gradient,
        n,
        seed: cfg.seed,
        loss: loss.clone(),
        adam: Some(*cfg),
        mode: Some(mode),
        ga: None,
        trace,
        eval_count,
        final_waveform: WaveformData::from(&final_wave),
        final_metrics,
        status,
        time_s: start.elapsed().as_secs_f64(),
    })
}

fn tournament_select(rng: &mut SplitMix64, fitness: &[f64], size: usize) -> usize {
    let mut best = rng.index(fitness.len());
    for _ in 1..size {
        let challenger = rng.index(fitness.len());
        if fitness[challenger] < fitness[best] {
            best = challenger;
        }
    }
    best
}

fn wrap_to_pi(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = (x + std::f64::consts::PI).rem_euclid(two_pi);
    if w < 0.0 {
        w += two_pi;
    }
    w - std::f64::consts::PI
}

/// Generational GA over phase chromosomes: tournament selection, per-gene
/// uniform crossover, Gaussian phase mutation with wrapping, elitism.
/// Fitness is the same loss evaluation the gradient method uses; exactly
/// `population * generations` evaluations are performed.
pub fn optimize_ga(loss: &LossKind, cfg: &GaConfig, n: usize) -> Result<RunRecord> {
    cfg.validate()?;
    if n < 2 {
        return Err(Error::invalid("optimization requires N >= 2"));
    }
    let region = metrics_region(loss);
    let mutation_rate = cfg.mutation_rate.unwrap_or(1.0 / n as f64);
    let mut rng = SplitMix64::new(cfg.seed);
    let start = Instant::now();

    let mut population: Vec<Vec<f64>> = (0..cfg.population).map(|_| rng.phases(n)).collect();
    let mut trace = Vec::with_capacity(cfg.generations);
    let mut eval_count = 0u64;
    let mut best_overall: Option<(Vec<f64>, f64)> = None;

    for generation in 1..=cfg.generations {
        let mut fitness = Vec::with_capacity(cfg.population);
        for individual in &population {
            let value = loss.evaluate(&Waveform::PhaseOnly(individual.clone()))?;
            eval_count += 1;
            fitness.push(value);
        }

        // Best of this population, lowest index on ties.
        let best_idx = (0..fitness.len())
            .min_by(|&a, &b| fitness[a].partial_cmp(&fitness[b]).unwrap().then(a.cmp(&b)))
            .expect("population is non-empty");
        let best_val = fitness[best_idx];
        if best_overall.as_ref().is_none_or(|(_, v)| best_val < *v) {
            best_overall = Some((population[best_idx].clone(), best_val));
        }

        let best_wave = Waveform::PhaseOnly(population[best_idx].clone());
        let metrics = waveform_metrics(&best_wave, best_val, &region)?;
        trace.push(TraceRow {
            iter: generation,
            time_s: start.elapsed().as_secs_f64(),
            loss: best_val,
            psl_db: metrics.psl_db,
            spectral_variance: metrics.spectral_variance,
        });

        if generation == cfg.generations {
            break;
        }

        // Evolve the next generation.
        let mut ranked: Vec<usize> = (0..cfg.population).collect();
        ranked.sort_by(|&a, &b| fitness[a].partial_cmp(&fitness[b]).unwrap().then(a.cmp(&b)));
        let mut next: Vec<Vec<f64>> = ranked
            .iter()
            .take(cfg.elitism)
            .map(|&i| population[i].clone())
            .collect();

        while next.len() < cfg.population {
            let p1 = tournament_select(&mut rng, &fitness, cfg.tournament_size);
            let p2 = tournament_select(&mut rng, &fitness, cfg.tournament_size);
            let (mut child_a, mut child_b) = if rng.chance(cfg.crossover_rate) {
                let mut a = Vec::with_capacity(n);
                let mut b = Vec::with_capacity(n);
                for (&g1, &g2) in population[p1].iter().zip(&population[p2]) {
                    if rng.chance(0.5) {
                        a.push(g1);
                        b.push(g2);
                    } else {
                        a.push(g2);
                        b.push(g1);
                    }
                }
                (a, b)
            } else {
                (population[p1].clone(), population[p2].clone())
            };
            for child in [&mut child_a, &mut child_b] {
                for gene in child.iter_mut() {
                    if rng.chance(mutation_rate) {
                        *gene = wrap_to_pi(*gene + cfg.mutation_sigma * rng.normal());
                    }
                }
            }
            next.push(child_a);
            if next.len() < cfg.population {
                next.push(child_b);
            }
        }
        population = next;
    }

    let (best_theta, best_val) = best_overall.expect("at least one generation ran");
    let final_wave = Waveform::PhaseOnly(best_theta);
    let final_metrics = waveform_metrics(&final_wave, best_val, &region)?;
    Ok(RunRecord {
        method: Method::Ga,
        n,
        seed: cfg.seed,
        loss: loss.clone(),
        adam: None,
        mode: None,
        ga: Some(*cfg),
        trace,
        eval_count,
        final_waveform: WaveformData::from(&final_wave),
        final_metrics,
        status: RunStatus::Ok,
        time_s: start.elapsed().as_secs_f64(),
    })
}

/// Convenience: deterministic random-phase initialization for a run seed.
pub fn initial_waveform(n: usize, seed: u64) -> Waveform {
    let mut rng = SplitMix64::new(seed);
    Waveform::random_phases(n, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_signed_lr() {
        // With g large against eps, the bias-corrected first step is
        // -lr * sign(g).
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(3);
        let mut theta = vec![0.0, 1.0, -2.0];
        let grad = vec![5.0, -3.0, 0.5];
        adam_step(&mut state, &mut theta, &grad, 1, &cfg).unwrap();
        assert!((theta[0] - (0.0 - 0.01)).abs() < 1e-6);
        assert!((theta[1] - (1.0 + 0.01)).abs() < 1e-6);
        assert!((theta[2] - (-2.0 - 0.01)).abs() < 1e-6);
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(2);
        let mut theta = vec![0.7, -0.4];
        for t in 1..=5 {
            adam_step(&mut state, &mut theta, &[0.0, 0.0], t, &cfg).unwrap();
        }
        assert_eq!(theta, vec![0.7, -0.4]);
    }

    #[test]
    fn adam_two_steps_match_hand_recurrence() {
        let cfg = AdamConfig::default();
        let g = 0.3;
        let mut state = AdamState::new(1);
        let mut theta = vec![1.0];
        adam_step(&mut state, &mut theta, &[g], 1, &cfg).unwrap();
        adam_step(&mut state, &mut theta, &[g], 2, &cfg).unwrap();

        // Scalar recurrence computed directly.
        let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.lr, cfg.eps_adam);
        let mut m = 0.0;
        let mut v = 0.0;
        let mut x = 1.0;
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((theta[0] - x).abs() < 1e-12);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(1);
        let mut theta = vec![0.0];
        assert!(adam_step(&mut state, &mut theta, &[f64::NAN], 1, &cfg).is_err());
    }

    #[test]
    fn projection_examples() {
        let out = project_unit_modulus(&[Complex64::new(3.0, 4.0)]);
        assert!((out[0] - Complex64::new(0.6, 0.8)).norm() < 1e-15);

        let unit = vec![Complex64::from_polar(1.0, 0.3); 4];
        let out = project_unit_modulus(&unit);
        for (a, b) in out.iter().zip(&unit) {
            assert!((a - b).norm() < 1e-15);
        }

        let mut rng = SplitMix64::new(9);
        let s: Vec<Complex64> = (0..16)
            .map(|_| Complex64::new(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)))
            .collect();
        for z in project_unit_modulus(&s) {
            assert!((z.norm() - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn spectral_mask_examples() {
        let mut rng = SplitMix64::new(10);
        let s: Vec<Complex64> = (0..8)
            .map(|_| Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
            .collect();

        let identity = apply_spectral_mask(&s, &[1.0; 8]).unwrap();
        for (a, b) in identity.iter().zip(&s) {
            assert!((a - b).norm() < 1e-12);
        }

        let zeroed = apply_spectral_mask(&s, &[0.0; 8]).unwrap();
        assert!(zeroed.iter().all(|z| z.norm() < 1e-14));

        // Binary masks are projections: applying twice equals once.
        let mask = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let once = apply_spectral_mask(&s, &mask).unwrap();
        let twice = apply_spectral_mask(&once, &mask).unwrap();
        for (a, b) in twice.iter().zip(&once) {
            assert!((a - b).norm() < 1e-12);
        }

        assert!(apply_spectral_mask(&s, &[1.0; 4]).is_err());
        assert!(apply_spectral_mask(&s, &[2.0; 8]).is_err());
    }

    fn quick_loss() -> LossKind {
        LossKind::experiment(0.0, 2000.0, ExclusionRegion::default())
    }

    #[test]
    fn zero_iteration_run_echoes_initial_metrics() {
        let cfg = AdamConfig {
            iterations: 0,
            seed: 4,
            ..AdamConfig::default()
        };
        let initial = initial_waveform(16, 4);
        let record =
            optimize_gradient(&initial, &quick_loss(), &cfg, GradientMode::PhaseParam).unwrap();
        assert!(record.trace.is_empty());
        assert_eq!(record.final_waveform.to_waveform(), initial);
        let expected = quick_loss().evaluate(&initial).unwrap();
        assert_eq!(record.final_metrics.loss, expected);
    }

    #[test]
    fn gradient_run_improves_psl_and_stays_unit_modulus() {
        let cfg = AdamConfig {
            iterations: 60,
            seed: 11,
            ..AdamConfig::default()
        };
        let initial = initial_waveform(32, 11);
        let record =
            optimize_gradient(&initial, &quick_loss(), &cfg, GradientMode::PhaseParam).unwrap();
        assert_eq!(record.status, RunStatus::Ok);
        assert_eq!(record.eval_count, 60);
        assert_eq!(record.trace.len(), 60);
        assert!(record.final_metrics.loss < record.trace[0].loss);
        for pair in record.trace.windows(2) {
            assert!(pair[1].iter == pair[0].iter + 1);
            assert!(pair[1].time_s >= pair[0].time_s);
        }
        let samples = record.final_waveform.to_waveform().samples();
        for z in samples {
            assert!((z.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn projected_mode_keeps_unit_modulus_and_2n_state() {
        let cfg = AdamConfig {
            iterations: 25,
            seed: 12,
            ..AdamConfig::default()
        };
        let initial = initial_waveform(16, 12);
        let record = optimize_gradient(
            &initial,
            &quick_loss(),
            &cfg,
            GradientMode::ProjectedComplex,
        )
        .unwrap();
        assert_eq!(record.status, RunStatus::Ok);
        for z in record.final_waveform.to_waveform().samples() {
            assert!((z.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn gradient_run_is_bitwise_deterministic() {
        let cfg = AdamConfig {
            iterations: 30,
            seed: 21,
            ..AdamConfig::default()
        };
        let run = || {
            let initial = initial_waveform(16, 21);
            optimize_gradient(&initial, &quick_loss(), &cfg, GradientMode::PhaseParam).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.final_waveform, b.final_waveform);
        for (x, y) in a.trace.iter().zip(&b.trace) {
            assert_eq!(x.loss.to_bits(), y.loss.to_bits());
            assert_eq!(x.psl_db.to_bits(), y.psl_db.to_bits());
        }
    }

    #[test]
    fn ga_constant_population_without_mutation() {
        // All-identical population and no mutation/crossover: best fitness
        // never changes.
        let cfg = GaConfig {
            population: 6,
            generations: 5,
            crossover_rate: 0.0,
            mutation_rate: Some(0.0),
            seed: 31,
            ..GaConfig::default()
        };
        let loss = quick_loss();
        let record = optimize_ga(&loss, &cfg, 16).unwrap();
        let first = record.trace[0].loss;
        for row in &record.trace {
            assert_eq!(row.loss, first);
        }
    }

    #[test]
    fn ga_best_so_far_is_monotone_with_elitism() {
        let cfg = GaConfig {
            population: 10,
            generations: 20,
            seed: 33,
            ..GaConfig::default()
        };
        let record = optimize_ga(&quick_loss(), &cfg, 16).unwrap();
        assert_eq!(record.eval_count, 200);
        let mut best = f64::INFINITY;
        for row in &record.trace {
            assert!(row.loss <= best + 1e-15, "regression at gen {}", row.iter);
            best = best.min(row.loss);
        }
    }

    #[test]
    fn ga_is_deterministic_per_seed() {
        let cfg = GaConfig {
            population: 8,
            generations: 6,
            seed: 35,
            ..GaConfig::default()
        };
        let a = optimize_ga(&quick_loss(), &cfg, 16).unwrap();
        let b = optimize_ga(&quick_loss(), &cfg, 16).unwrap();
        assert_eq!(a.final_waveform, b.final_waveform);

        let cfg2 = GaConfig { seed: 36, ..cfg };
        let c = optimize_ga(&quick_loss(), &cfg2, 16).unwrap();
        assert_ne!(a.final_waveform, c.final_waveform);
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig {
            population: 1,
            ..GaConfig::default()
        }
        .validate()
        .is_err());
        assert!(GaConfig {
            elitism: 50,
            ..GaConfig::default()
        }
        .validate()
        .is_err());
        assert!(AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        }
        .validate()
        .is_err());
    }
}
