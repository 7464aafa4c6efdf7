//! Finite-difference validation of tape gradients.
//!
//! For a complex leaf the analytic pair `(2*Re(g), 2*Im(g))` is compared
//! against central differences of the loss over the real and imaginary part
//! of every sample; for a real leaf the stored gradient is compared directly.
//! Relative error uses `max(|analytic|, |numeric|, 1e-12)` as denominator.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};

/// Builds a loss sub-graph from a leaf node and returns the root id.
pub trait LossBuilder {
    fn build(&self, tape: &mut Tape, leaf: NodeId) -> Result<NodeId>;
}

impl<F> LossBuilder for F
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    fn build(&self, tape: &mut Tape, leaf: NodeId) -> Result<NodeId> {
        self(tape, leaf)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn eval_complex(f: &impl LossBuilder, s: &[Complex64]) -> Result<f64> {
    let mut tape = Tape::new();
    let leaf = tape.leaf_complex(s.to_vec())?;
    let root = f.build(&mut tape, leaf)?;
    let loss = tape.scalar_value(root)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            op: "loss".into(),
            detail: format!("loss evaluated to {loss}"),
        });
    }
    Ok(loss)
}

fn eval_real(f: &impl LossBuilder, theta: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let leaf = tape.leaf_real(theta.to_vec())?;
    let root = f.build(&mut tape, leaf)?;
    let loss = tape.scalar_value(root)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            op: "loss".into(),
            detail: format!("loss evaluated to {loss}"),
        });
    }
    Ok(loss)
}

/// Worst relative error between tape gradients and central differences for a
/// loss of a complex vector.
pub fn grad_check_complex(
    f: impl LossBuilder,
    s: &[Complex64],
    eps: f64,
) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::invalid("step size must be positive"));
    }
    let mut tape = Tape::new();
    let leaf = tape.leaf_complex(s.to_vec())?;
    let root = f.build(&mut tape, leaf)?;
    tape.set_root(root)?;
    let loss = tape.scalar_value(root)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            op: "loss".into(),
            detail: format!("loss evaluated to {loss}"),
        });
    }
    let grads = tape.backward()?;
    let g = grads
        .complex(leaf)
        .ok_or_else(|| Error::Usage("loss does not depend on the leaf".into()))?
        .clone();

    let mut worst = 0.0f64;
    let mut probe = s.to_vec();
    for i in 0..s.len() {
        let base = probe[i];

        probe[i] = base + Complex64::new(eps, 0.0);
        let lp = eval_complex(&f, &probe)?;
        probe[i] = base - Complex64::new(eps, 0.0);
        let lm = eval_complex(&f, &probe)?;
        worst = worst.max(rel_err(2.0 * g.data[i].re, (lp - lm) / (2.0 * eps)));

        probe[i] = base + Complex64::new(0.0, eps);
        let lp = eval_complex(&f, &probe)?;
        probe[i] = base - Complex64::new(0.0, eps);
        let lm = eval_complex(&f, &probe)?;
        worst = worst.max(rel_err(2.0 * g.data[i].im, (lp - lm) / (2.0 * eps)));

        probe[i] = base;
    }
    Ok(worst)
}

/// Worst relative error for a loss of a real vector (e.g. a phase leaf).
pub fn grad_check_real(f: impl LossBuilder, theta: &[f64], eps: f64) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::invalid("step size must be positive"));
    }
    let mut tape = Tape::new();
    let leaf = tape.leaf_real(theta.to_vec())?;
    let root = f.build(&mut tape, leaf)?;
    tape.set_root(root)?;
    let loss = tape.scalar_value(root)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            op: "loss".into(),
            detail: format!("loss evaluated to {loss}"),
        });
    }
    let grads = tape.backward()?;
    let g = grads
        .real(leaf)
        .ok_or_else(|| Error::Usage("loss does not depend on the leaf".into()))?
        .clone();

    let mut worst = 0.0f64;
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        let base = probe[i];
        probe[i] = base + eps;
        let lp = eval_real(&f, &probe)?;
        probe[i] = base - eps;
        let lm = eval_real(&f, &probe)?;
        probe[i] = base;
        worst = worst.max(rel_err(g.data[i], (lp - lm) / (2.0 * eps)));
    }
    Ok(worst)
}

/// One row of the standard validation suite.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SuiteEntry {
    pub loss: String,
    pub n: usize,
    pub seed: u64,
    pub max_rel_err: f64,
}

/// Central-difference checks (step `eps`) of every pipeline loss against
/// tape gradients, over random complex signals. Returns one entry per
/// (loss, n, seed) triple.
pub fn standard_suite(ns: &[usize], seeds: &[u64], eps: f64) -> Result<Vec<SuiteEntry>> {
    use crate::ambiguity::{ambiguity, ambiguity_node, AmbiguityOpts, Waveform};
    use crate::losses::{
        build_composite, build_experiment, build_multi_scenario, constant_modulus_node, isl_node,
        mainlobe_width_node, match_node, psl_node, spectral_variance_node,
        ExclusionRegion, LossSpec, Metric, Scenario, ScenarioSet, SignalNodes, TermParams,
    };
    use crate::optim::rng::SplitMix64;

    let region = ExclusionRegion::default();
    let mut entries = Vec::new();
    for &n in ns {
        for &seed in seeds {
            let mut rng = SplitMix64::new(seed.wrapping_mul(0x9E37).wrapping_add(n as u64));
            let s: Vec<Complex64> = (0..n)
                .map(|_| {
                    Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))
                })
                .collect();
            // A fixed target surface for the match loss, from an unrelated
            // random waveform.
            let target = ambiguity(
                &Waveform::random_phases(n, &mut SplitMix64::new(seed.wrapping_add(977))),
                AmbiguityOpts::default(),
            )?;

            let mut push = |loss: &str, err: f64| {
                entries.push(SuiteEntry {
                    loss: loss.to_string(),
                    n,
                    seed,
                    max_rel_err: err,
                });
            };

            let err = grad_check_complex(
                |t: &mut Tape, leaf: NodeId| {
                    let chi = ambiguity_node(t, leaf, false)?;
                    t.sum(chi)
                },
                &s,
                eps,
            )?;
            push("surface_sum", err);

            let err = grad_check_complex(
                |t: &mut Tape, leaf: NodeId| {
                    let chi = ambiguity_node(t, leaf, false)?;
                    isl_node(t, chi, &region, false)
                },
                &s,
                eps,
            )?;
            push("isl", err);

            let err = grad_check_complex(
                |t: &mut Tape, leaf: NodeId| {
                    let chi = ambiguity_node(t, leaf, false)?;
                    psl_node(t, chi, &region, false)
                },
                &s,
                eps,
            )?;
            push("psl", err);

            let err = grad_check_complex(
                |t: &mut Tape, leaf: NodeId| spectral_variance_node(t, leaf),
                &s,
                eps,
            )?;
            push("spectral_variance", err);

            let err = grad_check_complex(
                |t: &mut Tape, leaf: NodeId| constant_modulus_node(t, leaf),
                &s,
                eps,
            )?;
            push("constant_modulus", err);

            let err = grad_check_complex(
                |t: &mut Tape, leaf: NodeId| {
                    let chi = ambiguity_node(t, leaf, false)?;
                    match_node(t, chi, &target)
                },
                &s,
                eps,
            )?;
            push("match", err);

            let err = grad_check_complex(
                |t: &mut Tape, leaf: NodeId| {
                    let chi = ambiguity_node(t, leaf, false)?;
                    mainlobe_width_node(t, chi, 50.0)
                },
                &s,
                eps,
            )?;
            push("mainlobe_width", err);

            let err = grad_check_complex(
                |t: &mut Tape, leaf: NodeId| {
                    let signal = SignalNodes { s: leaf, theta: None };
                    Ok(build_experiment(t, &signal, 0.5, 2000.0, &region)?.root)
                },
                &s,
                eps,
            )?;
            push("experiment_lambda_0.5", err);

            let set = ScenarioSet {
                scenarios: vec![
                    Scenario {
                        spec: LossSpec::single(Metric::Psl, 1.0, TermParams::default()),
                        weight: 0.7,
                    },
                    Scenario {
                        spec: LossSpec::single(Metric::Isl, 1.0, TermParams::default()),
                        weight: 0.3,
                    },
                ],
            };
            let err = grad_check_complex(
                |t: &mut Tape, leaf: NodeId| {
                    let signal = SignalNodes { s: leaf, theta: None };
                    Ok(build_multi_scenario(t, &signal, &set)?.root)
                },
                &s,
                eps,
            )?;
            push("multi_scenario", err);

            // Composite over a phase leaf exercises the phase chain too.
            let theta = SplitMix64::new(seed.wrapping_add(31)).phases(n);
            let spec = LossSpec {
                terms: vec![
                    crate::losses::LossTerm {
                        metric: Metric::Psl,
                        weight: 1.0,
                        params: TermParams::default(),
                    },
                    crate::losses::LossTerm {
                        metric: Metric::PhaseSmoothness,
                        weight: 0.1,
                        params: TermParams::default(),
                    },
                ],
                gamma: 50.0,
                alpha: 2000.0,
                target: None,
            };
            let err = grad_check_real(
                |t: &mut Tape, leaf: NodeId| {
                    let sig = t.phase_to_signal(leaf)?;
                    let signal = SignalNodes {
                        s: sig,
                        theta: Some(leaf),
                    };
                    Ok(build_composite(t, &signal, &spec)?.root)
                },
                &theta,
                eps,
            )?;
            push("phase_composite", err);
        }
    }
    Ok(entries)
}
