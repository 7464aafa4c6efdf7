//! The lambda-sweep study: gradient vs GA at each trade-off weight, with
//! plot-ready CSV/JSON outputs (per-run traces and records, Pareto points,
//! per-lambda medians, spectra).

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use crate::ambiguity::Waveform;
use crate::error::{Error, Result};
use crate::io;
use crate::losses::{ExclusionRegion, LossKind, DEFAULT_ALPHA};
use crate::optim::{
    initial_waveform, optimize_ga, optimize_gradient, AdamConfig, GaConfig, GradientMode, Method,
    RunRecord, RunStatus,
};

fn default_n() -> usize {
    256
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0, 2.0]
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("sweep_out")
}

/// Full study configuration; JSON field names mirror this struct exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub exclusion: ExclusionRegion,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Run the (lambda, seed) grid on a thread pool. Off by default so
    /// wall-clock comparisons stay uncontaminated; results are identical
    /// either way.
    #[serde(default)]
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n: default_n(),
            lambdas: default_lambdas(),
            alpha: default_alpha(),
            seeds: default_seeds(),
            adam: AdamConfig::default(),
            ga: GaConfig::default(),
            exclusion: ExclusionRegion::default(),
            output_dir: default_output_dir(),
            parallel: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::invalid("sweep requires N >= 8"));
        }
        if self.lambdas.is_empty() {
            return Err(Error::invalid("lambda list must be non-empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seed list must be non-empty"));
        }
        if self.alpha <= 0.0 {
            return Err(Error::invalid("alpha must be positive"));
        }
        self.adam.validate()?;
        self.ga.validate()
    }
}

/// One solution's coordinates in objective space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub lambda: f64,
    pub method: Method,
    pub psl_linear: f64,
    pub psl_db: f64,
    pub spectral_variance: f64,
    pub combined_loss: f64,
    pub time_s: f64,
    pub seed: u64,
}

fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.psl_linear <= b.psl_linear
        && a.spectral_variance <= b.spectral_variance
        && (a.psl_linear < b.psl_linear || a.spectral_variance < b.spectral_variance)
}

/// Nondominated subset on (psl_linear, spectral_variance), lower better on
/// both. Output order follows input order; the set itself is order-invariant.
pub fn pareto_filter(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect()
}

/// Median; even-length inputs average the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in medians"));
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub psl_db: f64,
    pub spectral_variance: f64,
    pub time_s: f64,
    pub combined_loss: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub gradient: MethodStats,
    pub ga: MethodStats,
    /// Median GA wall time over median gradient wall time.
    pub speedup: f64,
    /// Median GA PSL (dB) minus median gradient PSL (dB); positive when the
    /// gradient method is better.
    pub psl_improvement_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub n: usize,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    pub gradient_evals_per_run: u64,
    pub ga_evals_per_run: u64,
    pub per_lambda: Vec<LambdaSummary>,
}

/// Everything a sweep produced, already written to disk.
#[derive(Debug)]
pub struct SweepReport {
    pub records: Vec<RunRecord>,
    pub points: Vec<ParetoPoint>,
    pub summary: SweepSummary,
    pub output_dir: PathBuf,
}

fn lambda_tag(lambda: f64) -> String {
    format!("{lambda}")
}

fn run_one(cfg: &SweepConfig, lambda: f64, seed: u64, method: Method) -> RunRecord {
    let loss = LossKind::experiment(lambda, cfg.alpha, cfg.exclusion);
    let outcome = match method {
        Method::Gradient => {
            let adam = AdamConfig { seed, ..cfg.adam };
            let initial = initial_waveform(cfg.n, seed);
            optimize_gradient(&initial, &loss, &adam, GradientMode::PhaseParam)
        }
        Method::Ga => {
            let ga = GaConfig { seed, ..cfg.ga };
            optimize_ga(&loss, &ga, cfg.n)
        }
    };
    outcome.unwrap_or_else(|err| {
        // A failed run is recorded, not fatal to the sweep.
        eprintln!("run {method} lambda={lambda} seed={seed} failed: {err}");
        failed_record(cfg, lambda, seed, method)
    })
}

fn failed_record(cfg: &SweepConfig, lambda: f64, seed: u64, method: Method) -> RunRecord {
    RunRecord {
        method,
        n: cfg.n,
        seed,
        loss: LossKind::experiment(lambda, cfg.alpha, cfg.exclusion),
        adam: (method == Method::Gradient).then_some(AdamConfig { seed, ..cfg.adam }),
        mode: (method == Method::Gradient).then_some(GradientMode::PhaseParam),
        ga: (method == Method::Ga).then_some(GaConfig { seed, ..cfg.ga }),
        trace: Vec::new(),
        eval_count: 0,
        final_waveform: crate::optim::WaveformData {
            re: Vec::new(),
            im: Vec::new(),
            phases: None,
        },
        final_metrics: crate::optim::FinalMetrics {
            loss: f64::NAN,
            psl_linear: f64::NAN,
            psl_db: f64::NAN,
            spectral_variance: f64::NAN,
        },
        status: RunStatus::Failed,
        time_s: 0.0,
    }
}

fn record_lambda(record: &RunRecord) -> f64 {
    match &record.loss {
        LossKind::Experiment { lambda, .. } => *lambda,
        _ => f64::NAN,
    }
}

/// Runs the full (lambda x seed x method) grid, writes all artifacts under
/// `cfg.output_dir`, and returns the in-memory report.
///
/// Layout: `runs/<method>_<lambda>_<seed>.{csv,json}`, `pareto.csv`,
/// `summary.json`, `spectra/<lambda>.csv`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let runs_dir = out.join("runs");
    let spectra_dir = out.join("spectra");
    std::fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    std::fs::create_dir_all(&spectra_dir).map_err(|e| Error::io(&spectra_dir, e))?;

    // The job grid, in deterministic order.
    let mut jobs = Vec::new();
    for &lambda in &cfg.lambdas {
        for &seed in &cfg.seeds {
            jobs.push((lambda, seed, Method::Gradient));
            jobs.push((lambda, seed, Method::Ga));
        }
    }

    let mut records: Vec<Option<RunRecord>> = (0..jobs.len()).map(|_| None).collect();
    if cfg.parallel {
        let workers = std::thread::available_parallelism()
            .map(|p| p.get())
            .unwrap_or(1)
            .min(jobs.len().max(1));
        let (tx, rx) = mpsc::channel();
        std::thread::scope(|scope| {
            for worker in 0..workers {
                let tx = tx.clone();
                let jobs = &jobs;
                scope.spawn(move || {
                    for idx in (worker..jobs.len()).step_by(workers) {
                        let (lambda, seed, method) = jobs[idx];
                        let record = run_one(cfg, lambda, seed, method);
                        tx.send((idx, record)).expect("collector alive");
                    }
                });
            }
            drop(tx);
            for (idx, record) in rx {
                records[idx] = Some(record);
            }
        });
    } else {
        for (idx, &(lambda, seed, method)) in jobs.iter().enumerate() {
            records[idx] = Some(run_one(cfg, lambda, seed, method));
        }
    }
    let records: Vec<RunRecord> = records.into_iter().map(|r| r.expect("job ran")).collect();

    // Per-run artifacts.
    for record in &records {
        let stem = format!(
            "{}_{}_{}",
            record.method,
            lambda_tag(record_lambda(record)),
            record.seed
        );
        io::write_trace_csv(&runs_dir.join(format!("{stem}.csv")), &record.trace)?;
        io::write_json(&runs_dir.join(format!("{stem}.json")), record)?;
    }

    // Pareto points from successful runs.
    let points: Vec<ParetoPoint> = records
        .iter()
        .filter(|r| r.status == RunStatus::Ok)
        .map(|r| ParetoPoint {
            lambda: record_lambda(r),
            method: r.method,
            psl_linear: r.final_metrics.psl_linear,
            psl_db: r.final_metrics.psl_db,
            spectral_variance: r.final_metrics.spectral_variance,
            combined_loss: r.final_metrics.loss,
            time_s: r.time_s,
            seed: r.seed,
        })
        .collect();
    write_pareto_csv(&out.join("pareto.csv"), &points)?;

    // Per-lambda medians.
    let mut per_lambda = Vec::new();
    for &lambda in &cfg.lambdas {
        let stats = |method: Method| -> MethodStats {
            let sel: Vec<&ParetoPoint> = points
                .iter()
                .filter(|p| p.lambda == lambda && p.method == method)
                .collect();
            let of = |f: fn(&ParetoPoint) -> f64| {
                median(&sel.iter().map(|p| f(p)).collect::<Vec<_>>()).unwrap_or(f64::NAN)
            };
            MethodStats {
                psl_db: of(|p| p.psl_db),
                spectral_variance: of(|p| p.spectral_variance),
                time_s: of(|p| p.time_s),
                combined_loss: of(|p| p.combined_loss),
                runs: sel.len(),
            }
        };
        let gradient = stats(Method::Gradient);
        let ga = stats(Method::Ga);
        per_lambda.push(LambdaSummary {
            lambda,
            gradient,
            ga,
            speedup: ga.time_s / gradient.time_s,
            psl_improvement_db: ga.psl_db - gradient.psl_db,
        });
    }

    let summary = SweepSummary {
        n: cfg.n,
        alpha: cfg.alpha,
        seeds: cfg.seeds.clone(),
        gradient_evals_per_run: cfg.adam.iterations as u64,
        ga_evals_per_run: (cfg.ga.population * cfg.ga.generations) as u64,
        per_lambda,
    };
    io::write_json(&out.join("summary.json"), &summary)?;

    // Spectrum of the median gradient run (by combined loss) per lambda.
    for &lambda in &cfg.lambdas {
        let mut grads: Vec<&RunRecord> = records
            .iter()
            .filter(|r| {
                r.method == Method::Gradient
                    && r.status == RunStatus::Ok
                    && record_lambda(r) == lambda
            })
            .collect();
        if grads.is_empty() {
            continue;
        }
        grads.sort_by(|a, b| {
            a.final_metrics
                .loss
                .partial_cmp(&b.final_metrics.loss)
                .expect("finite losses")
                .then(a.seed.cmp(&b.seed))
        });
        let median_run = grads[(grads.len() - 1) / 2];
        let wave = median_run.final_waveform.to_waveform();
        emit_spectrum(
            &wave,
            &spectra_dir.join(format!("{}.csv", lambda_tag(lambda))),
        )?;
    }

    Ok(SweepReport {
        records,
        points,
        summary,
        output_dir: out.clone(),
    })
}

/// Normalized power spectrum as `bin,power` rows.
pub fn emit_spectrum(w: &Waveform, path: &Path) -> Result<()> {
    io::write_spectrum_csv(path, w)
}

pub const PARETO_HEADER: &str =
    "lambda,method,psl_linear,psl_db,spectral_variance,combined_loss,time_s,seed,nondominated";

fn write_pareto_csv(path: &Path, points: &[ParetoPoint]) -> Result<()> {
    let frontier = pareto_filter(points);
    let mut text = String::from(PARETO_HEADER);
    text.push('\n');
    for p in points {
        let nondominated = frontier.contains(p);
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            io::fmt_f64(p.lambda),
            p.method,
            io::fmt_f64(p.psl_linear),
            io::fmt_f64(p.psl_db),
            io::fmt_f64(p.spectral_variance),
            io::fmt_f64(p.combined_loss),
            io::fmt_f64(p.time_s),
            p.seed,
            nondominated as u8
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
