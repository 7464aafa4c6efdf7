//! `graf` command line: surface export, single optimization runs, the full
//! lambda-sweep study, and validation suites.
//!
//! Exit codes: 0 success, 1 validation/runtime failure, 2 usage error.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use graf_core::ambiguity::{ambiguity, ambiguity_oracle, AmbiguityOpts, Waveform};
use graf_core::error::Result;
use graf_core::gradcheck::{grad_check_complex, standard_suite};
use graf_core::io;
use graf_core::losses::{psl_value, spectral_variance_value, ExclusionRegion, LossKind};
use graf_core::optim::rng::SplitMix64;
use graf_core::optim::{
    initial_waveform, optimize_ga, optimize_gradient, AdamConfig, GaConfig, GradientMode,
    RunRecord,
};
use graf_core::sweep::{run_sweep, SweepConfig};
use graf_core::tape::{NodeId, Tape};

#[derive(Parser)]
#[command(
    name = "graf",
    version,
    about = "Differentiable ambiguity functions and radar waveform optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for waveform initialization and stochastic optimizers.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// JSON config file (sweep: SweepConfig; optimize/ga: LossKind).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for output files.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Waveform length.
    #[arg(long, global = true)]
    n: Option<usize>,

    /// LPI trade-off weight of the experiment loss.
    #[arg(long, global = true)]
    lambda: Option<f64>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Phase,
    Projected,
}

impl From<ModeArg> for GradientMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Phase => GradientMode::PhaseParam,
            ModeArg::Projected => GradientMode::ProjectedComplex,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute an ambiguity surface from a waveform CSV and export it.
    Ambiguity {
        /// Input waveform CSV (`re,im` per line).
        #[arg(long)]
        input: PathBuf,
        /// Output surface CSV (default `chi.csv` in the output dir).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Center zero delay/Doppler.
        #[arg(long)]
        shifted: bool,
        /// Divide by the surface maximum.
        #[arg(long)]
        normalize: bool,
    },
    /// One gradient-based optimization run (Adam).
    Optimize {
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, value_enum, default_value = "phase")]
        mode: ModeArg,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// One genetic-algorithm run.
    Ga {
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// The full lambda-sweep study (gradient vs GA).
    Sweep {
        /// Run the (lambda, seed) grid on a thread pool; timing comparisons
        /// should use the sequential default.
        #[arg(long)]
        parallel: bool,
    },
    /// Finite-difference validation of all tape gradients.
    Gradcheck {
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Oracle and invariant self-test.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let out_dir = cli.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::Ambiguity {
            input,
            output,
            shifted,
            normalize,
        } => {
            let wave = io::read_waveform_csv(input)?;
            let surface = ambiguity(
                &wave,
                AmbiguityOpts {
                    shifted: *shifted,
                    normalize: *normalize,
                },
            )?;
            let path = output.clone().unwrap_or_else(|| out_dir.join("chi.csv"));
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .map_err(|e| graf_core::Error::io(parent, e))?;
                }
            }
            io::write_surface_csv(&path, &surface)?;
            if !cli.quiet {
                println!(
                    "wrote {} ({}x{}, {:?} layout)",
                    path.display(),
                    surface.n(),
                    surface.n(),
                    surface.layout
                );
            }
            Ok(true)
        }

        Command::Optimize {
            iterations,
            lr,
            mode,
            alpha,
        } => {
            let n = cli.n.unwrap_or(256);
            let seed = cli.seed.unwrap_or(0);
            let lambda = cli.lambda.unwrap_or(0.5);
            let loss = load_loss(cli, lambda, alpha.unwrap_or(2000.0))?;
            let cfg = AdamConfig {
                iterations: iterations.unwrap_or(2000),
                lr: lr.unwrap_or(0.01),
                seed,
                ..AdamConfig::default()
            };
            let initial = initial_waveform(n, seed);
            let record = optimize_gradient(&initial, &loss, &cfg, (*mode).into())?;
            emit_record(cli, &out_dir, &record, lambda)?;
            Ok(record.status == graf_core::optim::RunStatus::Ok)
        }

        Command::Ga {
            population,
            generations,
            alpha,
        } => {
            let n = cli.n.unwrap_or(256);
            let seed = cli.seed.unwrap_or(0);
            let lambda = cli.lambda.unwrap_or(0.5);
            let loss = load_loss(cli, lambda, alpha.unwrap_or(2000.0))?;
            let cfg = GaConfig {
                population: population.unwrap_or(50),
                generations: generations.unwrap_or(300),
                seed,
                ..GaConfig::default()
            };
            let record = optimize_ga(&loss, &cfg, n)?;
            emit_record(cli, &out_dir, &record, lambda)?;
            Ok(record.status == graf_core::optim::RunStatus::Ok)
        }

        Command::Sweep { parallel } => {
            let mut cfg: SweepConfig = match &cli.config {
                Some(path) => io::read_json(path)?,
                None => SweepConfig::default(),
            };
            if let Some(n) = cli.n {
                cfg.n = n;
            }
            if let Some(seed) = cli.seed {
                cfg.seeds = vec![seed];
            }
            if let Some(lambda) = cli.lambda {
                cfg.lambdas = vec![lambda];
            }
            if cli.output_dir.is_some() {
                cfg.output_dir = out_dir.clone();
            }
            if *parallel {
                cfg.parallel = true;
            }
            let report = run_sweep(&cfg)?;
            if !cli.quiet {
                println!(
                    "sweep complete: {} runs in {}",
                    report.records.len(),
                    report.output_dir.display()
                );
                for row in &report.summary.per_lambda {
                    println!(
                        "lambda {:>5}: gradient {:7.2} dB vs GA {:7.2} dB ({:+.2} dB), speedup {:.2}x",
                        row.lambda,
                        row.gradient.psl_db,
                        row.ga.psl_db,
                        row.psl_improvement_db,
                        row.speedup
                    );
                }
            }
            Ok(true)
        }

        Command::Gradcheck { json } => {
            let n = cli.n.unwrap_or(16);
            let seed = cli.seed.unwrap_or(1);
            let entries = standard_suite(&[n], &[seed], 1e-5)?;
            let worst = entries
                .iter()
                .map(|e| e.max_rel_err)
                .fold(0.0f64, f64::max);
            let passed = worst <= 1e-5;
            let report = serde_json::json!({
                "n": n,
                "seed": seed,
                "eps": 1e-5,
                "tolerance": 1e-5,
                "worst_rel_err": worst,
                "passed": passed,
                "entries": entries,
            });
            match json {
                Some(path) => io::write_json(path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            if !cli.quiet {
                eprintln!(
                    "gradcheck: {} checks, worst rel err {worst:.3e} -> {}",
                    entries.len(),
                    if passed { "pass" } else { "FAIL" }
                );
            }
            Ok(passed)
        }

        Command::Selftest => selftest(cli),
    }
}

/// Loss from --config when given, otherwise the experiment loss at the
/// requested lambda.
fn load_loss(cli: &Cli, lambda: f64, alpha: f64) -> Result<LossKind> {
    match &cli.config {
        Some(path) => io::read_json(path),
        None => Ok(LossKind::experiment(
            lambda,
            alpha,
            ExclusionRegion::default(),
        )),
    }
}

fn emit_record(cli: &Cli, out_dir: &PathBuf, record: &RunRecord, lambda: f64) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| graf_core::Error::io(out_dir, e))?;
    let stem = format!("{}_{}_{}", record.method, lambda, record.seed);
    io::write_trace_csv(&out_dir.join(format!("{stem}.csv")), &record.trace)?;
    io::write_json(&out_dir.join(format!("{stem}.json")), record)?;
    if !cli.quiet {
        println!(
            "{}: loss {:.6}, PSL {:.2} dB, spectral variance {:.3e}, {:.1} s, {} evals -> {stem}.json",
            record.method,
            record.final_metrics.loss,
            record.final_metrics.psl_db,
            record.final_metrics.spectral_variance,
            record.time_s,
            record.eval_count
        );
    }
    Ok(())
}

fn selftest(cli: &Cli) -> Result<bool> {
    let mut passed = 0usize;
    let mut failed = 0usize;
    let mut check = |name: &str, ok: bool| {
        if ok {
            passed += 1;
        } else {
            failed += 1;
        }
        if !cli.quiet || !ok {
            println!("{}  {name}", if ok { "PASS" } else { "FAIL" });
        }
    };

    // FFT round trip and Parseval.
    {
        let mut rng = SplitMix64::new(101);
        let mut ok_rt = true;
        let mut ok_pv = true;
        for &n in &[2usize, 3, 5, 8, 16, 64] {
            let x: Vec<_> = (0..n)
                .map(|_| {
                    num_complex::Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))
                })
                .collect();
            let spec = graf_core::fft::fft(&x)?;
            let back = graf_core::fft::ifft(&spec)?;
            let err = x
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            ok_rt &= err <= 1e-12;
            let lhs: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
            let rhs = n as f64 * x.iter().map(|z| z.norm_sqr()).sum::<f64>();
            ok_pv &= (lhs - rhs).abs() <= 1e-12 * rhs.max(1.0);
        }
        check("fft round trip <= 1e-12", ok_rt);
        check("Parseval identity <= 1e-12", ok_pv);
    }

    // Oracle equivalence for assorted N, including non-powers-of-two.
    {
        let mut rng = SplitMix64::new(103);
        let mut ok = true;
        for &n in &[2usize, 3, 4, 5, 8, 13, 16] {
            for _ in 0..5 {
                let w = Waveform::random_phases(n, &mut rng);
                let fast = ambiguity(&w, AmbiguityOpts::default())?;
                let slow = ambiguity_oracle(&w)?;
                let scale = slow.chi.as_slice().iter().cloned().fold(1.0, f64::max);
                let diff = fast
                    .chi
                    .as_slice()
                    .iter()
                    .zip(slow.chi.as_slice())
                    .map(|(a, b)| (a - b).abs() / scale)
                    .fold(0.0, f64::max);
                ok &= diff <= 1e-10;
            }
        }
        check("ambiguity oracle equivalence <= 1e-10", ok);
    }

    // Surface invariants: volume, origin peak, point symmetry.
    {
        let mut rng = SplitMix64::new(107);
        let mut ok_vol = true;
        let mut ok_peak = true;
        let mut ok_sym = true;
        for &n in &[4usize, 8, 16, 32] {
            let w = Waveform::random_phases(n, &mut rng);
            let surf = ambiguity(&w, AmbiguityOpts::default())?;
            let e = w.energy();
            let total: f64 = surf.chi.as_slice().iter().sum();
            ok_vol &= (total - n as f64 * e * e).abs() <= 1e-10 * n as f64 * e * e;
            let peak = surf.chi[(0, 0)];
            ok_peak &= (peak - e * e).abs() <= 1e-12 * e * e
                && surf.chi.as_slice().iter().all(|&v| v <= peak * (1.0 + 1e-12));
            for k in 0..n {
                for m in 0..n {
                    let mirrored = surf.chi[((n - k) % n, (n - m) % n)];
                    ok_sym &= (surf.chi[(k, m)] - mirrored).abs() <= 1e-10 * peak;
                }
            }
        }
        check("volume identity <= 1e-10", ok_vol);
        check("origin peak", ok_peak);
        check("point symmetry <= 1e-10", ok_sym);
    }

    // Quick gradient checks.
    {
        let mut rng = SplitMix64::new(109);
        let s: Vec<_> = (0..8)
            .map(|_| num_complex::Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
            .collect();
        let err = grad_check_complex(
            |t: &mut Tape, leaf: NodeId| {
                let chi = graf_core::ambiguity::ambiguity_node(t, leaf, false)?;
                t.sum(chi)
            },
            &s,
            1e-5,
        )?;
        check("surface-sum gradient <= 1e-5", err <= 1e-5);

        let entries = standard_suite(&[8], &[7], 1e-5)?;
        let worst = entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max);
        check("loss gradient suite <= 1e-5", worst <= 1e-5);
    }

    // RNG reference vector.
    {
        let mut rng = SplitMix64::new(1234567);
        check(
            "rng reference vector",
            rng.next_u64() == 6457827717110365317,
        );
    }

    // Eager metric sanity on Barker-13.
    {
        let w = graf_core::ambiguity::barker13();
        let surf = ambiguity(&w, AmbiguityOpts::default())?;
        let psl = psl_value(&surf, &ExclusionRegion { g_k: 1, g_m: 1 })?;
        let sv = spectral_variance_value(&w)?;
        check("barker-13 metrics finite", psl.is_finite() && sv.is_finite());
    }

    println!("selftest: {passed} passed, {failed} failed");
    Ok(failed == 0)
}
