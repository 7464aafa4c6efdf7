//! Statistical and desk-scale behavior of the optimizers: slower tests
//! that don't belong next to the unit tests but are far cheaper than the
//! full acceptance study.

use std::time::Instant;

use graf_core::losses::{psl_value, ExclusionRegion, LossKind};
use graf_core::optim::{
    initial_waveform, optimize_gradient, AdamConfig, GaConfig, GradientMode, RunStatus,
};
use graf_core::sweep::{run_sweep, SweepConfig};
use graf_core::ambiguity::{ambiguity, AmbiguityOpts};

#[test]
fn gradient_beats_its_initialization_on_psl() {
    // lambda = 0, N = 64, 200 iterations from random phases: the final
    // full-plane PSL must beat the initial PSL in at least 95 of 100 runs.
    let region = ExclusionRegion::default();
    let loss = LossKind::experiment(0.0, 2000.0, region);
    let mut improved = 0;
    for seed in 0..100u64 {
        let initial = initial_waveform(64, seed);
        let initial_psl = psl_value(
            &ambiguity(&initial, AmbiguityOpts::default()).unwrap(),
            &region,
        )
        .unwrap();
        let cfg = AdamConfig {
            iterations: 200,
            seed,
            ..AdamConfig::default()
        };
        let record = optimize_gradient(&initial, &loss, &cfg, GradientMode::PhaseParam).unwrap();
        assert_eq!(record.status, RunStatus::Ok, "seed {seed}");
        if record.final_metrics.psl_linear < initial_psl {
            improved += 1;
        }
    }
    assert!(improved >= 95, "only {improved}/100 runs improved PSL");
}

#[test]
fn desk_scale_sweep_finishes_quickly_and_emits_everything() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let cfg = SweepConfig {
        n: 64,
        lambdas: vec![0.0],
        seeds: vec![1],
        adam: AdamConfig {
            iterations: 200,
            ..AdamConfig::default()
        },
        ga: GaConfig {
            population: 50,
            generations: 30,
            ..GaConfig::default()
        },
        output_dir: dir.path().to_path_buf(),
        ..SweepConfig::default()
    };
    let report = run_sweep(&cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "desk-scale sweep took {elapsed:.1} s");
    assert_eq!(report.records.len(), 2);
    assert_eq!(report.summary.per_lambda.len(), 1);
    for file in [
        "runs/gradient_0_1.csv",
        "runs/gradient_0_1.json",
        "runs/ga_0_1.csv",
        "runs/ga_0_1.json",
        "pareto.csv",
        "summary.json",
        "spectra/0.csv",
    ] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
    let ga = report
        .records
        .iter()
        .find(|r| r.method == graf_core::optim::Method::Ga)
        .unwrap();
    assert_eq!(ga.eval_count, 1500);
}
