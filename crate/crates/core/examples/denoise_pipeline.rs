// The full pipeline on a noisy graph: train, score, flag, relabel, retrain.

use deglif::denoise::{run_pipeline, DetectionMethod, PipelineConfig};
use deglif::gcn::GcnConfig;
use deglif::graph::{generate_sbm, SbmSpec, SplitSpec};
use deglif::influence::SolverSettings;
use deglif::noise::{build_transition, inject, NoiseModel, NoiseSpec};

pub fn run_example() {
    let spec = SbmSpec {
        split: SplitSpec {
            clean_fraction: 1.0,
            ..SplitSpec::default()
        },
        ..SbmSpec::default()
    };
    let g = generate_sbm(&spec, 2).expect("valid spec");
    let q = build_transition(&NoiseSpec {
        model: NoiseModel::Sln,
        level: 0.3,
        n_classes: g.n_classes(),
    })
    .expect("valid noise");
    let (g, ledger) = inject(&g, &q, 102).expect("inject");
    let model = GcnConfig {
        l2_reg: 0.05,
        learning_rate: 0.2,
        epochs: 1000,
        ..GcnConfig::for_graph(&g)
    };
    let mut cfg = PipelineConfig::new(model, DetectionMethod::Sum { mu: 0.0 }).seeded(2);
    cfg.solver = SolverSettings {
        damping: 0.05,
        ..SolverSettings::default()
    };
    let out = run_pipeline(&g, &cfg, Some(&ledger)).expect("pipeline");
    let m = &out.report.metrics;
    println!("flagged {} nodes", out.noisy.len());
    println!(
        "noise fraction {:.3} -> {:.3}",
        m.noise_frac_before.unwrap_or(f64::NAN),
        m.noise_frac_after.unwrap_or(f64::NAN)
    );
    println!(
        "test accuracy {:.3} -> {:.3}",
        m.model1_test_acc, m.model2_test_acc
    );
    for d in out.decisions.iter().take(5) {
        println!("node {}: {} -> {}", d.node, d.old, d.new);
    }
}

#[allow(dead_code)]
fn main() {
    run_example()
}
