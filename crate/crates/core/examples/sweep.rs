// Pick the majority-vote fraction by validation accuracy over a few noisy
// trials.

use deglif::denoise::{sweep, DetectionMethod, PipelineConfig, Trial};
use deglif::gcn::GcnConfig;
use deglif::graph::{generate_sbm, SbmSpec, SplitSpec};
use deglif::influence::SolverSettings;
use deglif::noise::{build_transition, inject, NoiseModel, NoiseSpec};

pub fn run_example() {
    let spec = SbmSpec {
        n_per_class: 20,
        split: SplitSpec {
            clean_fraction: 1.0,
            ..SplitSpec::default()
        },
        ..SbmSpec::default()
    };
    let trials: Vec<Trial> = (1..=2)
        .map(|seed| {
            let g = generate_sbm(&spec, seed).expect("valid spec");
            let q = build_transition(&NoiseSpec {
                model: NoiseModel::Pairwise,
                level: 0.3,
                n_classes: g.n_classes(),
            })
            .expect("valid noise");
            let (graph, ledger) = inject(&g, &q, seed + 100).expect("inject");
            Trial {
                seed,
                graph,
                ledger: Some(ledger),
            }
        })
        .collect();
    let model = GcnConfig {
        l2_reg: 0.05,
        learning_rate: 0.2,
        epochs: 600,
        ..GcnConfig::for_graph(&trials[0].graph)
    };
    let mut base = PipelineConfig::new(model, DetectionMethod::Mv { lambda: 0.5 });
    base.solver = SolverSettings {
        damping: 0.05,
        ..SolverSettings::default()
    };
    let result = sweep(&trials, &base, &[0.5, 0.6, 0.7, 0.8, 0.9]).expect("sweep");
    for s in &result.summary {
        println!(
            "lambda {:.1}: validation {:.3}, test {:.3} ± {:.3}, {:.1} flagged",
            s.value, s.mean_val_acc, s.mean_test_acc, s.std_test_acc, s.mean_flagged
        );
    }
    println!("selected lambda = {}", result.selected);
}

#[allow(dead_code)]
fn main() {
    run_example()
}
