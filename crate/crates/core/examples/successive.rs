// Apply the pipeline several times, feeding each repaired graph into the
// next pass.

use deglif::denoise::{successive, DetectionMethod, PipelineConfig};
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
    let g = generate_sbm(&spec, 3).expect("valid spec");
    let q = build_transition(&NoiseSpec {
        model: NoiseModel::Sln,
        level: 0.3,
        n_classes: g.n_classes(),
    })
    .expect("valid noise");
    let (g, ledger) = inject(&g, &q, 103).expect("inject");
    let model = GcnConfig {
        l2_reg: 0.05,
        learning_rate: 0.2,
        epochs: 1000,
        ..GcnConfig::for_graph(&g)
    };
    let mut cfg = PipelineConfig::new(model, DetectionMethod::Sum { mu: 0.0 }).seeded(3);
    cfg.solver = SolverSettings {
        damping: 0.05,
        ..SolverSettings::default()
    };
    println!("count 0: noise fraction {:.3}", ledger.noise_fraction(&g));
    for r in successive(&g, &cfg, &ledger, 3).expect("successive") {
        println!(
            "count {}: noise fraction {:.3}, {} flagged, test accuracy {:.3}",
            r.count, r.noise_fraction, r.n_flagged, r.test_acc
        );
    }
}

#[allow(dead_code)]
fn main() {
    run_example()
}
