// Compare influence estimates with actual leave-one-out retraining on a
// small graph.

use deglif::gcn::GcnConfig;
use deglif::graph::{generate_sbm, SbmSpec, SplitSpec};
use deglif::influence::SolverSettings;
use deglif::oracle::leave_one_out;

pub fn run_example() {
    let spec = SbmSpec {
        n_per_class: 8,
        p_in: 0.3,
        p_out: 0.05,
        feature_dim: 6,
        split: SplitSpec {
            clean_fraction: 1.0,
            ..SplitSpec::default()
        },
        ..SbmSpec::default()
    };
    let g = generate_sbm(&spec, 4).expect("valid spec");
    let cfg = GcnConfig {
        l2_reg: 0.05,
        learning_rate: 0.2,
        epochs: 1000,
        ..GcnConfig::for_graph(&g)
    };
    let solver = SolverSettings {
        damping: 0.05,
        ..SolverSettings::default()
    };
    let loo = leave_one_out(&g, &cfg, solver).expect("oracle");
    println!(
        "{} nodes retrained: sign agreement {:.3}, Spearman {:.3}",
        loo.report.n_nodes, loo.report.sign_agreement, loo.report.spearman
    );
    for ((z, p), d) in loo.nodes.iter().zip(&loo.predictions).zip(&loo.deltas).take(5) {
        println!("node {z:2}: predicted {p:+.5}, retrained {d:+.5}");
    }
}

#[allow(dead_code)]
fn main() {
    run_example()
}
