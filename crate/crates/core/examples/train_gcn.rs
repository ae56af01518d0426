// Train the two-layer GCN on a clean graph and report accuracy.

use deglif::gcn::{predict, train, GcnConfig, GcnInput};
use deglif::graph::{generate_sbm, SbmSpec};

pub fn run_example() {
    let g = generate_sbm(&SbmSpec::default(), 3).expect("valid spec");
    let cfg = GcnConfig {
        l2_reg: 0.05,
        learning_rate: 0.2,
        epochs: 600,
        ..GcnConfig::for_graph(&g)
    };
    let trained = train(&g, &cfg).expect("training");
    let pred = predict(&GcnInput::from_graph(&g), cfg.shape(), &trained.params).expect("predict");
    let first = trained.history.first().copied().unwrap_or(f64::NAN);
    let last = trained.history.last().copied().unwrap_or(f64::NAN);
    println!(
        "{} parameters; training risk {first:.4} -> {last:.4}; test accuracy {:.3}",
        cfg.shape().n_params(),
        pred.accuracy(g.labels(), &g.masks().test)
    );
    assert!(last < first);
}

#[allow(dead_code)]
fn main() {
    run_example()
}
