// Corrupt training labels with symmetric and pairwise noise and inspect the
// corruption ledger.

use deglif::graph::{generate_sbm, SbmSpec};
use deglif::noise::{build_transition, inject, NoiseModel, NoiseSpec};

pub fn run_example() {
    let g = generate_sbm(&SbmSpec::default(), 1).expect("valid spec");
    for model in [NoiseModel::Sln, NoiseModel::Pairwise] {
        let q = build_transition(&NoiseSpec {
            model,
            level: 0.3,
            n_classes: g.n_classes(),
        })
        .expect("valid noise");
        let (noisy, ledger) = inject(&g, &q, 11).expect("inject");
        assert_eq!(ledger.records.len(), g.masks().train.len());
        // Only training labels are ever touched.
        for &i in g.masks().validation.iter().chain(&g.masks().test) {
            assert_eq!(noisy.labels()[i], g.labels()[i]);
        }
        println!(
            "{model:?}: {} of {} training labels flipped (noise fraction {:.3})",
            ledger.n_flipped(),
            ledger.records.len(),
            ledger.noise_fraction(&noisy)
        );
    }
}

#[allow(dead_code)]
fn main() {
    run_example()
}
