// Generate a stochastic block model graph, write it in the on-disk format
// and load it back.

use deglif::graph::{generate_sbm, load_graph, write_graph, SbmSpec, SplitSpec};

pub fn run_example() {
    let spec = SbmSpec {
        n_per_class: 20,
        n_classes: 3,
        p_in: 0.2,
        p_out: 0.02,
        feature_dim: 8,
        feature_noise_sigma: 0.5,
        split: SplitSpec::default(),
    };
    let g = generate_sbm(&spec, 7).expect("valid spec");
    let dir = tempfile::tempdir().expect("temp dir");
    write_graph(&g, dir.path()).expect("write");
    let back = load_graph(dir.path()).expect("load");
    assert_eq!(back.labels(), g.labels());
    assert_eq!(back.edges(), g.edges());
    let m = g.masks();
    println!(
        "{} nodes, {} edges, {} classes; train {} / validation {} / test {} / clean {}",
        g.n_nodes(),
        g.edges().len(),
        g.n_classes(),
        m.train.len(),
        m.validation.len(),
        m.test.len(),
        m.clean.len()
    );
}

#[allow(dead_code)]
fn main() {
    run_example()
}
