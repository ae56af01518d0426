// Estimate how removing each training node would change each clean node's
// loss, and list the nodes predicted to be most harmful.

use deglif::gcn::{train, GcnConfig};
use deglif::graph::{generate_sbm, SbmSpec, SplitSpec};
use deglif::influence::{InfluenceContext, SolverSettings};
use deglif::noise::{build_transition, inject, NoiseModel, NoiseSpec};

pub fn run_example() {
    let spec = SbmSpec {
        n_per_class: 15,
        split: SplitSpec {
            clean_fraction: 1.0,
            ..SplitSpec::default()
        },
        ..SbmSpec::default()
    };
    let g = generate_sbm(&spec, 5).expect("valid spec");
    let q = build_transition(&NoiseSpec {
        model: NoiseModel::Sln,
        level: 0.3,
        n_classes: g.n_classes(),
    })
    .expect("valid noise");
    let (g, ledger) = inject(&g, &q, 5).expect("inject");
    let cfg = GcnConfig {
        l2_reg: 0.05,
        learning_rate: 0.2,
        epochs: 1000,
        ..GcnConfig::for_graph(&g)
    };
    let theta = train(&g, &cfg).expect("training").params;
    let solver = SolverSettings {
        damping: 0.05,
        ..SolverSettings::default()
    };
    let ctx = InfluenceContext::new(&g, &cfg, theta, solver).expect("context");
    let (table, solves) = ctx.compute_table().expect("table");
    assert!(solves.all_converged());
    let mut rows: Vec<usize> = (0..table.train_nodes.len()).collect();
    rows.sort_by(|&a, &b| table.icv[b].total_cmp(&table.icv[a]));
    println!("{} training × {} clean influences", table.train_nodes.len(), table.n_clean());
    for &r in rows.iter().take(5) {
        let z = table.train_nodes[r];
        let flipped = ledger.original_label(z) != Some(g.labels()[z]);
        println!(
            "node {z:3}: summed influence {:+.4}, harms {} of {} clean nodes, label flipped: {flipped}",
            table.icv[r],
            table.negative_count(r),
            table.n_clean()
        );
    }
}

#[allow(dead_code)]
fn main() {
    run_example()
}
