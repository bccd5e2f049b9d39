//! Clean versus perturbed encoder features: mean distance between the two
//! views for each perturbation.

use spinshield::attacks::AttackKind;
use spinshield::harness::features::mean_view_gap;
use spinshield::harness::{dump_features, init_thread_pool, train, EnvView, TrainConfig};
use spinshield::synth::{generate_dataset, DatasetSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    init_thread_pool();
    let clips = generate_dataset(&DatasetSpec::default())?;
    let (out, split) = train(
        &TrainConfig::default(),
        &clips,
    )?;
    let test: Vec<_> = split.test.iter().map(|&i| &clips[i]).collect();
    let mut views = vec![EnvView::Lsa];
    views.extend(AttackKind::SUITE.map(|kind| EnvView::Attack { kind, seed: 0 }));
    for view in views {
        let rows = dump_features(&out.bundle, &test, view)?;
        println!("{:<40} rows {:>4}  gap {:.4}", serde_json::to_string(&view)?, rows.len(), mean_view_gap(&rows));
    }
    Ok(())
}
