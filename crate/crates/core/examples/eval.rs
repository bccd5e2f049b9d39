//! AUC under the attack suite, mean ± std over attack seeds.

use spinshield::harness::{evaluate_under_attacks, init_thread_pool, train, AttackSuite, TrainConfig};
use spinshield::synth::{generate_dataset, DatasetSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    init_thread_pool();
    let clips = generate_dataset(&DatasetSpec::default())?;
    let cfg = TrainConfig::default();
    let (out, split) = train(&cfg, &clips)?;
    let test: Vec<_> = split.test.iter().map(|&i| &clips[i]).collect();
    let report = evaluate_under_attacks(&out.bundle, &test, &AttackSuite::default(), serde_json::to_value(&cfg)?)?;
    println!("clean  {:.4}", report.clean_auc);
    for s in &report.summary {
        println!("{:<6} {:.4} ± {:.4}", s.kind.name(), s.mean, s.std);
    }
    println!("first band spec: {}", serde_json::to_string(&report.runs[0].specs[0])?);
    Ok(())
}
