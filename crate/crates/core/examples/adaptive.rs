//! White-box amplitude-modulation attack at budget ln 2 against a baseline
//! and a spinshield model.

use spinshield::harness::{adaptive_auc, init_thread_pool, train, AdaptiveConfig, Mode, TrainConfig};
use spinshield::synth::{generate_dataset, DatasetSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    init_thread_pool();
    let clips = generate_dataset(&DatasetSpec::default())?;
    for mode in [Mode::Baseline, Mode::Spinshield] {
        let cfg = TrainConfig {
            mode,
            ..TrainConfig::default()
        };
        let (out, split) = train(&cfg, &clips)?;
        let test: Vec<_> = split.test.iter().map(|&i| &clips[i]).collect();
        for budget in [0.0, 0.25, std::f64::consts::LN_2] {
            let o = adaptive_auc(
                &out.bundle,
                &test,
                &AdaptiveConfig {
                    budget,
                    ..AdaptiveConfig::default()
                },
            )?;
            println!("{:<10} budget {budget:.3}: clean {:.3} attacked {:.3}", mode.name(), o.clean_auc, o.attacked_auc);
        }
    }
    Ok(())
}
