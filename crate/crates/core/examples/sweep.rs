//! Notch sweep of a baseline and a spinshield model: AUC with each interior
//! bin fully suppressed.

use spinshield::harness::eval::max_sweep_drop;
use spinshield::harness::{init_thread_pool, notch_sweep, train, Mode, TrainConfig};
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
        let rows = notch_sweep(&out.bundle, &test)?;
        let cells: Vec<String> = rows
            .iter()
            .map(|r| match r.center_bin {
                None => format!("none {:.3}", r.auc),
                Some(k) => format!("k{k} {:.3}", r.auc),
            })
            .collect();
        println!("{:<10} {}  (max drop {:.3})", mode.name(), cells.join("  "), max_sweep_drop(&rows));
    }
    Ok(())
}
