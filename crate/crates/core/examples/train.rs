//! Trains one detector and prints the loss log per epoch.
//!
//! `cargo run --release --example train -- [baseline|spinshield|naive_aug]`

use spinshield::harness::train::Phase;
use spinshield::harness::{init_thread_pool, train, Mode, TrainConfig};
use spinshield::synth::{generate_dataset, DatasetSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    init_thread_pool();
    let mode: Mode = match std::env::args().nth(1) {
        Some(m) => serde_json::from_value(serde_json::Value::String(m))?,
        None => Mode::Spinshield,
    };
    let clips = generate_dataset(&DatasetSpec::default())?;
    let cfg = TrainConfig {
        mode,
        ..TrainConfig::default()
    };
    let (out, _) = train(&cfg, &clips)?;
    let per_epoch = out.log.iter().filter(|r| r.phase == Phase::Det).count() / cfg.epochs;
    println!("epoch  L_det   L_sym   L_blind  L_gen   val AUC");
    for (e, auc) in out.val_auc.iter().enumerate() {
        let det: Vec<_> = out.log.iter().filter(|r| r.phase == Phase::Det).skip(e * per_epoch).take(per_epoch).collect();
        let gen: Vec<_> = out.log.iter().filter(|r| r.phase == Phase::Gen).skip(e * per_epoch).take(per_epoch).collect();
        let avg = |v: &[&spinshield::harness::train::LogRow], f: fn(&spinshield::harness::train::LogRow) -> f64| {
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().map(|r| f(r)).sum::<f64>() / v.len() as f64
            }
        };
        println!(
            "{:>5}  {:.4}  {:.4}  {:.4}   {:.4}  {auc:.4}",
            e + 1,
            avg(&det, |r| r.losses.l_det),
            avg(&det, |r| r.losses.l_sym),
            avg(&det, |r| r.losses.l_blind),
            avg(&gen, |r| r.losses.l_gen)
        );
    }
    println!("kept epoch {}", out.best_epoch);
    Ok(())
}
