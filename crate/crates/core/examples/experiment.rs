//! Multi-seed variant comparison.
//!
//! `cargo run --release --example experiment -- [config.json]`
//!
//! Without an argument runs a two-seed smoke configuration.

use spinshield::harness::experiment::{run_experiment, ExperimentConfig, Variant};
use spinshield::harness::init_thread_pool;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    init_thread_pool();
    let cfg: ExperimentConfig = match std::env::args().nth(1) {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => {
            let mut c = ExperimentConfig::default();
            c.dataset.n_clips = 600;
            c.seeds = vec![0, 1];
            c.train.epochs = 4;
            c.adaptive_clips = 60;
            c.variants = vec![Variant::Baseline, Variant::Spinshield];
            c
        }
    };
    let start = std::time::Instant::now();
    let rows = run_experiment(&cfg)?;
    println!(
        "{:<11}{:>5}{:>6}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}",
        "variant", "seed", "ep", "clean", "band_ks", "band", "notch", "tilt", "noise", "mean", "sweepΔ", "adapt", "gap"
    );
    for r in &rows {
        let a = |i: usize| r.attacked.get(i).map_or(f64::NAN, |x| x.1);
        println!(
            "{:<11}{:>5}{:>6}{:>8.3}{:>8.3}{:>8.3}{:>8.3}{:>8.3}{:>8.3}{:>8.3}{:>8.3}{:>8.3}{:>8.4}",
            r.variant.name(),
            r.seed,
            r.best_epoch,
            r.clean_auc,
            r.band_ks_auc,
            a(0),
            a(1),
            a(2),
            a(3),
            r.mean_attacked_auc,
            r.sweep_max_drop.unwrap_or(f64::NAN),
            r.adaptive_auc.unwrap_or(f64::NAN),
            r.view_gap
        );
    }
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
