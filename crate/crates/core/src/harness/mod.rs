//! Training, evaluation and reporting on top of the model and attack layers.

pub mod adaptive;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod optim;
pub mod train;

pub use adaptive::{adaptive_attack, adaptive_auc, AdaptiveConfig, AdaptiveOutcome};
pub use eval::{compute_auc, evaluate_under_attacks, notch_sweep, score_clips, AttackSuite, EvalReport, SweepRow};
pub use features::{dump_features, EnvView, FeatureRow};
pub use optim::{Adam, AdamConfig};
pub use train::{train, train_on, Mode, Split, TrainConfig, TrainOutput};

/// Environment variable capping the rayon worker count.
pub const THREADS_ENV: &str = "SPINSHIELD_THREADS";

/// Installs the global rayon pool, honouring [`THREADS_ENV`]. Safe to call
/// more than once; later calls are no-ops.
pub fn init_thread_pool() {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let _ = builder.build_global();
}
