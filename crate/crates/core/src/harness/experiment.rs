//! Multi-seed desk-scale experiment: train each variant, then measure clean,
//! shortcut-band, attack-suite, notch-sweep and adaptive AUC on the test split.

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackKind, AttackSpec, DEFAULT_TUKEY_ALPHA};
use crate::error::Result;
use crate::harness::adaptive::{adaptive_auc, AdaptiveConfig};
use crate::harness::eval::{auc_under_spec, evaluate_under_attacks, max_sweep_drop, notch_sweep, AttackSuite, SweepRow};
use crate::harness::features::{dump_features, mean_view_gap, EnvView};
use crate::harness::train::{train_on, Mode, Split, TrainConfig};
use crate::models::ModelBundle;
use crate::synth::{generate_dataset, DatasetSpec, LabeledClip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    Spinshield,
    NaiveAug,
    /// Spinshield with `lambda_sym = 0`.
    NoSym,
    /// Spinshield with `lambda_blind = 0`.
    NoBlind,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::NaiveAug,
        Variant::Spinshield,
        Variant::NoSym,
        Variant::NoBlind,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Spinshield => "spinshield",
            Variant::NaiveAug => "naive_aug",
            Variant::NoSym => "no_sym",
            Variant::NoBlind => "no_blind",
        }
    }

    /// `base` with the mode and weights this variant implies.
    pub fn config(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        match self {
            Variant::Baseline => c.mode = Mode::Baseline,
            Variant::NaiveAug => c.mode = Mode::NaiveAug,
            Variant::Spinshield => c.mode = Mode::Spinshield,
            Variant::NoSym => {
                c.mode = Mode::Spinshield;
                c.weights.lambda_sym = 0.0;
            }
            Variant::NoBlind => {
                c.mode = Mode::Spinshield;
                c.weights.lambda_blind = 0.0;
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub suite: AttackSuite,
    pub adaptive: AdaptiveConfig,
    /// Test clips used by the adaptive attack (`0` skips it).
    pub adaptive_clips: usize,
    pub sweep: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            variants: Variant::ALL.to_vec(),
            suite: AttackSuite {
                seeds: vec![0],
                ..AttackSuite::default()
            },
            adaptive: AdaptiveConfig::default(),
            adaptive_clips: 200,
            sweep: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub variant: Variant,
    pub seed: u64,
    pub best_epoch: usize,
    pub clean_auc: f64,
    /// Band mask of width one over the shortcut bin.
    pub band_ks_auc: f64,
    pub attacked: Vec<(AttackKind, f64)>,
    pub mean_attacked_auc: f64,
    pub sweep: Vec<SweepRow>,
    pub sweep_max_drop: Option<f64>,
    pub adaptive_auc: Option<f64>,
    /// Mean `|h_clean - h_env|` under the band attack.
    pub view_gap: f64,
}

impl VariantMetrics {
    pub fn attacked_auc(&self, kind: AttackKind) -> Option<f64> {
        self.attacked.iter().find(|(k, _)| *k == kind).map(|&(_, a)| a)
    }
}

/// Dataset for one experiment seed: the configured `DatasetSpec` with its seed offset.
pub fn dataset_for_seed(spec: &DatasetSpec, seed: u64) -> Result<Vec<LabeledClip>> {
    let mut s = spec.clone();
    s.seed = spec.seed.wrapping_add(seed);
    generate_dataset(&s)
}

/// Trains `variant` on the split of `clips` and measures it on the test part.
pub fn run_variant(
    cfg: &ExperimentConfig,
    clips: &[LabeledClip],
    split: &Split,
    variant: Variant,
    seed: u64,
) -> Result<(VariantMetrics, ModelBundle)> {
    let mut tc = variant.config(&cfg.train);
    tc.seed = seed;
    let train = Split::pick(clips, &split.train);
    let val = Split::pick(clips, &split.val);
    let test = Split::pick(clips, &split.test);
    let out = train_on(&tc, &train, &val)?;
    let metrics = measure(cfg, &out.bundle, &test, variant, seed, out.best_epoch)?;
    Ok((metrics, out.bundle))
}

pub fn measure(
    cfg: &ExperimentConfig,
    bundle: &ModelBundle,
    test: &[&LabeledClip],
    variant: Variant,
    seed: u64,
    best_epoch: usize,
) -> Result<VariantMetrics> {
    let band = AttackSpec::band(&[(cfg.dataset.shortcut_bin, 1)], DEFAULT_TUKEY_ALPHA);
    let band_ks_auc = auc_under_spec(bundle, test, &band)?;
    let report = evaluate_under_attacks(bundle, test, &cfg.suite, serde_json::Value::Null)?;
    let sweep = if cfg.sweep { notch_sweep(bundle, test)? } else { Vec::new() };
    let sweep_max_drop = cfg.sweep.then(|| max_sweep_drop(&sweep));
    let adaptive = if cfg.adaptive_clips > 0 {
        let n = cfg.adaptive_clips.min(test.len());
        Some(adaptive_auc(bundle, &test[..n], &cfg.adaptive)?.attacked_auc)
    } else {
        None
    };
    let rows = dump_features(
        bundle,
        test,
        EnvView::Attack {
            kind: AttackKind::RandomBandMask,
            seed: 0,
        },
    )?;
    Ok(VariantMetrics {
        variant,
        seed,
        best_epoch,
        clean_auc: report.clean_auc,
        band_ks_auc,
        attacked: report.summary.iter().map(|s| (s.kind, s.mean)).collect(),
        mean_attacked_auc: report.mean_attacked_auc(),
        sweep,
        sweep_max_drop,
        adaptive_auc: adaptive,
        view_gap: mean_view_gap(&rows),
    })
}

/// Every variant for every seed, in seed-major order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<VariantMetrics>> {
    let mut all = Vec::new();
    for &seed in &cfg.seeds {
        let clips = dataset_for_seed(&cfg.dataset, seed)?;
        let split = Split::new(clips.len(), seed);
        for &v in &cfg.variants {
            all.push(run_variant(cfg, &clips, &split, v, seed)?.0);
        }
    }
    Ok(all)
}
