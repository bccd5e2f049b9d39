//! Inference never touches the adversary. Kept in its own binary because
//! the generator counter is process-wide.

use spinshield::attacks::AttackKind;
use spinshield::harness::eval::{clean_auc, notch_sweep};
use spinshield::harness::{
    adaptive_auc, dump_features, evaluate_under_attacks, AdaptiveConfig, AttackSuite, EnvView,
};
use spinshield::models::{generator_invocations, Dims, ModelBundle};
use spinshield::synth::{generate_dataset, DatasetSpec};

#[test]
fn inference_paths_never_call_the_generator() {
    let clips = generate_dataset(&DatasetSpec {
        n_clips: 40,
        ..DatasetSpec::default()
    })
    .unwrap();
    let refs: Vec<_> = clips.iter().collect();
    let bundle = ModelBundle::init(Dims::new(16, 16), 0.6, 0);
    let before = generator_invocations();
    clean_auc(&bundle, &refs).unwrap();
    evaluate_under_attacks(&bundle, &refs, &AttackSuite::default(), serde_json::Value::Null).unwrap();
    notch_sweep(&bundle, &refs).unwrap();
    adaptive_auc(
        &bundle,
        &refs,
        &AdaptiveConfig {
            steps: 3,
            ..AdaptiveConfig::default()
        },
    )
    .unwrap();
    dump_features(
        &bundle,
        &refs,
        EnvView::Attack {
            kind: AttackKind::SpectralTilt,
            seed: 0,
        },
    )
    .unwrap();
    assert_eq!(generator_invocations(), before);
    // The LSA feature view is the one place that asks for it.
    dump_features(&bundle, &refs, EnvView::Lsa).unwrap();
    assert!(generator_invocations() > before);
}
