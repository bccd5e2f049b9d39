//! Writes a small planted-shortcut dataset and checks the shortcut probe.
//!
//! `cargo run --example gen_data -- [out_dir]`

use spinshield::io::SignalFormat;
use spinshield::synth::{generate_dataset, load_manifest_clips, shortcut_probe_auc, write_dataset, DatasetSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("spinshield_data"));
    let spec = DatasetSpec {
        n_clips: 200,
        ..DatasetSpec::default()
    };
    let clips = generate_dataset(&spec)?;
    let manifest = write_dataset(&out, &clips, Some(&spec), SignalFormat::Binary)?;
    let back = load_manifest_clips(&manifest)?;
    let fakes = back.iter().filter(|c| c.label == 1).count();
    println!("{} clips ({fakes} fake) at {}", back.len(), manifest.display());
    println!("shortcut-bin probe AUC {:.3}", shortcut_probe_auc(&back, spec.shortcut_bin)?);
    Ok(())
}
