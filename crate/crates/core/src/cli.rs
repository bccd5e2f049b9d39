//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 numerical abort.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use crate::attacks::{apply_attack, sample_attack, AttackKind, AttackSpec};
use crate::error::{Error, Result};
use crate::harness::adaptive::{adaptive_auc, AdaptiveConfig};
use crate::harness::eval::{evaluate_under_attacks, notch_sweep, write_sweep_csv, AttackSuite};
use crate::harness::features::{dump_features, write_features_csv, EnvView};
use crate::harness::train::{train, write_log_csv, Split, TrainConfig};
use crate::harness::init_thread_pool;
use crate::io::{read_clip, write_clip, SignalFormat};
use crate::models::ModelBundle;
use crate::synth::{generate_dataset, load_manifest_clips, write_dataset, DatasetSpec, LabeledClip};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spinshield", version, about = "Spectral-invariance training and robustness evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-shortcut dataset and its manifest.
    GenData(GenDataArgs),
    /// Train a detector; writes a checkpoint and a loss log.
    Train(TrainArgs),
    /// AUC under the attack suite, as an EvalReport JSON.
    Eval(EvalArgs),
    /// Notch sweep over every interior bin, as CSV.
    Sweep(SweepArgs),
    /// White-box amplitude-modulation attack report.
    Adaptive(AdaptiveArgs),
    /// Apply one attack to one signal file.
    Attack(AttackArgs),
    /// Dump clean and perturbed encoder features.
    Features(FeaturesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Binary,
}

impl From<FormatArg> for SignalFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => SignalFormat::Csv,
            FormatArg::Binary => SignalFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// DatasetSpec JSON; defaults apply to missing fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TrainConfig JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log CSV; defaults to `<out>.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

/// Which clips of a manifest to use.
#[derive(Debug, Args)]
pub struct DataSel {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Seed of the 80/10/10 split; match the training seed.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataSel,
    /// AttackSuite JSON; defaults to the four attacks over seeds 0..3.
    #[arg(long)]
    pub attacks: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataSel,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AdaptiveArgs {
    #[command(flatten)]
    pub data: DataSel,
    #[arg(long, default_value_t = AdaptiveConfig::default().steps)]
    pub steps: usize,
    #[arg(long, default_value_t = AdaptiveConfig::default().budget)]
    pub budget: f64,
    /// Attack at most this many clips.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// AttackSpec JSON. Mutually exclusive with `--kind`.
    #[arg(long, conflicts_with = "kind")]
    pub spec: Option<PathBuf>,
    /// Sample an attack of this kind instead (band, notch, tilt, noise).
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<AttackKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the applied spec here.
    #[arg(long)]
    pub spec_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub data: DataSel,
    /// Second view: `lsa` or an attack kind.
    #[arg(long, default_value = "lsa")]
    pub view: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_kind(s: &str) -> std::result::Result<AttackKind, String> {
    AttackKind::parse(s).ok_or_else(|| format!("unknown attack kind {s:?}"))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn format_for(path: &Path) -> Result<SignalFormat> {
    SignalFormat::from_path(path)
        .ok_or_else(|| Error::InvalidInput(format!("{}: unknown signal extension", path.display())))
}

fn select<'a>(clips: &'a [LabeledClip], sel: &DataSel) -> Vec<&'a LabeledClip> {
    let split = Split::new(clips.len(), sel.split_seed);
    match sel.split {
        SplitArg::All => clips.iter().collect(),
        SplitArg::Train => Split::pick(clips, &split.train),
        SplitArg::Val => Split::pick(clips, &split.val),
        SplitArg::Test => Split::pick(clips, &split.test),
    }
}

fn load_selection(sel: &DataSel) -> Result<(ModelBundle, Vec<LabeledClip>)> {
    let bundle = ModelBundle::load(&sel.checkpoint)?;
    let clips = load_manifest_clips(&sel.manifest)?;
    Ok((bundle, clips))
}

fn snapshot(sel: &DataSel) -> serde_json::Value {
    serde_json::json!({
        "checkpoint": sel.checkpoint,
        "manifest": sel.manifest,
        "split": format!("{:?}", sel.split).to_lowercase(),
        "split_seed": sel.split_seed,
    })
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => {
            let spec: DatasetSpec = match &a.spec {
                Some(p) => read_json(p)?,
                None => DatasetSpec::default(),
            };
            let clips = generate_dataset(&spec)?;
            let path = write_dataset(&a.out, &clips, Some(&spec), a.format.into())?;
            println!("{}", path.display());
        }
        Command::Train(a) => {
            let cfg: TrainConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => TrainConfig::default(),
            };
            let clips = load_manifest_clips(&a.manifest)?;
            let (out, _) = train(&cfg, &clips)?;
            out.bundle.save(&a.out)?;
            let log = a.log.unwrap_or_else(|| a.out.with_extension("log.csv"));
            write_log_csv(&log, &out.log)?;
            println!(
                "best epoch {} val AUC {:.4}",
                out.best_epoch,
                out.val_auc[out.best_epoch - 1]
            );
        }
        Command::Eval(a) => {
            let (bundle, clips) = load_selection(&a.data)?;
            let suite: AttackSuite = match &a.attacks {
                Some(p) => read_json(p)?,
                None => AttackSuite::default(),
            };
            let report = evaluate_under_attacks(&bundle, &select(&clips, &a.data), &suite, snapshot(&a.data))?;
            report.save(&a.out)?;
            println!("clean AUC {:.4}", report.clean_auc);
            for s in &report.summary {
                println!("{:<6} AUC {:.4} ± {:.4}", s.kind.name(), s.mean, s.std);
            }
        }
        Command::Sweep(a) => {
            let (bundle, clips) = load_selection(&a.data)?;
            let rows = notch_sweep(&bundle, &select(&clips, &a.data))?;
            write_sweep_csv(&a.out, &rows)?;
        }
        Command::Adaptive(a) => {
            let (bundle, clips) = load_selection(&a.data)?;
            let mut chosen = select(&clips, &a.data);
            if let Some(n) = a.limit {
                chosen.truncate(n);
            }
            let cfg = AdaptiveConfig {
                steps: a.steps,
                budget: a.budget,
                ..AdaptiveConfig::default()
            };
            let outcome = adaptive_auc(&bundle, &chosen, &cfg)?;
            write_json(&a.out, &outcome)?;
            println!("clean AUC {:.4} attacked AUC {:.4}", outcome.clean_auc, outcome.attacked_auc);
        }
        Command::Attack(a) => {
            let clip = read_clip(&a.input, format_for(&a.input)?)?;
            let spec: AttackSpec = match (&a.spec, a.kind) {
                (Some(p), _) => read_json(p)?,
                (None, Some(kind)) => sample_attack(kind, clip.grid(), clip.patch_count(), a.seed)?,
                (None, None) => return Err(Error::InvalidInput("give --spec or --kind".into())),
            };
            let out = apply_attack(&clip, &spec)?;
            write_clip(&a.output, &out, format_for(&a.output)?)?;
            if let Some(p) = &a.spec_out {
                write_json(p, &spec)?;
            }
        }
        Command::Features(a) => {
            let (bundle, clips) = load_selection(&a.data)?;
            let view = if a.view.eq_ignore_ascii_case("lsa") {
                EnvView::Lsa
            } else {
                EnvView::Attack {
                    kind: parse_kind(&a.view).map_err(Error::InvalidInput)?,
                    seed: a.seed,
                }
            };
            let rows = dump_features(&bundle, &select(&clips, &a.data), view)?;
            write_features_csv(&a.out, &rows)?;
        }
    }
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_DATA
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Messages go to stdout and stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_thread_pool();
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
