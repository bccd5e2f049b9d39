//! Patch-signal file formats.
//!
//! Text: a `m,t,value` CSV plus a sidecar `<stem>.json` holding
//! `{"M": .., "T": .., "fps": ..}`. Binary: magic `SPSC`, `u32` M, `u32` T,
//! then `M*T` little-endian `f64` in row-major order. Both round-trip bit
//! exactly (Rust's float formatting is shortest-round-trip).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{PatchSignalClip, DEFAULT_FPS};

pub const BINARY_MAGIC: &[u8; 4] = b"SPSC";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalFormat {
    Csv,
    Binary,
}

impl SignalFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SignalFormat::Csv => "csv",
            SignalFormat::Binary => "spsc",
        }
    }

    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(SignalFormat::Csv),
            "spsc" | "bin" => Some(SignalFormat::Binary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(default = "default_fps")]
    fps: f64,
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_clip(path: &Path, clip: &PatchSignalClip, format: SignalFormat) -> Result<()> {
    match format {
        SignalFormat::Csv => write_clip_csv(path, clip),
        SignalFormat::Binary => write_clip_binary(path, clip),
    }
}

pub fn read_clip(path: &Path, format: SignalFormat) -> Result<PatchSignalClip> {
    match format {
        SignalFormat::Csv => read_clip_csv(path),
        SignalFormat::Binary => read_clip_binary(path),
    }
}

pub fn write_clip_csv(path: &Path, clip: &PatchSignalClip) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    writeln!(w, "m,t,value").map_err(io_err)?;
    for m in 0..clip.patch_count() {
        for (t, v) in clip.patch(m).iter().enumerate() {
            writeln!(w, "{m},{t},{v:?}").map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;

    let side = sidecar_path(path);
    let meta = Sidecar {
        m: clip.patch_count(),
        t: clip.frame_count(),
        fps: clip.fps(),
    };
    std::fs::write(&side, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&side, e))
}

pub fn read_clip_csv(path: &Path) -> Result<PatchSignalClip> {
    let side = sidecar_path(path);
    let meta: Sidecar = serde_json::from_slice(&std::fs::read(&side).map_err(|e| Error::io(&side, e))?)
        .map_err(|e| Error::Parse {
            path: side.clone(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(BufReader::new(file));
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["m", "t", "value"] {
        return Err(parse_err(1, format!("expected header m,t,value, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }

    let n = meta.m * meta.t;
    let mut values = vec![f64::NAN; n];
    let mut seen = vec![false; n];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let m: usize = rec[0].trim().parse().map_err(|_| parse_err(line, format!("bad patch index {:?}", &rec[0])))?;
        let t: usize = rec[1].trim().parse().map_err(|_| parse_err(line, format!("bad frame index {:?}", &rec[1])))?;
        let v: f64 = rec[2].trim().parse().map_err(|_| parse_err(line, format!("bad value {:?}", &rec[2])))?;
        if m >= meta.m || t >= meta.t {
            return Err(parse_err(line, format!("index ({m}, {t}) outside {}x{}", meta.m, meta.t)));
        }
        if !v.is_finite() {
            return Err(parse_err(line, format!("non-finite value {v} at m={m}, t={t}")));
        }
        let i = m * meta.t + t;
        if seen[i] {
            return Err(parse_err(line, format!("duplicate entry for m={m}, t={t}")));
        }
        seen[i] = true;
        values[i] = v;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(parse_err(
            0,
            format!("missing entry for m={}, t={}", i / meta.t, i % meta.t),
        ));
    }
    PatchSignalClip::new(meta.m, meta.t, values)?.with_fps(meta.fps)
}

pub fn write_clip_binary(path: &Path, clip: &PatchSignalClip) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 8 * clip.signals().len());
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&to_u32(clip.patch_count())?.to_le_bytes());
    buf.extend_from_slice(&to_u32(clip.frame_count())?.to_le_bytes());
    for v in clip.signals() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidInput(format!("dimension {v} exceeds u32")))
}

pub fn read_clip_binary(path: &Path) -> Result<PatchSignalClip> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    };
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(bad("missing SPSC header".into()));
    }
    let m = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let t = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + 8 * m * t;
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes for {m}x{t}, found {}", bytes.len())));
    }
    let values = bytes[12..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    PatchSignalClip::new(m, t, values)
}
