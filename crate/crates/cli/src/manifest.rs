//! Dataset and run manifests.
//!
//! A dataset manifest is JSON lines: one [`DatasetHeader`] followed by one
//! [`FrameEntry`] per frame. Paths inside it are relative to its directory.
//! A run manifest is a single JSON document.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tip4aw::driver::IterationDiagnostics;
use tip4aw::simulate::FieldParams;
use tip4aw::Tip4awConfig;

pub const DATASET_MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObjectSource {
    Synthetic { seed: u64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub rows: usize,
    pub cols: usize,
    pub frames: usize,
    pub master_seed: u64,
    pub object: ObjectSource,
    pub field: FieldParams,
    pub noise_sigma: f64,
    pub truth: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub path: PathBuf,
    pub field_seed: u64,
    pub noise_seed: u64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dir: PathBuf,
    pub header: DatasetHeader,
    pub frames: Vec<FrameEntry>,
}

impl Dataset {
    pub fn manifest_path(dir: &Path) -> PathBuf {
        dir.join(DATASET_MANIFEST)
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let path = Self::manifest_path(dir);
        let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .transpose()?
            .with_context(|| format!("{} is empty", path.display()))?;
        let header: DatasetHeader =
            serde_json::from_str(&first).with_context(|| format!("{}: bad header line", path.display()))?;
        let mut frames = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FrameEntry =
                serde_json::from_str(&line).with_context(|| format!("{}: bad frame line {}", path.display(), n + 2))?;
            frames.push(entry);
        }
        if frames.len() != header.frames {
            bail!(
                "{}: header announces {} frames, found {}",
                path.display(),
                header.frames,
                frames.len()
            );
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            header,
            frames,
        })
    }

    pub fn save(&self) -> Result<()> {
        let path = Self::manifest_path(&self.dir);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, &self.header)?;
        writeln!(out)?;
        for f in &self.frames {
            serde_json::to_writer(&mut out, f)?;
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn frame_paths(&self) -> Vec<PathBuf> {
        self.frames.iter().map(|f| self.dir.join(&f.path)).collect()
    }

    pub fn truth_path(&self) -> PathBuf {
        self.dir.join(&self.header.truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutputs {
    pub object: PathBuf,
    pub psf_montage: PathBuf,
    pub diagnostics: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub run_seconds: f64,
    pub iteration_seconds: Vec<f64>,
}

/// Everything needed to repeat a deconvolution run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: Tip4awConfig,
    /// Absolute input frame paths, in stack order.
    pub inputs: Vec<PathBuf>,
    /// Dataset the inputs came from, if any.
    pub dataset: Option<PathBuf>,
    pub threads: Option<usize>,
    pub outputs: RunOutputs,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub timings: Timings,
    /// Error that stopped the run early; the outputs then hold the last
    /// feasible state.
    #[serde(default)]
    pub failure: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }
}
