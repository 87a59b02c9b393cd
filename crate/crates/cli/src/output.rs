use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use catalysis_core::conference::Conference;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::usage;

#[derive(Debug, Clone, Serialize)]
struct InputRecord {
    path: String,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct SeedRecord {
    value: u64,
    /// True when no seed was given and one was drawn for this run.
    generated: bool,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    subcommand: &'a str,
    argv: Vec<String>,
    seed: Option<SeedRecord>,
    threads: usize,
    config: &'a serde_json::Value,
    inputs: &'a [InputRecord],
    outputs: &'a [String],
}

pub const MANIFEST: &str = "manifest.json";

/// One subcommand invocation: reads inputs, writes outputs into `dir` and
/// finishes with a manifest describing both.
pub struct Run {
    dir: PathBuf,
    subcommand: &'static str,
    seed: Option<SeedRecord>,
    config: serde_json::Value,
    inputs: Vec<InputRecord>,
    input_paths: Vec<PathBuf>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(dir: &Path, subcommand: &'static str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            subcommand,
            seed: None,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            input_paths: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            bytes: bytes.len(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
        });
        self.input_paths.push(fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()));
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8 text", path.display()))
    }

    pub fn conference(&mut self, path: &Path) -> Result<Conference> {
        let text = self.read(path)?;
        Conference::from_json(&text).with_context(|| format!("loading conference {}", path.display()))
    }

    pub fn json<T: DeserializeOwned>(&mut self, path: &Path) -> Result<T> {
        let text = self.read(path)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// The given seed, or a fresh one recorded as generated.
    pub fn seed(&mut self, explicit: Option<u64>) -> u64 {
        let record = match explicit {
            Some(value) => SeedRecord { value, generated: false },
            None => SeedRecord { value: rand::random(), generated: true },
        };
        self.seed = Some(record);
        record.value
    }

    pub fn config(&mut self, config: &impl Serialize) -> Result<()> {
        self.config = serde_json::to_value(config).context("serialising run configuration")?;
        Ok(())
    }

    fn target(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Ok(canonical) = fs::canonicalize(&path) {
            if self.input_paths.contains(&canonical) {
                return Err(usage(format!("refusing to overwrite input file {}", path.display())));
            }
        }
        self.outputs.push(name.to_owned());
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.target(name)?;
        let mut text = serde_json::to_string_pretty(value).context("serialising output")?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.target(name)?;
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn write_csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let path = self.target(name)?;
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        let path = self.target(MANIFEST)?;
        self.outputs.pop();
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: catalysis_core::VERSION,
            subcommand: self.subcommand,
            argv: std::env::args().collect(),
            seed: self.seed,
            threads: rayon::current_num_threads(),
            config: &self.config,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest).context("serialising manifest")?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}
