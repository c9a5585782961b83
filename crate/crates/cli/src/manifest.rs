use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Outcome;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Everything needed to reproduce a run: the argument echo, the resolved
/// configuration and SHA-256 digests of every input and output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    /// Input path as given on the command line → digest.
    pub inputs: BTreeMap<String, String>,
    /// File name inside the output directory → digest.
    pub outputs: BTreeMap<String, String>,
}

pub fn digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, config: serde_json::Value) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            args,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), digest(path)?);
        Ok(())
    }

    /// Digests `names` inside `out` and writes the manifest next to them.
    pub fn finish(mut self, out: &OutDir) -> Result<()> {
        for name in &out.written {
            self.outputs
                .insert(name.clone(), digest(&out.dir.join(name))?);
        }
        let path = out.dir.join(MANIFEST_NAME);
        forestprior::io::write_json(&path, &self)
            .with_context(|| format!("writing {}", path.display()))
    }
}

/// An output directory that remembers which files were written to it.
pub struct OutDir {
    pub dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Path for `name`, recorded as an output.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_owned());
        self.dir.join(name)
    }
}

/// `argv` with any `--out` value replaced by `out`.
pub fn with_out(argv: &[String], out: &Path) -> Vec<String> {
    let mut result = Vec::with_capacity(argv.len() + 2);
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            result.push(a.clone());
        }
    }
    result.push("--out".into());
    result.push(out.display().to_string());
    result
}

#[derive(Debug, clap::Args)]
pub struct ReplayArgs {
    /// Manifest written by a previous run.
    pub manifest: PathBuf,

    /// Where to write the re-run outputs (default: the manifest's directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn replay(args: &ReplayArgs) -> Result<Outcome> {
    let recorded: RunManifest = forestprior::io::read_json(&args.manifest)?;
    for (path, expected) in &recorded.inputs {
        let actual = digest(Path::new(path))?;
        if &actual != expected {
            bail!("input {path} changed since the recorded run");
        }
    }
    let out = match &args.out {
        Some(dir) => dir.clone(),
        None => args
            .manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let outcome = crate::rerun(&recorded.args, out.clone())?;

    let mut mismatched = Vec::new();
    for (name, expected) in &recorded.outputs {
        match digest(&out.join(name)) {
            Ok(actual) if &actual == expected => {}
            _ => mismatched.push(name.as_str()),
        }
    }
    if !mismatched.is_empty() {
        bail!(
            "outputs differ from the recorded run: {}",
            mismatched.join(", ")
        );
    }
    println!("replay ok: {} outputs reproduced", recorded.outputs.len());
    Ok(outcome)
}
