//! Config-driven experiment runner for the `gevrey-lab` binary.
//!
//! Every subcommand stages its outputs in memory and writes them, with a
//! manifest, only after the computation succeeds.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod verify;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use gevrey_core::Error;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    /// A verify check failed.
    CheckFailed = 1,
    Config = 2,
    Numerical = 3,
    /// Artifacts were written but an estimate is flagged.
    Unstable = 4,
}

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
}

impl Failure {
    pub fn exit(&self) -> Exit {
        match self {
            Failure::Config(_) => Exit::Config,
            Failure::Numerical(_) => Exit::Numerical,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidGrid(_) | Error::InvalidParameter(_) | Error::LengthMismatch { .. } | Error::SaturatedGrid => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gevrey-lab", version, about = "Gevrey-weighted energy experiments")]
pub struct Cli {
    /// Experiment config (TOML), or a manifest to replay.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "gevrey-out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Reduced sample counts.
    #[arg(long, global = true)]
    pub quick: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    Solve,
    DriftScan,
    MultiplierScan,
    FreScan,
    Extension,
    Radius,
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::DriftScan => "drift-scan",
            Command::MultiplierScan => "multiplier-scan",
            Command::FreScan => "fre-scan",
            Command::Extension => "extension",
            Command::Radius => "radius",
            Command::Verify => "verify",
        }
    }
}

/// A file staged for writing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn text(name: &str, text: String) -> Self {
        Self { name: name.to_string(), bytes: text.into_bytes() }
    }

    pub fn json<T: serde::Serialize>(name: &str, value: &T) -> Self {
        let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
        s.push('\n');
        Self::text(name, s)
    }
}

/// Two-column plot data with a one-line header.
pub fn columns(header: [&str; 2], rows: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut s = format!("# {} {}\n", header[0], header[1]);
    for (x, y) in rows {
        s.push_str(&format!("{x:e} {y:e}\n"));
    }
    s
}

/// What a subcommand produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub derived: serde_json::Map<String, serde_json::Value>,
    pub seeds: Vec<u64>,
    pub flagged: Vec<String>,
    /// Printed after the artifacts are written.
    pub summary: String,
    pub checks_failed: bool,
}

impl Outcome {
    pub fn derive(&mut self, key: &str, value: impl serde::Serialize) {
        self.derived
            .insert(key.to_string(), serde_json::to_value(value).expect("plain data serializes"));
    }
}

fn write_all(out: &Path, artifacts: &[Artifact]) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    for a in artifacts {
        std::fs::write(out.join(&a.name), &a.bytes)?;
    }
    Ok(())
}

/// Runs one subcommand and returns the exit code.
pub fn run(cli: &Cli) -> Exit {
    let input = match manifest::load_input(cli) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("{e}");
            return e.exit();
        }
    };
    let outcome = match commands::execute(cli.command, &input) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return e.exit();
        }
    };
    let mut artifacts = outcome.artifacts.clone();
    artifacts.push(manifest::Manifest::new(cli.command, &input, &outcome).artifact());
    if let Err(e) = write_all(&cli.out, &artifacts) {
        eprintln!("cannot write {}: {e}", cli.out.display());
        return Exit::Config;
    }
    print!("{}", outcome.summary);
    for f in &outcome.flagged {
        eprintln!("flagged: {f}");
    }
    if outcome.checks_failed {
        Exit::CheckFailed
    } else if !outcome.flagged.is_empty() {
        Exit::Unstable
    } else {
        Exit::Success
    }
}
