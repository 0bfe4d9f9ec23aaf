//! Run manifests. A manifest embeds the config verbatim, so passing it back
//! as `--config` replays the run.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Artifact, Cli, Command, Failure, Outcome};

pub const TOOL: &str = "gevrey-lab";
pub const FILE: &str = "manifest.json";

/// Resolved inputs of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Input {
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub quick: bool,
}

impl Input {
    pub fn config_text(&self) -> Result<&str, Failure> {
        self.config
            .as_deref()
            .ok_or_else(|| Failure::Config("this subcommand needs --config".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHash {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_sha256: Option<String>,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub quick: bool,
    pub seeds: Vec<u64>,
    pub derived: serde_json::Map<String, serde_json::Value>,
    pub artifacts: Vec<ArtifactHash>,
    pub flagged: Vec<String>,
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(command: Command, input: &Input, outcome: &Outcome) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: command.name().into(),
            config_sha256: input.config.as_ref().map(|c| sha256(c.as_bytes())),
            config: input.config.clone(),
            seed: input.seed,
            quick: input.quick,
            seeds: outcome.seeds.clone(),
            derived: outcome.derived.clone(),
            artifacts: outcome
                .artifacts
                .iter()
                .map(|a| ArtifactHash { file: a.name.clone(), sha256: sha256(&a.bytes) })
                .collect(),
            flagged: outcome.flagged.clone(),
        }
    }

    pub fn artifact(&self) -> Artifact {
        Artifact::json(FILE, self)
    }
}

/// Reads `--config`, unwrapping a manifest when one is given.
pub fn load_input(cli: &Cli) -> Result<Input, Failure> {
    let Some(path) = &cli.config else {
        return Ok(Input { config: None, seed: cli.seed, quick: cli.quick });
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str::<Manifest>(&text) {
        Ok(m) if m.tool == TOOL => {
            if m.subcommand != cli.command.name() {
                return Err(Failure::Config(format!(
                    "manifest is for {}, not {}",
                    m.subcommand,
                    cli.command.name()
                )));
            }
            Ok(Input { config: m.config, seed: cli.seed.or(m.seed), quick: cli.quick || m.quick })
        }
        _ => Ok(Input { config: Some(text), seed: cli.seed, quick: cli.quick }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_round_trip() {
        let input = Input { config: Some("x = 1\n".into()), seed: Some(3), quick: true };
        let mut o = Outcome::default();
        o.artifacts.push(Artifact::text("a.dat", "1 2\n".into()));
        o.derive("kappa", 0.25);
        let m = Manifest::new(Command::FreScan, &input, &o);
        let text = String::from_utf8(m.artifact().bytes).unwrap();
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.artifacts[0].sha256, sha256(b"1 2\n"));
    }
}
