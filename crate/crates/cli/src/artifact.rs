//! On-disk artifacts. JSON files carry a `provenance` object; CSV files start with a
//! `# nemflex <kind> v1 config_hash=<hash> seed=<seed>` comment line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use nemflex::dp::Solution;
use nemflex::generation::GenerationChain;

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub kind: String,
    pub version: u32,
    pub config_hash: String,
    /// Absent for commands that draw no random numbers.
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(kind: &str, config_hash: &str, seed: Option<u64>) -> Self {
        Self { kind: kind.into(), version: FORMAT_VERSION, config_hash: config_hash.into(), seed }
    }

    /// Header line for CSV outputs, without the leading `# `.
    pub fn header(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!("nemflex {} v{} config_hash={} seed={seed}", self.kind, self.version, self.config_hash)
    }
}

/// Solved value and policy tables plus the start state used for the reported V₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablesArtifact {
    pub provenance: Provenance,
    pub scenario: String,
    pub start_soc: f64,
    pub start_level: usize,
    pub solution: Solution,
}

impl TablesArtifact {
    /// Rejects tables whose sizes do not match their grids.
    pub fn check_shape(&self) -> CliResult<()> {
        let sol = &self.solution;
        let dims = sol.grid.dims();
        let (ns, ng, nc) = dims;
        let h = sol.values.horizon;
        let mut problems = Vec::new();
        if ns == 0 || ng == 0 || nc == 0 || h == 0 {
            problems.push("empty grid or horizon".to_string());
        }
        if sol.values.dims != dims || sol.policy.dims != dims {
            problems.push("table dimensions differ from the grid".into());
        }
        if sol.values.data.len() != (h + 1) * ns * ng * nc {
            problems.push(format!("value table has {} entries, expected {}", sol.values.data.len(), (h + 1) * ns * ng * nc));
        }
        if sol.policy.horizon != h || sol.policy.actions.len() != h * ns * ng * nc {
            problems.push(format!("policy table has {} entries, expected {}", sol.policy.actions.len(), h * ns * ng * nc));
        }
        if sol.model.horizon() != h || sol.chain.n_levels() != ng {
            problems.push("model or chain does not match the tables".into());
        }
        if sol.values.data.iter().any(|v| !v.is_finite()) {
            problems.push("value table holds non-finite entries".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Parse(format!("malformed tables artifact: {}", problems.join("; "))))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainArtifact {
    pub provenance: Provenance,
    pub chain: GenerationChain,
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if text.trim().is_empty() {
        return Err(CliError::Parse(format!("{}: empty file", path.display())));
    }
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn read_tables(path: &Path) -> CliResult<TablesArtifact> {
    let tables: TablesArtifact = read_json(path)?;
    tables.check_shape()?;
    Ok(tables)
}

pub fn read_chain(path: &Path) -> CliResult<GenerationChain> {
    let artifact: ChainArtifact = read_json(path)?;
    artifact.chain.validate()?;
    Ok(artifact.chain)
}
