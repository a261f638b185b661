//! Result artifacts: a CSV table and a JSON summary, each carrying a
//! provenance header.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub toolkit: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Provenance {
    /// Hashes the canonical JSON form of the command configuration.
    pub fn new(command: &str, config: &impl Serialize, seed: Option<u64>) -> Self {
        let canonical = serde_json::to_string(&json!({ "command": command, "config": config, "seed": seed }))
            .expect("configs serialize");
        let digest = Sha256::digest(canonical.as_bytes());
        Self {
            toolkit: "cachelab".into(),
            version: VERSION.into(),
            command: command.into(),
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed,
        }
    }

    fn csv_header(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "# {} {}\n# command: {}\n# config_sha256: {}\n# seed: {seed}\n",
            self.toolkit, self.version, self.command, self.config_sha256
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(CliError::runtime)?;
        for r in &self.rows {
            w.write_record(r).map_err(CliError::runtime)?;
        }
        w.into_inner().map_err(|e| CliError::runtime(e.to_string()))
    }
}

/// Formats a row of displayable cells.
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($x.to_string()),*] };
}

pub struct Artifact {
    pub table: Option<Table>,
    pub summary: Value,
}

impl Artifact {
    pub fn json(summary: impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            table: None,
            summary: serde_json::to_value(summary).map_err(CliError::runtime)?,
        })
    }

    pub fn with_table(table: Table, summary: impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            table: Some(table),
            summary: serde_json::to_value(summary).map_err(CliError::runtime)?,
        })
    }
}

/// Where an artifact goes: the table (or the summary, when there is no
/// table) to `out`, and the summary of a tabular result next to it with a
/// `.json` extension. Without `out` the primary part goes to stdout.
pub struct Sink {
    pub out: Option<PathBuf>,
    pub force: bool,
}

impl Sink {
    fn targets(&self, tabular: bool) -> Result<Vec<PathBuf>, CliError> {
        let Some(out) = &self.out else {
            return Ok(Vec::new());
        };
        if !tabular {
            return Ok(vec![out.clone()]);
        }
        let summary = out.with_extension("json");
        if &summary == out {
            return Err(CliError::Config(format!(
                "--out {} would hold both the CSV table and the JSON summary; use a .csv name",
                out.display()
            )));
        }
        Ok(vec![out.clone(), summary])
    }

    /// Refuses to run at all when an output already exists and `--force`
    /// was not given.
    pub fn precheck(&self, tabular: bool) -> Result<(), CliError> {
        if self.force {
            return Ok(());
        }
        for p in self.targets(tabular)? {
            if p.exists() {
                return Err(CliError::Config(format!(
                    "{} exists; pass --force to overwrite",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, prov: &Provenance, art: &Artifact) -> Result<(), CliError> {
        let summary = json!({ "provenance": prov, "result": art.summary });
        let mut json_bytes = serde_json::to_vec_pretty(&summary).map_err(CliError::runtime)?;
        json_bytes.push(b'\n');
        let csv_bytes = match &art.table {
            Some(t) => {
                let mut b = prov.csv_header().into_bytes();
                b.extend(t.to_csv()?);
                Some(b)
            }
            None => None,
        };
        let targets = self.targets(csv_bytes.is_some())?;
        if targets.is_empty() {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(csv_bytes.as_deref().unwrap_or(&json_bytes))
                .map_err(CliError::runtime)?;
            return Ok(());
        }
        match csv_bytes {
            Some(c) => {
                write_file(&targets[0], &c, self.force)?;
                write_file(&targets[1], &json_bytes, self.force)
            }
            None => write_file(&targets[0], &json_bytes, self.force),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8], force: bool) -> Result<(), CliError> {
    if !force && path.exists() {
        return Err(CliError::Config(format!("{} exists; pass --force to overwrite", path.display())));
    }
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}
