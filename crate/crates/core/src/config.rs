//! Run configuration: one JSON document naming every input file and every
//! free parameter of a run. Relative paths resolve against the directory of
//! the config file.
//!
//! ```json
//! {
//!   "risk_model": "risk.json",
//!   "players": ["alice", "bob", "carol"],
//!   "source": {"kind": "coalition-table", "path": "table.json"},
//!   "aggregation": "sum",
//!   "clamp": true,
//!   "normalized": false,
//!   "solver": {"kind": "exact"},
//!   "budget": {"fraction": "1/100", "anchor": "lower", "currency": "USD"},
//!   "rounding": "per-recipient",
//!   "output": {"format": "json", "path": "report.json"}
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use num::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::MissingEntries;
use crate::ingest::Cycle;
use crate::payout::{Anchor, ReportFormat, RoundingMode};
use crate::rational;
use crate::risk::Aggregation;

/// Where the coalition game comes from. Exactly one per run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Source {
    CommitLog {
        path: PathBuf,
        #[serde(default)]
        aliases: Option<PathBuf>,
        cycle: Cycle,
    },
    Attribution { path: PathBuf },
    CoalitionTable {
        path: PathBuf,
        #[serde(default)]
        missing: MissingEntries,
    },
    SubsetResults { path: PathBuf },
}

impl Source {
    pub fn label(&self) -> &'static str {
        match self {
            Source::CommitLog { .. } => "commit-log",
            Source::Attribution { .. } => "attribution",
            Source::CoalitionTable { .. } => "coalition-table",
            Source::SubsetResults { .. } => "subset-results",
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            Source::CommitLog { path, .. }
            | Source::Attribution { path }
            | Source::CoalitionTable { path, .. }
            | Source::SubsetResults { path } => path,
        }
    }

    /// Whether the game is built from threat-tree leaves.
    pub fn needs_tree(&self) -> bool {
        !matches!(self, Source::CoalitionTable { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Solver {
    Exact,
    /// Permutation enumeration; small games only.
    Oracle,
    MonteCarlo {
        samples: u64,
        seed: u64,
        #[serde(default)]
        workers: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    #[serde(with = "rational::serde_str")]
    pub fraction: BigRational,
    pub anchor: Anchor,
    pub currency: String,
    #[serde(default = "two")]
    pub exponent: u32,
}

fn two() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub format: ReportFormat,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub risk_model: Option<PathBuf>,
    /// Overrides the cap a scale document gives its unbounded top category.
    #[serde(default, with = "rational::serde_opt")]
    pub impact_cap: Option<BigRational>,
    /// Player order; authors found in the evidence but missing here are
    /// appended as provisional players.
    #[serde(default)]
    pub players: Option<Vec<String>>,
    pub source: Source,
    pub aggregation: Aggregation,
    pub clamp: bool,
    pub normalized: bool,
    pub solver: Solver,
    #[serde(default)]
    pub budget: Option<BudgetConfig>,
    pub rounding: RoundingMode,
    pub output: OutputConfig,
}

/// A config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_file(path, "config")?;
        let config = RunConfig::from_json(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) }
    }

    /// Every referenced file that does not exist.
    pub fn missing_files(&self) -> Vec<PathBuf> {
        let c = &self.config;
        let mut paths: Vec<&Path> = vec![c.source.path()];
        if let Some(r) = &c.risk_model {
            paths.push(r);
        }
        if let Source::CommitLog { aliases: Some(a), .. } = &c.source {
            paths.push(a);
        }
        paths.into_iter().map(|p| self.resolve(p)).filter(|p| !p.is_file()).collect()
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|source| Error::Json { context: "run config".into(), source })?;
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<()> {
        if self.source.needs_tree() && self.risk_model.is_none() {
            return Err(Error::validation(format!(
                "source {} needs a risk_model for its threat tree",
                self.source.label()
            )));
        }
        if let Solver::MonteCarlo { samples: 0, .. } = self.solver {
            return Err(Error::validation("monte-carlo solver needs at least one sample"));
        }
        if let Some(b) = &self.budget {
            if b.currency.trim().is_empty() {
                return Err(Error::validation("budget currency is empty"));
            }
        }
        Ok(())
    }
}

pub fn read_file(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { context: format!("reading {what} {}", path.display()), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "risk_model": "risk.json",
        "source": {"kind": "commit-log", "path": "commits.log", "cycle": {"from": "base", "to": "c4"}},
        "aggregation": "sum",
        "clamp": true,
        "normalized": false,
        "solver": {"kind": "monte-carlo", "samples": 100, "seed": 7},
        "budget": {"fraction": "0.01", "anchor": "lower", "currency": "USD"},
        "rounding": "largest-remainder",
        "output": {"format": "markdown"}
    }"#;

    #[test]
    fn parses_full_config() {
        let c = RunConfig::from_json(BASE).unwrap();
        assert_eq!(c.solver, Solver::MonteCarlo { samples: 100, seed: 7, workers: None });
        assert_eq!(c.budget.as_ref().unwrap().exponent, 2);
        assert_eq!(c.budget.as_ref().unwrap().fraction, rational::parse_rational("1/100").unwrap());
        assert_eq!(c.output.format, ReportFormat::Markdown);
        assert!(matches!(c.source, Source::CommitLog { cycle: Cycle::Commits { .. }, .. }));
    }

    #[test]
    fn knobs_have_no_silent_defaults() {
        for knob in ["aggregation", "clamp", "normalized", "rounding", "solver"] {
            let mut v: serde_json::Value = serde_json::from_str(BASE).unwrap();
            v.as_object_mut().unwrap().remove(knob);
            assert!(RunConfig::from_json(&v.to_string()).is_err(), "{knob}");
        }
        let no_anchor = BASE.replace(r#""anchor": "lower", "#, "");
        assert!(RunConfig::from_json(&no_anchor).is_err());
        let no_seed = BASE.replace(r#", "seed": 7"#, "");
        assert!(RunConfig::from_json(&no_seed).is_err());
    }

    #[test]
    fn leaf_sources_need_a_tree() {
        let mut v: serde_json::Value = serde_json::from_str(BASE).unwrap();
        v.as_object_mut().unwrap().remove("risk_model");
        assert!(matches!(RunConfig::from_json(&v.to_string()), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_unknown_fields() {
        let extra = BASE.replace(r#""clamp": true"#, r#""clamp": true, "attribution_file": "x.json""#);
        assert!(RunConfig::from_json(&extra).is_err());
    }

    #[test]
    fn resolves_relative_paths() {
        let loaded = LoadedConfig { config: RunConfig::from_json(BASE).unwrap(), base_dir: PathBuf::from("/cfg") };
        assert_eq!(loaded.resolve(Path::new("a.json")), PathBuf::from("/cfg/a.json"));
        assert_eq!(loaded.resolve(Path::new("/abs.json")), PathBuf::from("/abs.json"));
        assert_eq!(loaded.missing_files().len(), 2);
    }
}
