//! Loading toolset directories, provider rule files and scenario scripts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dmoe_core::cold_storage::{ColdStorage, LoadError, ToolsetRecord};
use dmoe_core::kernel::{Kernel, KernelConfig, KernelError};
use dmoe_core::provider::{RuleError, ScriptRule, ScriptedProvider};
use dmoe_core::scenario::ScenarioScript;
use dmoe_core::tools::{ToolError, ToolFixture, ToolFixtures};
use dmoe_core::EventStore;
use serde::{Deserialize, Serialize};

pub const TOOLSET_SUFFIX: &str = ".mcp.json";

#[derive(Debug, thiserror::Error)]
pub enum SetupError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Registry(#[from] LoadError),
    #[error("{path}: {source}")]
    Rules { path: PathBuf, source: RuleError },
    #[error("{path}: {source}")]
    Tools { path: PathBuf, source: ToolError },
    #[error("{0}")]
    Kernel(#[from] KernelError),
    #[error("{0}")]
    Journal(#[from] crate::journal::JournalError),
}

/// A provider rule file: the rule table plus the canned tool outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RulesFile {
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub tool_results: Vec<ToolFixture>,
}

fn read(path: &Path) -> Result<String, SetupError> {
    fs::read_to_string(path).map_err(|source| SetupError::Io {
        path: path.into(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SetupError> {
    serde_json::from_str(&read(path)?).map_err(|source| SetupError::Json {
        path: path.into(),
        source,
    })
}

/// Every `*.mcp.json` in `dir`, in file-name order.
pub fn load_registry(dir: &Path) -> Result<ColdStorage, SetupError> {
    let entries = fs::read_dir(dir).map_err(|source| SetupError::Io {
        path: dir.into(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(TOOLSET_SUFFIX))
        })
        .collect();
    paths.sort();
    let mut records = Vec::new();
    for path in paths {
        let record: ToolsetRecord = serde_json::from_str(&read(&path)?).map_err(|e| {
            LoadError::Parse {
                source_name: path.display().to_string(),
                message: e.to_string(),
            }
        })?;
        records.push(record);
    }
    Ok(ColdStorage::from_records(records)?)
}

pub fn load_rules(path: &Path) -> Result<(ScriptedProvider, ToolFixtures), SetupError> {
    let file: RulesFile = parse(path)?;
    let provider = ScriptedProvider::new(file.rules).map_err(|source| SetupError::Rules {
        path: path.into(),
        source,
    })?;
    let fixtures = ToolFixtures::new(file.tool_results).map_err(|source| SetupError::Tools {
        path: path.into(),
        source,
    })?;
    Ok((provider, fixtures))
}

pub fn load_scenario(path: &Path) -> Result<ScenarioScript, SetupError> {
    parse(path)
}

/// Where a kernel's inputs come from.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSources {
    pub registry: PathBuf,
    pub rules: PathBuf,
    pub config: KernelConfig,
    /// Journal directory; `None` keeps the event log in memory.
    pub journal: Option<PathBuf>,
}

impl KernelSources {
    pub fn build(&self) -> Result<Kernel, SetupError> {
        let cold = load_registry(&self.registry)?;
        let (provider, fixtures) = load_rules(&self.rules)?;
        let store = match &self.journal {
            Some(dir) => crate::journal::open_store(dir)?,
            None => EventStore::new(),
        };
        Ok(Kernel::with_store(
            self.config.clone(),
            store,
            cold,
            Arc::new(provider),
            fixtures,
        )?)
    }
}

/// Sources for a scenario script, with its paths resolved against the
/// script's directory.
pub fn scenario_sources(script: &ScenarioScript, script_path: &Path) -> KernelSources {
    let base = script_path.parent().unwrap_or_else(|| Path::new("."));
    KernelSources {
        registry: base.join(&script.setup.registry),
        rules: base.join(&script.setup.rules),
        config: script.setup.kernel_config(),
        journal: None,
    }
}
