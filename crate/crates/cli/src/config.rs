use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use mdqa::pipeline::RunConfig;

use crate::ConfigOverrides;

/// `[providers]` table of a config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSettings {
    pub completion_url: Option<String>,
    pub completion_model: Option<String>,
    pub rescore_url: Option<String>,
    pub embed_url: Option<String>,
    pub api_key_env: Option<String>,
}

/// Reads a config file: run configuration fields at the top level plus an
/// optional `[providers]` table.
pub fn read_config_file(path: &Path) -> Result<(RunConfig, ProviderSettings)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut table: toml::Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;
    let providers = match table.remove("providers") {
        Some(v) => v.try_into().with_context(|| format!("{}: [providers]", path.display()))?,
        None => ProviderSettings::default(),
    };
    let run: RunConfig =
        toml::Value::Table(table).try_into().with_context(|| format!("invalid run configuration in {}", path.display()))?;
    Ok((run, providers))
}

pub fn provider_settings(path: Option<&Path>) -> Result<ProviderSettings> {
    match path {
        Some(p) => Ok(read_config_file(p)?.1),
        None => Ok(ProviderSettings::default()),
    }
}

/// Built-in defaults, then the config file, then flags.
pub fn resolve(overrides: &ConfigOverrides) -> Result<(RunConfig, ProviderSettings)> {
    let (mut config, providers) = match &overrides.config {
        Some(path) => read_config_file(path)?,
        None => (RunConfig::default(), ProviderSettings::default()),
    };
    let o = overrides;
    if let Some(v) = o.context_source {
        config.context_source = v;
    }
    if let Some(v) = o.decompose {
        config.decomposition_enabled = v;
    }
    if let Some(v) = o.cot {
        config.cot = v;
    }
    if let Some(v) = o.shots {
        config.shots = v;
    }
    if let Some(v) = o.prompt_mode {
        config.prompt_mode = v;
    }
    if let Some(v) = o.bm25_depth {
        config.bm25_depth = v;
    }
    if let Some(v) = o.contexts_per_question {
        config.contexts_per_question = v;
    }
    if let Some(v) = o.model_limit {
        config.budget.model_limit = v;
    }
    if let Some(v) = o.reserved_output {
        config.budget.reserved_output = v;
    }
    if let Some(v) = o.parallelism {
        config.parallelism = v;
    }
    if let Err(e) = config.validate() {
        bail!("{e}");
    }
    Ok((config, providers))
}
