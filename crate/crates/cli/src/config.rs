use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dominance_core::aggregate::Combo;
use dominance_core::ensemble::TrainConfig;
use dominance_core::pipeline::Strategy;
use dominance_core::sources::{FetchMode, PromptTemplate, SourceConfig};
use dominance_core::{AggregationParams, Source};
use serde::Deserialize;

use crate::args::{CommonArgs, ModeArg};

/// Per-source settings that a config file may override.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceOverrides {
    pub endpoint: Option<String>,
    pub credential_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_concurrency: Option<usize>,
    pub min_delay_ms: Option<u64>,
    pub max_retries: Option<u32>,
}

impl SourceOverrides {
    fn apply(&self, mut c: SourceConfig) -> SourceConfig {
        if let Some(v) = &self.endpoint {
            c.endpoint = v.clone();
        }
        if let Some(v) = &self.credential_env {
            c.credential_env = Some(v.clone());
        }
        if let Some(v) = self.timeout_secs {
            c.timeout_secs = v;
        }
        if let Some(v) = self.max_concurrency {
            c.max_concurrency = v;
        }
        if let Some(v) = self.min_delay_ms {
            c.min_delay_ms = v;
        }
        if let Some(v) = self.max_retries {
            c.max_retries = v;
        }
        c
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub signals: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub snippets: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub mode: Option<FetchMode>,
    pub seed: Option<u64>,
    pub sources: Option<Vec<Source>>,
    pub combos: Option<Vec<Combo>>,
    pub strategies: Option<Vec<Strategy>>,
    /// JSON file with a prompt template replacing the built-in one.
    pub prompt: Option<PathBuf>,
    pub params: Option<AggregationParams>,
    pub train: Option<TrainConfig>,
    pub kb: SourceOverrides,
    pub se: SourceOverrides,
    pub lm: SourceOverrides,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Everything a command needs, after merging file config and flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub signals: Option<PathBuf>,
    pub cache: PathBuf,
    pub manifest: Option<PathBuf>,
    pub snippets: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub mode: FetchMode,
    pub seed: Option<u64>,
    pub sources: Vec<Source>,
    pub combos: Option<Vec<Combo>>,
    pub strategies: Option<Vec<Strategy>>,
    pub params: AggregationParams,
    pub train: TrainConfig,
    pub prompt: PromptTemplate,
    /// KB, SE, LM order.
    pub source_configs: [SourceConfig; 3],
    pub json: bool,
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mode = if args.live {
            FetchMode::Live
        } else {
            match args.mode {
                Some(ModeArg::Live) => FetchMode::Live,
                Some(ModeArg::Replay) => FetchMode::Replay,
                None => file.mode.unwrap_or(FetchMode::Replay),
            }
        };
        let cache = args
            .cache
            .clone()
            .or(file.cache)
            .unwrap_or_else(|| PathBuf::from("cache"));
        let prompt = match &file.prompt {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading prompt {}", p.display()))?;
                PromptTemplate::from_json(&text).with_context(|| format!("parsing prompt {}", p.display()))?
            }
            None => PromptTemplate::default(),
        };
        let mut source_configs = Source::ALL.map(|s| SourceConfig::default_for(s, &cache));
        source_configs[0] = file.kb.apply(source_configs[0].clone());
        source_configs[1] = file.se.apply(source_configs[1].clone());
        source_configs[2] = file.lm.apply(source_configs[2].clone());
        source_configs[2].template_version = prompt.version();
        for c in &source_configs {
            c.validate()?;
        }

        let params = file.params.unwrap_or_default();
        params.validate()?;
        let seed = args.seed.or(file.seed);
        let mut train = file.train.unwrap_or_default();
        if let Some(seed) = seed {
            train.seed = seed;
        }
        train.validate()?;

        let sources = args
            .sources
            .clone()
            .or(file.sources)
            .unwrap_or_else(|| Source::ALL.to_vec());
        if sources.is_empty() {
            bail!("--sources must name at least one source");
        }
        Ok(RunConfig {
            dataset: args.dataset.clone().or(file.dataset),
            signals: args.signals.clone().or(file.signals),
            cache,
            manifest: args.manifest.clone().or(file.manifest),
            snippets: args.snippets.clone().or(file.snippets),
            model: args.model.clone().or(file.model),
            report: args.report.clone().or(file.report),
            mode,
            seed,
            sources,
            combos: args.combo.clone().or(file.combos),
            strategies: args.strategy.clone().or(file.strategies),
            params,
            train,
            prompt,
            source_configs,
            json: args.json,
        })
    }

    pub fn require_seed(&self, command: &str) -> Result<u64> {
        self.seed
            .with_context(|| format!("`{command}` needs --seed (or `seed` in the config file)"))
    }

    pub fn require_dataset(&self) -> Result<&Path> {
        self.dataset.as_deref().context("missing --dataset")
    }

    pub fn require_signals(&self) -> Result<&Path> {
        self.signals.as_deref().context("missing --signals")
    }

    pub fn manifest_path(&self) -> Option<PathBuf> {
        self.manifest
            .clone()
            .or_else(|| self.signals.as_ref().map(|s| s.with_extension("manifest.json")))
    }
}
