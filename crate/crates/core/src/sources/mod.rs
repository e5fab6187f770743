//! Clients for the three signal sources and the cached, rate-limited
//! fetcher that fills a [`SignalTable`](crate::model::SignalTable).

pub mod cache;
pub mod fetch;
pub mod http;
pub mod kb;
pub mod lm;
pub mod se;

use std::path::PathBuf;
use std::time::Duration;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CardinalitySignal, ClassSpec, Provenance, Scope, Source, SubgroupScheme};

pub use cache::{Cache, CacheEntry};
pub use fetch::{fetch_all, FetchManifest, FetchMode, MissReason, MissRecord};
pub use http::{HttpResponse, LimitedTransport, RateLimiter, Request, ReqwestTransport, ScriptedTransport, Transport};
pub use kb::KbClient;
pub use lm::{LmClient, PromptTemplate};
pub use se::{BingSnippets, FixtureSnippets, SeClient, Snippet, SnippetProvider};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub source: Source,
    pub endpoint: String,
    /// Environment variable holding the API key, if the source needs one.
    pub credential_env: Option<String>,
    pub timeout_secs: u64,
    pub max_concurrency: usize,
    pub min_delay_ms: u64,
    pub max_retries: u32,
    pub cache_dir: PathBuf,
    pub template_version: String,
}

impl SourceConfig {
    pub fn default_for(source: Source, cache_dir: impl Into<PathBuf>) -> Self {
        let cache_dir = cache_dir.into();
        match source {
            Source::Kb => SourceConfig {
                source,
                endpoint: "https://query.wikidata.org/sparql".into(),
                credential_env: None,
                timeout_secs: 60,
                max_concurrency: 2,
                min_delay_ms: 1000,
                max_retries: 2,
                cache_dir,
                template_version: kb::TEMPLATE_VERSION.into(),
            },
            Source::Se => SourceConfig {
                source,
                endpoint: "https://api.bing.microsoft.com/v7.0/search".into(),
                credential_env: Some("BING_SEARCH_KEY".into()),
                timeout_secs: 20,
                max_concurrency: 2,
                min_delay_ms: 350,
                max_retries: 2,
                cache_dir,
                template_version: se::TEMPLATE_VERSION.into(),
            },
            Source::Lm => SourceConfig {
                source,
                endpoint: "https://api.openai.com/v1/completions".into(),
                credential_env: Some("OPENAI_API_KEY".into()),
                timeout_secs: 30,
                max_concurrency: 1,
                min_delay_ms: 1000,
                max_retries: 2,
                cache_dir,
                template_version: PromptTemplate::default().version(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_secs == 0 {
            return Err(Error::InvalidConfig(format!(
                "{}: timeout must be positive",
                self.source
            )));
        }
        if self.max_concurrency == 0 {
            return Err(Error::InvalidConfig(format!(
                "{}: concurrency must be at least 1",
                self.source
            )));
        }
        if self.template_version.is_empty() {
            return Err(Error::InvalidConfig(format!("{}: empty template version", self.source)));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn min_delay(&self) -> Duration {
        Duration::from_millis(self.min_delay_ms)
    }

    /// Read the credential from the environment.
    pub fn credential(&self) -> Result<Option<String>> {
        match &self.credential_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.trim().is_empty() => Ok(Some(v)),
                _ => Err(Error::MissingCredential(var.clone())),
            },
        }
    }
}

/// What a source said about one key.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    /// `None` when the response held no usable count.
    pub value: Option<f64>,
    pub query: String,
    pub raw: String,
}

pub trait SignalSource: Send + Sync {
    fn config(&self) -> &SourceConfig;

    /// Reason this key can never carry a signal; checked before the cache.
    fn unsupported(&self, _class: &ClassSpec, _scope: &Scope) -> Option<String> {
        None
    }

    /// Query the source. Transport failures are errors here; callers decide
    /// whether they are fatal.
    fn fetch(&self, class: &ClassSpec, scope: &Scope, scheme: &SubgroupScheme) -> Result<Answer>;
}

/// Subgroup phrase for a scope, `None` for the root.
pub fn scope_phrase<'a>(scope: &Scope, scheme: &'a SubgroupScheme) -> Result<Option<&'a str>> {
    match scope {
        Scope::Root => Ok(None),
        Scope::Subgroup(id) => scheme
            .get(id)
            .map(|s| Some(s.phrase.as_str()))
            .ok_or_else(|| Error::InvalidConfig(format!("subgroup `{id}` is not in scheme {}", scheme.name()))),
    }
}

/// Fetch one signal directly, without the cache. Network failures and
/// unsupported keys give `Ok(None)`; malformed responses and missing
/// credentials are errors.
pub fn count_signal(
    source: &dyn SignalSource,
    class: &ClassSpec,
    scope: &Scope,
    scheme: &SubgroupScheme,
) -> Result<Option<CardinalitySignal>> {
    if let Some(reason) = source.unsupported(class, scope) {
        log::debug!("{}/{}/{scope}: {reason}", source.config().source, class.id);
        return Ok(None);
    }
    match source.fetch(class, scope, scheme) {
        Ok(Answer {
            value: Some(value),
            query,
            raw,
        }) => Ok(Some(CardinalitySignal {
            value,
            source: source.config().source,
            scope: scope.clone(),
            retrieved_at: Utc::now(),
            provenance: Provenance {
                query,
                response_excerpt: raw.chars().take(500).collect(),
            },
        })),
        Ok(_) => Ok(None),
        Err(e @ Error::Transport { .. }) => {
            log::warn!("{}/{}/{scope}: {e}", source.config().source, class.id);
            Ok(None)
        }
        Err(e) => Err(e),
    }
}
