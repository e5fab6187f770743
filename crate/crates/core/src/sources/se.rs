//! Search-engine counts: the most confident quantity across ranked result
//! snippets.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ClassSpec, Scope, SubgroupScheme};
use crate::quantity::select_confident_count;
use crate::sources::http::{send_with_retries, LimitedTransport, Request, Transport};
use crate::sources::{scope_phrase, Answer, SignalSource, SourceConfig};

pub const TEMPLATE_VERSION: &str = "se-v1";
pub const MAX_SNIPPETS: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub rank: u32,
    pub text: String,
}

pub trait SnippetProvider: Send + Sync {
    fn snippets(&self, query: &str) -> Result<Vec<Snippet>>;
}

pub fn search_query(plural: &str, phrase: Option<&str>) -> String {
    match phrase {
        Some(p) => format!("how many {plural} are there in {p}"),
        None => format!("how many {plural} are there"),
    }
}

/// Fixture file name for a query: hex SHA-256 of the query text.
pub fn fixture_file_name(query: &str) -> String {
    let digest = Sha256::digest(query.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("{hex}.json")
}

/// Replays snippets from `{dir}/{sha256(query)}.json`.
pub struct FixtureSnippets {
    dir: PathBuf,
}

impl FixtureSnippets {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureSnippets { dir: dir.into() }
    }

    pub fn path_for(&self, query: &str) -> PathBuf {
        self.dir.join(fixture_file_name(query))
    }

    pub fn write(dir: &Path, query: &str, snippets: &[Snippet]) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(fixture_file_name(query));
        std::fs::write(&path, serde_json::to_string_pretty(snippets)? + "\n")?;
        Ok(path)
    }
}

impl SnippetProvider for FixtureSnippets {
    fn snippets(&self, query: &str) -> Result<Vec<Snippet>> {
        let path = self.path_for(query);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::Transport {
                timeout: false,
                message: format!("no snippet fixture for `{query}` ({})", path.display()),
            }),
            Err(e) => Err(e.into()),
        }
    }
}

/// Bing Web Search v7 style provider.
pub struct BingSnippets {
    config: SourceConfig,
    transport: LimitedTransport,
}

impl BingSnippets {
    pub fn new(config: SourceConfig, transport: Arc<dyn Transport>) -> Self {
        let transport = LimitedTransport::new(transport, config.min_delay());
        BingSnippets { config, transport }
    }
}

impl SnippetProvider for BingSnippets {
    fn snippets(&self, query: &str) -> Result<Vec<Snippet>> {
        let key = self.config.credential()?;
        let request = Request::Get {
            url: self.config.endpoint.clone(),
            query: vec![("q".into(), query.into()), ("count".into(), MAX_SNIPPETS.to_string())],
        };
        let headers: Vec<(String, String)> = key
            .into_iter()
            .map(|k| ("Ocp-Apim-Subscription-Key".to_string(), k))
            .collect();
        let resp = send_with_retries(
            &self.transport,
            &request,
            &headers,
            self.config.timeout(),
            self.config.max_retries,
        )?;
        if resp.status == 401 || resp.status == 403 {
            return Err(Error::MissingCredential(
                self.config.credential_env.clone().unwrap_or_default(),
            ));
        }
        if !resp.is_success() {
            return Err(Error::Transport {
                timeout: false,
                message: format!("status {}", resp.status),
            });
        }
        parse_search_response(&resp.body)
    }
}

pub fn parse_search_response(body: &str) -> Result<Vec<Snippet>> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| Error::MalformedResponse {
        source_name: "SE".into(),
        message: e.to_string(),
        body: body.chars().take(2000).collect(),
    })?;
    let Some(items) = v.pointer("/webPages/value").and_then(|x| x.as_array()) else {
        return Ok(Vec::new());
    };
    Ok(items
        .iter()
        .filter_map(|item| item.get("snippet").and_then(|s| s.as_str()))
        .enumerate()
        .map(|(i, text)| Snippet {
            rank: i as u32 + 1,
            text: text.to_string(),
        })
        .collect())
}

pub struct SeClient {
    config: SourceConfig,
    provider: Box<dyn SnippetProvider>,
}

impl SeClient {
    pub fn new(config: SourceConfig, provider: Box<dyn SnippetProvider>) -> Self {
        SeClient { config, provider }
    }
}

impl SignalSource for SeClient {
    fn config(&self) -> &SourceConfig {
        &self.config
    }

    fn fetch(&self, class: &ClassSpec, scope: &Scope, scheme: &SubgroupScheme) -> Result<Answer> {
        let query = search_query(&class.label_plural, scope_phrase(scope, scheme)?);
        let mut snippets = self.provider.snippets(&query)?;
        snippets.sort_by_key(|s| s.rank);
        snippets.truncate(MAX_SNIPPETS);
        let ranked: Vec<(u32, &str)> = snippets.iter().map(|s| (s.rank, s.text.as_str())).collect();
        let value = select_confident_count(&ranked)?;
        Ok(Answer {
            value,
            query,
            raw: serde_json::to_string(&snippets)?,
        })
    }
}
