//! On-disk response cache: one JSON file per
//! `{root}/{source}/{template_version}/{class_id}/{scope}.json`.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Scope, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub source: Source,
    pub class_id: String,
    pub scope: Scope,
    pub template_version: String,
    /// `None` when the source answered but yielded no count.
    pub value: Option<f64>,
    pub query: String,
    pub raw: String,
    pub retrieved_at: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

fn check_component(what: &str, s: &str) -> Result<()> {
    let ok = !s.is_empty()
        && s != "."
        && s != ".."
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{what} `{s}` cannot be used as a cache path component"
        )))
    }
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Cache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, source: Source, template_version: &str, class_id: &str, scope: &Scope) -> Result<PathBuf> {
        let scope = scope.to_string();
        check_component("template version", template_version)?;
        check_component("class id", class_id)?;
        check_component("scope", &scope)?;
        Ok(self
            .root
            .join(source.as_str().to_ascii_lowercase())
            .join(template_version)
            .join(class_id)
            .join(format!("{scope}.json")))
    }

    pub fn load(
        &self,
        source: Source,
        template_version: &str,
        class_id: &str,
        scope: &Scope,
    ) -> Result<Option<CacheEntry>> {
        let path = self.path(source, template_version, class_id, scope)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let entry: CacheEntry = serde_json::from_str(&text)?;
        if entry.source != source
            || entry.template_version != template_version
            || entry.class_id != class_id
            || &entry.scope != scope
        {
            return Err(Error::InvalidConfig(format!(
                "cache file {} holds a different key",
                path.display()
            )));
        }
        Ok(Some(entry))
    }

    /// Write through a temporary file so readers never see a partial entry.
    pub fn store(&self, entry: &CacheEntry) -> Result<PathBuf> {
        let path = self.path(entry.source, &entry.template_version, &entry.class_id, &entry.scope)?;
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(entry)? + "\n")?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}
