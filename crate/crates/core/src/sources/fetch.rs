//! Fill a signal table for every (class, source, scope) key, reusing the
//! cache and recording every key left without a value.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassSpec, Scope, SignalTable, Source, SubgroupScheme};
use crate::sources::cache::{Cache, CacheEntry};
use crate::sources::{Answer, SignalSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FetchMode {
    /// Cache misses go to the network.
    Live,
    /// Only the cache is read; misses stay missing.
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissReason {
    Offline,
    Failed,
    Unsupported,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissRecord {
    pub source: Source,
    pub class_id: String,
    pub scope: Scope,
    pub reason: MissReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchManifest {
    pub mode: FetchMode,
    pub requested: usize,
    pub cache_hits: usize,
    pub fetched: usize,
    pub misses: Vec<MissRecord>,
}

impl FetchManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

enum Slot {
    Hit(Option<f64>),
    Miss(MissReason, String),
    Pending,
}

/// Run every key through cache → (live) source. Keys are merged in class,
/// source, scope order so the table and manifest do not depend on thread
/// timing. Nothing here is fatal: failures land in the manifest.
pub fn fetch_all(
    classes: &[ClassSpec],
    scheme: &SubgroupScheme,
    sources: &[&dyn SignalSource],
    cache: &Cache,
    mode: FetchMode,
) -> (SignalTable, FetchManifest) {
    let scopes: Vec<Scope> = std::iter::once(Scope::Root)
        .chain(scheme.ids().map(Scope::subgroup))
        .collect();

    // per source: keys as (class index, scope index) and their slots
    let mut plan: Vec<Vec<(usize, usize, Slot)>> = Vec::with_capacity(sources.len());
    let mut cache_hits = 0;
    for src in sources {
        let cfg = src.config();
        let mut keys = Vec::with_capacity(classes.len() * scopes.len());
        for (ci, class) in classes.iter().enumerate() {
            for (si, scope) in scopes.iter().enumerate() {
                let slot = if let Some(reason) = src.unsupported(class, scope) {
                    Slot::Miss(MissReason::Unsupported, reason)
                } else {
                    match cache.load(cfg.source, &cfg.template_version, &class.id, scope) {
                        Ok(Some(entry)) => {
                            cache_hits += 1;
                            Slot::Hit(entry.value)
                        }
                        Ok(None) if mode == FetchMode::Replay => Slot::Miss(MissReason::Offline, "not cached".into()),
                        Ok(None) => Slot::Pending,
                        Err(e) => Slot::Miss(MissReason::Failed, format!("unreadable cache entry: {e}")),
                    }
                };
                keys.push((ci, si, slot));
            }
        }
        plan.push(keys);
    }

    // live requests: one bounded worker pool per source, all sources at once
    let results: Vec<Vec<(usize, Result<Answer>)>> = thread::scope(|s| {
        let handles: Vec<_> = sources
            .iter()
            .zip(&plan)
            .map(|(src, keys)| {
                let pending: Vec<usize> = (0..keys.len())
                    .filter(|&k| matches!(keys[k].2, Slot::Pending))
                    .collect();
                let classes = &classes;
                let scopes = &scopes;
                s.spawn(move || {
                    let next = AtomicUsize::new(0);
                    let out = Mutex::new(Vec::with_capacity(pending.len()));
                    let workers = src.config().max_concurrency.clamp(1, pending.len().max(1));
                    thread::scope(|inner| {
                        for _ in 0..workers {
                            inner.spawn(|| loop {
                                let i = next.fetch_add(1, Ordering::Relaxed);
                                let Some(&k) = pending.get(i) else { break };
                                let (ci, si, _) = keys[k];
                                let r = src.fetch(&classes[ci], &scopes[si], scheme);
                                out.lock().expect("results poisoned").push((k, r));
                            });
                        }
                    });
                    let mut out = out.into_inner().expect("results poisoned");
                    out.sort_by_key(|(k, _)| *k);
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fetch worker panicked"))
            .collect()
    });

    let mut table = SignalTable::new();
    let mut misses = Vec::new();
    let mut fetched = 0;
    let now = Utc::now();
    for ((src, keys), fresh) in sources.iter().zip(plan).zip(results) {
        let cfg = src.config();
        let mut fresh = fresh.into_iter().peekable();
        for (k, (ci, si, slot)) in keys.into_iter().enumerate() {
            let class = &classes[ci];
            let scope = &scopes[si];
            let slot = match slot {
                Slot::Pending => {
                    let (_, r) = fresh
                        .next_if(|(fk, _)| *fk == k)
                        .expect("every pending key was fetched");
                    match r {
                        Ok(answer) => {
                            fetched += 1;
                            let entry = CacheEntry {
                                source: cfg.source,
                                class_id: class.id.clone(),
                                scope: scope.clone(),
                                template_version: cfg.template_version.clone(),
                                value: answer.value,
                                query: answer.query,
                                raw: answer.raw,
                                retrieved_at: now,
                            };
                            if let Err(e) = cache.store(&entry) {
                                log::warn!("could not cache {}/{}/{scope}: {e}", cfg.source, class.id);
                            }
                            Slot::Hit(entry.value)
                        }
                        Err(e) => {
                            let level = if matches!(e, Error::MissingCredential(_)) {
                                log::Level::Debug
                            } else {
                                log::Level::Warn
                            };
                            log::log!(level, "{}/{}/{scope}: {e}", cfg.source, class.id);
                            Slot::Miss(MissReason::Failed, e.to_string())
                        }
                    }
                }
                other => other,
            };
            let value = match slot {
                Slot::Hit(Some(v)) if v.is_finite() && v >= 0.0 => Some(v),
                Slot::Hit(Some(v)) => {
                    misses.push(miss(
                        cfg.source,
                        class,
                        scope,
                        MissReason::Failed,
                        format!("invalid value {v}"),
                    ));
                    None
                }
                Slot::Hit(None) => {
                    misses.push(miss(
                        cfg.source,
                        class,
                        scope,
                        MissReason::Empty,
                        "no count in response".into(),
                    ));
                    None
                }
                Slot::Miss(reason, detail) => {
                    misses.push(miss(cfg.source, class, scope, reason, detail));
                    None
                }
                Slot::Pending => unreachable!("pending keys are resolved above"),
            };
            table.set(&class.id, cfg.source, scope, value);
        }
    }

    let manifest = FetchManifest {
        mode,
        requested: sources.len() * classes.len() * scopes.len(),
        cache_hits,
        fetched,
        misses,
    };
    log::info!(
        "fetch: {} keys, {} cached, {} fetched, {} unfilled",
        manifest.requested,
        manifest.cache_hits,
        manifest.fetched,
        manifest.misses.len()
    );
    (table, manifest)
}

fn miss(source: Source, class: &ClassSpec, scope: &Scope, reason: MissReason, detail: String) -> MissRecord {
    MissRecord {
        source,
        class_id: class.id.clone(),
        scope: scope.clone(),
        reason,
        detail,
    }
}
