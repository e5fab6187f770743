use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use dominance_core::aggregate::Combo;
use dominance_core::dataset::load_ground_truth;
use dominance_core::ensemble::{CvReport, LogRegModel};
use dominance_core::pipeline::{aggregate_pair, evaluate_signals, train_models, EvalConfig, PairAggregation, Strategy};
use dominance_core::report::EvaluationReport;
use dominance_core::sources::{
    fetch_all, BingSnippets, Cache, FetchManifest, FetchMode, FixtureSnippets, HttpResponse, KbClient, LmClient,
    Request, ReqwestTransport, SeClient, SignalSource, SnippetProvider, Transport,
};
use dominance_core::{ClassSpec, Domain, Prediction, SignalTable, Source, SubgroupScheme};
use serde::Serialize;

use crate::config::RunConfig;

/// Stand-in transport for replay mode: any request is a failure.
struct OfflineTransport;

impl Transport for OfflineTransport {
    fn send(&self, _: &Request, _: &[(String, String)], _: Duration) -> dominance_core::Result<HttpResponse> {
        Err(dominance_core::Error::Transport {
            timeout: false,
            message: "replay mode forbids network access".into(),
        })
    }
}

/// Source clients for the enabled sources, in KB, SE, LM order.
fn build_sources(rc: &RunConfig) -> Result<Vec<Box<dyn SignalSource>>> {
    let transport: Arc<dyn Transport> = match rc.mode {
        FetchMode::Live => Arc::new(ReqwestTransport::new()?),
        FetchMode::Replay => Arc::new(OfflineTransport),
    };
    let [kb, se, lm] = rc.source_configs.clone();
    let mut out: Vec<Box<dyn SignalSource>> = Vec::new();
    for source in Source::ALL {
        if !rc.sources.contains(&source) {
            continue;
        }
        match source {
            Source::Kb => out.push(Box::new(KbClient::new(kb.clone(), transport.clone()))),
            Source::Se => {
                let provider: Box<dyn SnippetProvider> = match &rc.snippets {
                    Some(dir) => Box::new(FixtureSnippets::new(dir)),
                    None => Box::new(BingSnippets::new(se.clone(), transport.clone())),
                };
                out.push(Box::new(SeClient::new(se.clone(), provider)));
            }
            Source::Lm => out.push(Box::new(LmClient::new(
                lm.clone(),
                rc.prompt.clone(),
                transport.clone(),
            ))),
        }
    }
    Ok(out)
}

fn collect(rc: &RunConfig, classes: &[ClassSpec], scheme: &SubgroupScheme) -> Result<(SignalTable, FetchManifest)> {
    let clients = build_sources(rc)?;
    let refs: Vec<&dyn SignalSource> = clients.iter().map(|c| c.as_ref()).collect();
    let cache = Cache::new(&rc.cache);
    Ok(fetch_all(classes, scheme, &refs, &cache, rc.mode))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(rc: &RunConfig) -> Result<Vec<ClassSpec>> {
    let path = rc.require_dataset()?;
    load_ground_truth(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_signals(rc: &RunConfig) -> Result<SignalTable> {
    let path = rc.require_signals()?;
    let text = fs::read_to_string(path).with_context(|| format!("reading signals {}", path.display()))?;
    SignalTable::from_json(&text).with_context(|| format!("parsing signals {}", path.display()))
}

/// Models from `--model`: a single model file, or a directory of `{combo}.json`.
pub fn load_models(path: &Path) -> Result<BTreeMap<Combo, LogRegModel>> {
    let read = |p: &Path| -> Result<LogRegModel> {
        let text = fs::read_to_string(p).with_context(|| format!("reading model {}", p.display()))?;
        LogRegModel::from_json(&text).with_context(|| format!("parsing model {}", p.display()))
    };
    let mut models = BTreeMap::new();
    if path.is_file() {
        let m = read(path)?;
        models.insert(m.combo, m);
    } else if path.is_dir() {
        for combo in Combo::ALL {
            let p = model_path(path, combo);
            if p.is_file() {
                let m = read(&p)?;
                if m.combo != combo {
                    bail!("{} holds a model for combo {}", p.display(), m.combo);
                }
                models.insert(combo, m);
            }
        }
    }
    if models.is_empty() {
        bail!("no model found at --model {}", path.display());
    }
    Ok(models)
}

pub fn model_path(dir: &Path, combo: Combo) -> PathBuf {
    dir.join(format!("{}.json", combo.as_str()))
}

pub fn fetch(rc: &RunConfig) -> Result<String> {
    let classes = load_dataset(rc)?;
    let signals = rc.require_signals()?.to_path_buf();
    let scheme = SubgroupScheme::g20();
    let (table, manifest) = collect(rc, &classes, &scheme)?;
    write_file(&signals, &table.to_json()?)?;
    let manifest_path = rc.manifest_path().expect("signals path is set");
    write_file(&manifest_path, &manifest.to_json()?)?;
    if rc.json {
        return Ok(manifest.to_json()?);
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} keys requested ({} mode): {} cache hits, {} fetched, {} missing",
        manifest.requested,
        mode_name(manifest.mode),
        manifest.cache_hits,
        manifest.fetched,
        manifest.misses.len()
    );
    let _ = writeln!(out, "signals: {}", signals.display());
    let _ = writeln!(out, "manifest: {}", manifest_path.display());
    Ok(out)
}

fn mode_name(mode: FetchMode) -> &'static str {
    match mode {
        FetchMode::Live => "live",
        FetchMode::Replay => "replay",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceBreakdown {
    pub source: Source,
    pub root_a: Option<f64>,
    pub root_b: Option<f64>,
    pub root: Prediction,
    pub majority: Prediction,
    pub majority_ratio_gt: f64,
    pub majority_ratio_lt: f64,
    pub n_paired: usize,
    pub ttest: Prediction,
    pub ttest_p: f64,
    pub score: f64,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictOutput {
    pub class_a: String,
    pub class_b: String,
    pub combo: Combo,
    pub strategy: Strategy,
    pub sources: Vec<SourceBreakdown>,
    pub verdict: Prediction,
    /// Plural label of the larger class, or "abstain".
    pub winner: String,
    /// P(A > B) from the weighted vote.
    pub probability: Option<f64>,
}

impl PredictOutput {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} vs {} (combo {}, {})",
            self.class_a, self.class_b, self.combo, self.strategy
        );
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| v.to_string());
        let mut rows: Vec<Vec<String>> = vec![[
            "source", "root_a", "root_b", "root", "maj", "ratio_gt", "ratio_lt", "ttest", "p", "score", "pred",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()];
        for s in &self.sources {
            rows.push(vec![
                s.source.to_string(),
                opt(s.root_a),
                opt(s.root_b),
                s.root.to_string(),
                s.majority.to_string(),
                s.majority_ratio_gt.to_string(),
                s.majority_ratio_lt.to_string(),
                s.ttest.to_string(),
                s.ttest_p.to_string(),
                s.score.to_string(),
                s.prediction.to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        for row in &rows {
            let line: Vec<String> = row.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        if let Some(p) = self.probability {
            let _ = writeln!(out, "P(A > B) = {p}");
        }
        let _ = writeln!(out, "verdict: {} ({})", self.winner, self.verdict);
        if self.verdict.is_abstain() {
            let _ = writeln!(out, "the sources do not settle which class is larger; abstaining");
        }
        out
    }
}

fn resolve_class(dataset: &[ClassSpec], id: &str, phrase: Option<&str>) -> Result<ClassSpec> {
    if let Some(c) = dataset.iter().find(|c| c.id == id) {
        if phrase.is_some() {
            log::warn!("class `{id}` is in the dataset; its phrase flag is ignored");
        }
        return Ok(c.clone());
    }
    let Some(phrase) = phrase.map(str::trim).filter(|p| !p.is_empty()) else {
        bail!("unknown class `{id}`: pass --phrase-a/--phrase-b with its plural label");
    };
    let class = ClassSpec {
        id: id.to_string(),
        label_singular: phrase.to_string(),
        label_plural: phrase.to_string(),
        // no KB id, so the domain only labels the class
        domain: Domain::ManMadeObject,
        kb_entity_id: None,
        gt_cardinality: None,
    };
    class.validate()?;
    Ok(class)
}

pub fn predict(
    rc: &RunConfig,
    class_a: &str,
    class_b: &str,
    phrase_a: Option<&str>,
    phrase_b: Option<&str>,
) -> Result<String> {
    let dataset = match &rc.dataset {
        Some(p) => load_ground_truth(p).with_context(|| format!("loading dataset {}", p.display()))?,
        None => Vec::new(),
    };
    let a = resolve_class(&dataset, class_a, phrase_a)?;
    let b = resolve_class(&dataset, class_b, phrase_b)?;
    if a.id == b.id {
        bail!("compare two different classes");
    }
    let scheme = SubgroupScheme::g20();
    let table = match &rc.signals {
        Some(_) => load_signals(rc)?,
        None => collect(rc, &[a.clone(), b.clone()], &scheme)?.0,
    };
    let combo = rc
        .combos
        .as_ref()
        .and_then(|c| c.first().copied())
        .unwrap_or(Combo::All);
    let strategy = match rc.strategies.as_deref() {
        None | Some([]) => Strategy::MajorityVote,
        Some([s]) => *s,
        Some(_) => bail!("predict takes a single --strategy"),
    };
    let agg = aggregate_pair(&table, &a.id, &b.id, &scheme, &rc.params, &rc.sources);
    let output = predict_output(&agg, &table, &a, &b, combo, strategy, rc)?;
    if rc.json {
        Ok(serde_json::to_string_pretty(&output)? + "\n")
    } else {
        Ok(output.to_text())
    }
}

fn predict_output(
    agg: &PairAggregation,
    table: &SignalTable,
    a: &ClassSpec,
    b: &ClassSpec,
    combo: Combo,
    strategy: Strategy,
    rc: &RunConfig,
) -> Result<PredictOutput> {
    let eps = rc.params.score_epsilon;
    let root = |id: &str, s: Source| {
        table
            .get(id, s)
            .and_then(|x| x.root)
            .filter(|_| rc.sources.contains(&s))
    };
    let sources = Source::ALL
        .iter()
        .filter(|s| rc.sources.contains(s))
        .map(|&s| {
            let sa = agg.source(s);
            SourceBreakdown {
                source: s,
                root_a: root(&a.id, s),
                root_b: root(&b.id, s),
                root: sa.o_root,
                majority: sa.majority.prediction,
                majority_ratio_gt: sa.majority.ratio_gt,
                majority_ratio_lt: sa.majority.ratio_lt,
                n_paired: sa.majority.n_paired,
                ttest: sa.ttest.prediction,
                ttest_p: sa.ttest.result.p,
                score: sa.score(combo).score,
                prediction: sa.prediction(combo, eps),
            }
        })
        .collect::<Vec<_>>();
    let (verdict, probability, combo) = match strategy {
        Strategy::MajorityVote => (agg.majority_vote(combo, eps), None, combo),
        Strategy::PerSource => match rc.sources.as_slice() {
            [s] => (agg.source(*s).prediction(combo, eps), None, combo),
            _ => bail!("the per-source strategy needs exactly one entry in --sources"),
        },
        Strategy::WeightedVote => {
            let dir = rc.model.as_deref().context("the weighted vote needs --model")?;
            let models = load_models(dir)?;
            let model = models
                .get(&combo)
                .or_else(|| (models.len() == 1).then(|| models.values().next().unwrap()))
                .with_context(|| format!("no model for combo {combo} under --model {}", dir.display()))?;
            let (p, prob) = agg.weighted_vote(model, eps);
            (p, Some(prob), model.combo)
        }
    };
    let winner = match verdict {
        Prediction::Greater => a.label_plural.clone(),
        Prediction::Smaller => b.label_plural.clone(),
        Prediction::Abstain => "abstain".into(),
    };
    Ok(PredictOutput {
        class_a: a.id.clone(),
        class_b: b.id.clone(),
        combo,
        strategy,
        sources,
        verdict,
        winner,
        probability,
    })
}

pub fn evaluate(rc: &RunConfig) -> Result<(EvaluationReport, String)> {
    let seed = rc.require_seed("evaluate")?;
    let classes = load_dataset(rc)?;
    let table = load_signals(rc)?;
    let strategies = match &rc.strategies {
        Some(s) => s.clone(),
        None if rc.model.is_some() => Strategy::ALL.to_vec(),
        None => vec![Strategy::PerSource, Strategy::MajorityVote],
    };
    let models = if strategies.contains(&Strategy::WeightedVote) {
        let dir = rc.model.as_deref().context("the weighted vote needs --model")?;
        load_models(dir)?
    } else {
        BTreeMap::new()
    };
    let domain_combo = match rc.combos.as_deref() {
        Some([c]) => *c,
        _ => Combo::All,
    };
    let config = EvalConfig {
        params: rc.params,
        seed,
        train_fraction: rc.train.train_fraction,
        sources: rc.sources.clone(),
        strategies,
        domain_combo,
    };
    let report = evaluate_signals(&classes, &table, &SubgroupScheme::g20(), &config, &models)?;
    let text = report.to_text();
    if let Some(dir) = &rc.report {
        write_file(&dir.join("report.txt"), &text)?;
        write_file(&dir.join("report.csv"), &report.to_csv()?)?;
        write_file(&dir.join("report.json"), &report.to_json()?)?;
    }
    let out = if rc.json { report.to_json()? } else { text };
    Ok((report, out))
}

pub fn train(rc: &RunConfig) -> Result<(Vec<(LogRegModel, CvReport)>, String)> {
    rc.require_seed("train")?;
    let dir = rc
        .model
        .as_deref()
        .context("`train` needs --model DIR for the model files")?;
    let classes = load_dataset(rc)?;
    let table = load_signals(rc)?;
    let combos = rc.combos.clone().unwrap_or_else(|| Combo::ALL.to_vec());
    let trained = train_models(
        &classes,
        &table,
        &SubgroupScheme::g20(),
        &rc.params,
        &rc.sources,
        &combos,
        &rc.train,
    )?;
    let mut out = String::new();
    for (model, cv) in &trained {
        write_file(&model_path(dir, model.combo), &model.to_json()?)?;
        let best = cv
            .scores
            .iter()
            .find(|s| s.lambda == cv.selected_lambda)
            .map_or(0.0, |s| s.mean_accuracy);
        let _ = writeln!(
            out,
            "{}: lambda {} (cv accuracy {}), weights KB {} SE {} LM {}",
            model.combo, model.lambda, best, model.weights[0], model.weights[1], model.weights[2]
        );
    }
    let reports: Vec<&CvReport> = trained.iter().map(|(_, cv)| cv).collect();
    let cv_json = serde_json::to_string_pretty(&reports)? + "\n";
    write_file(&dir.join("cv_report.json"), &cv_json)?;
    if rc.json {
        out = cv_json;
    }
    Ok((trained, out))
}
