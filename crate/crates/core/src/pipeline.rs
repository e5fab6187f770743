//! Pair-level orchestration: signal table → per-source aggregation →
//! source ensembles → evaluation report.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_source, Combo, SourceAggregation};
use crate::dataset::{
    best_per_row, domain_breakdown, evaluate, generate_pairs, split_train_test, PairRecord, PredictionMap,
};
use crate::ensemble::{
    logreg_predict, majority_vote_sources, train_logreg, CvReport, FeatureVector, LogRegModel, Sample, TrainConfig,
};
use crate::error::{Error, Result};
use crate::model::{AggregationParams, ClassSpec, Prediction, SignalTable, Source, SubgroupScheme};
use crate::report::{EvaluationReport, GridRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    PerSource,
    MajorityVote,
    WeightedVote,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::PerSource, Strategy::MajorityVote, Strategy::WeightedVote];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::PerSource => "per-source",
            Strategy::MajorityVote => "majority-vote",
            Strategy::WeightedVote => "weighted-vote",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

/// Level-one aggregation of every source for one ordered class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAggregation {
    pub class_a: String,
    pub class_b: String,
    /// KB, SE, LM order.
    pub sources: [SourceAggregation; 3],
}

/// Aggregate one ordered pair. Sources outside `enabled` are treated as if
/// they returned nothing, so they abstain everywhere.
pub fn aggregate_pair(
    table: &SignalTable,
    class_a: &str,
    class_b: &str,
    scheme: &SubgroupScheme,
    params: &AggregationParams,
    enabled: &[Source],
) -> PairAggregation {
    let sources = Source::ALL.map(|s| {
        let on = enabled.contains(&s);
        aggregate_source(
            s,
            table.get(class_a, s).filter(|_| on),
            table.get(class_b, s).filter(|_| on),
            scheme,
            params,
        )
    });
    PairAggregation {
        class_a: class_a.to_string(),
        class_b: class_b.to_string(),
        sources,
    }
}

impl PairAggregation {
    pub fn source(&self, s: Source) -> &SourceAggregation {
        &self.sources[s.index()]
    }

    /// Per-source ensemble scores; a source with no signals scores 0.
    pub fn features(&self, combo: Combo) -> FeatureVector {
        FeatureVector(self.sources.map(|s| s.score(combo).score))
    }

    pub fn source_predictions(&self, combo: Combo, epsilon: f64) -> [Prediction; 3] {
        self.sources.map(|s| s.prediction(combo, epsilon))
    }

    pub fn majority_vote(&self, combo: Combo, epsilon: f64) -> Prediction {
        majority_vote_sources(self.source_predictions(combo, epsilon))
    }

    pub fn weighted_vote(&self, model: &LogRegModel, epsilon: f64) -> (Prediction, f64) {
        logreg_predict(model, &self.features(model.combo), epsilon)
    }
}

pub fn aggregate_pairs(
    table: &SignalTable,
    pairs: &[PairRecord],
    scheme: &SubgroupScheme,
    params: &AggregationParams,
    enabled: &[Source],
) -> Vec<PairAggregation> {
    pairs
        .iter()
        .map(|p| aggregate_pair(table, &p.class_a, &p.class_b, scheme, params, enabled))
        .collect()
}

pub fn training_samples(aggs: &[PairAggregation], pairs: &[PairRecord], combo: Combo) -> Vec<Sample> {
    aggs.iter()
        .zip(pairs)
        .map(|(agg, pair)| Sample {
            x: agg.features(combo),
            label: pair.gt_label,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub params: AggregationParams,
    pub seed: u64,
    /// Weighted-vote rows are scored on the held-out share of this split.
    pub train_fraction: f64,
    pub sources: Vec<Source>,
    pub strategies: Vec<Strategy>,
    /// Combo used for the per-domain breakdown.
    pub domain_combo: Combo,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            params: AggregationParams::default(),
            seed: 0,
            train_fraction: 0.8,
            sources: Source::ALL.to_vec(),
            strategies: vec![Strategy::PerSource, Strategy::MajorityVote],
            domain_combo: Combo::All,
        }
    }
}

fn prediction_map(pairs: &[PairRecord], preds: impl Iterator<Item = Prediction>) -> PredictionMap {
    pairs.iter().map(PairRecord::key).zip(preds).collect()
}

/// Score every requested strategy on the class pairs of `classes`.
pub fn evaluate_signals(
    classes: &[ClassSpec],
    table: &SignalTable,
    scheme: &SubgroupScheme,
    config: &EvalConfig,
    models: &BTreeMap<Combo, LogRegModel>,
) -> Result<EvaluationReport> {
    config.params.validate()?;
    let set = generate_pairs(classes);
    let pairs = &set.pairs;
    let aggs = aggregate_pairs(table, pairs, scheme, &config.params, &config.sources);
    let eps = config.params.score_epsilon;

    let mut grid = Vec::new();
    if config.strategies.contains(&Strategy::PerSource) {
        for source in Source::ALL {
            let mut cells = Vec::new();
            for combo in Combo::ALL {
                let map = prediction_map(pairs, aggs.iter().map(|a| a.source(source).prediction(combo, eps)));
                cells.push(Some(evaluate(&map, pairs)?));
            }
            grid.push(GridRow {
                strategy: Strategy::PerSource,
                source: source.as_str().to_string(),
                n: pairs.len(),
                cells,
            });
        }
    }
    if config.strategies.contains(&Strategy::MajorityVote) {
        let mut cells = Vec::new();
        for combo in Combo::ALL {
            let map = prediction_map(pairs, aggs.iter().map(|a| a.majority_vote(combo, eps)));
            cells.push(Some(evaluate(&map, pairs)?));
        }
        grid.push(GridRow {
            strategy: Strategy::MajorityVote,
            source: "all".into(),
            n: pairs.len(),
            cells,
        });
    }
    let mut n_test = None;
    if config.strategies.contains(&Strategy::WeightedVote) {
        if models.is_empty() {
            return Err(Error::InvalidConfig("weighted vote needs trained models".into()));
        }
        let (_, test) = split_train_test(pairs, config.train_fraction, config.seed)?;
        let test_aggs = aggregate_pairs(table, &test, scheme, &config.params, &config.sources);
        n_test = Some(test.len());
        let mut cells = Vec::new();
        for combo in Combo::ALL {
            let cell = match models.get(&combo) {
                Some(model) => {
                    if model.seed != config.seed {
                        log::warn!(
                            "model for {combo} was trained with seed {}, evaluating with seed {}",
                            model.seed,
                            config.seed
                        );
                    }
                    let map = prediction_map(&test, test_aggs.iter().map(|a| a.weighted_vote(model, eps).0));
                    Some(evaluate(&map, &test)?)
                }
                None => None,
            };
            cells.push(cell);
        }
        grid.push(GridRow {
            strategy: Strategy::WeightedVote,
            source: "all".into(),
            n: test.len(),
            cells,
        });
    }

    let mut domains = Vec::new();
    for source in Source::ALL {
        let map = prediction_map(
            pairs,
            aggs.iter()
                .map(|a| a.source(source).prediction(config.domain_combo, eps)),
        );
        domains.push((source.as_str().to_string(), domain_breakdown(&map, pairs)?));
    }
    let best = best_per_row(&domains);

    Ok(EvaluationReport {
        n_classes: classes.len(),
        n_pairs: pairs.len(),
        n_in_domain: pairs.iter().filter(|p| p.in_domain()).count(),
        n_excluded: set.excluded.len(),
        n_test,
        seed: config.seed,
        grid,
        domain_combo: config.domain_combo,
        domains,
        best,
    })
}

/// Train one weighted-vote model per combo on the training share of the
/// seeded split.
pub fn train_models(
    classes: &[ClassSpec],
    table: &SignalTable,
    scheme: &SubgroupScheme,
    params: &AggregationParams,
    sources: &[Source],
    combos: &[Combo],
    config: &TrainConfig,
) -> Result<Vec<(LogRegModel, CvReport)>> {
    config.validate()?;
    params.validate()?;
    let set = generate_pairs(classes);
    let (train, _) = split_train_test(&set.pairs, config.train_fraction, config.seed)?;
    let aggs = aggregate_pairs(table, &train, scheme, params, sources);
    combos
        .iter()
        .map(|&combo| train_logreg(&training_samples(&aggs, &train, combo), combo, config))
        .collect()
}
