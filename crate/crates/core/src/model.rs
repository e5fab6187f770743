//! Domain types shared by every stage of the estimator: classes, subgroup
//! schemes, raw cardinality signals, the per-class signal table and the
//! trinary prediction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the six dataset domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "creative work")]
    CreativeWork,
    #[serde(rename = "geographical entity")]
    GeographicalEntity,
    #[serde(rename = "man-made object")]
    ManMadeObject,
    #[serde(rename = "occupation")]
    Occupation,
    #[serde(rename = "organization")]
    Organization,
    #[serde(rename = "species")]
    Species,
}

impl Domain {
    pub const ALL: [Domain; 6] = [
        Domain::CreativeWork,
        Domain::GeographicalEntity,
        Domain::ManMadeObject,
        Domain::Occupation,
        Domain::Organization,
        Domain::Species,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::CreativeWork => "creative work",
            Domain::GeographicalEntity => "geographical entity",
            Domain::ManMadeObject => "man-made object",
            Domain::Occupation => "occupation",
            Domain::Organization => "organization",
            Domain::Species => "species",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown domain `{s}`")))
    }
}

/// An entity class such as "rivers" or "physicists".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub id: String,
    pub label_singular: String,
    pub label_plural: String,
    pub domain: Domain,
    pub kb_entity_id: Option<String>,
    pub gt_cardinality: Option<u64>,
}

impl ClassSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidConfig("class id is empty".into()));
        }
        if self.label_plural.trim().is_empty() {
            return Err(Error::InvalidConfig(format!(
                "class `{}` has an empty plural label",
                self.id
            )));
        }
        if self.gt_cardinality == Some(0) {
            return Err(Error::InvalidConfig(format!(
                "class `{}` has ground-truth cardinality 0",
                self.id
            )));
        }
        Ok(())
    }
}

/// A single orthogonal slice of a class, e.g. one country.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgroup {
    pub id: String,
    /// Phrase used in natural-language questions ("in {phrase}").
    pub phrase: String,
    /// Knowledge-base identifier of the country item.
    pub kb_entity_id: String,
}

impl Subgroup {
    fn new(id: &str, phrase: &str, kb_entity_id: &str) -> Self {
        Subgroup {
            id: id.to_string(),
            phrase: phrase.to_string(),
            kb_entity_id: kb_entity_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupScheme {
    name: String,
    subgroups: Vec<Subgroup>,
}

impl SubgroupScheme {
    pub fn new(name: impl Into<String>, subgroups: Vec<Subgroup>) -> Result<Self> {
        if subgroups.is_empty() {
            return Err(Error::InvalidConfig("subgroup scheme is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for sg in &subgroups {
            if sg.id.is_empty() || sg.id == "root" {
                return Err(Error::InvalidConfig(format!("`{}` cannot be a subgroup id", sg.id)));
            }
            if !seen.insert(sg.id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate subgroup id `{}`", sg.id)));
            }
        }
        Ok(SubgroupScheme {
            name: name.into(),
            subgroups,
        })
    }

    /// The 19 sovereign G20 member states. The EU seat is left out so that
    /// no entity is counted in two subgroups.
    pub fn g20() -> Self {
        let subgroups = vec![
            Subgroup::new("AR", "Argentina", "Q414"),
            Subgroup::new("AU", "Australia", "Q408"),
            Subgroup::new("BR", "Brazil", "Q155"),
            Subgroup::new("CA", "Canada", "Q16"),
            Subgroup::new("CN", "China", "Q148"),
            Subgroup::new("FR", "France", "Q142"),
            Subgroup::new("DE", "Germany", "Q183"),
            Subgroup::new("IN", "India", "Q668"),
            Subgroup::new("ID", "Indonesia", "Q252"),
            Subgroup::new("IT", "Italy", "Q38"),
            Subgroup::new("JP", "Japan", "Q17"),
            Subgroup::new("KR", "South Korea", "Q884"),
            Subgroup::new("MX", "Mexico", "Q96"),
            Subgroup::new("RU", "Russia", "Q159"),
            Subgroup::new("SA", "Saudi Arabia", "Q851"),
            Subgroup::new("ZA", "South Africa", "Q258"),
            Subgroup::new("TR", "Turkey", "Q43"),
            Subgroup::new("GB", "the United Kingdom", "Q145"),
            Subgroup::new("US", "the United States", "Q30"),
        ];
        SubgroupScheme::new("G20", subgroups).expect("static scheme is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn subgroups(&self) -> &[Subgroup] {
        &self.subgroups
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.subgroups.iter().map(|s| s.id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&Subgroup> {
        self.subgroups.iter().find(|s| s.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.subgroups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgroups.is_empty()
    }
}

impl Default for SubgroupScheme {
    fn default() -> Self {
        SubgroupScheme::g20()
    }
}

/// Signal source kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "KB")]
    Kb,
    #[serde(rename = "SE")]
    Se,
    #[serde(rename = "LM")]
    Lm,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Kb, Source::Se, Source::Lm];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Kb => "KB",
            Source::Se => "SE",
            Source::Lm => "LM",
        }
    }

    /// Position in the (KB, SE, LM) feature order.
    pub fn index(self) -> usize {
        match self {
            Source::Kb => 0,
            Source::Se => 1,
            Source::Lm => 2,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kb" => Ok(Source::Kb),
            "se" => Ok(Source::Se),
            "lm" => Ok(Source::Lm),
            other => Err(Error::InvalidConfig(format!("unknown source `{other}`"))),
        }
    }
}

/// Whole-class count or one subgroup.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Root,
    Subgroup(String),
}

impl Scope {
    pub fn subgroup(id: impl Into<String>) -> Self {
        Scope::Subgroup(id.into())
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Root => f.write_str("root"),
            Scope::Subgroup(id) => f.write_str(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub query: String,
    pub response_excerpt: String,
}

/// One count estimate returned by a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalitySignal {
    pub value: f64,
    pub source: Source,
    pub scope: Scope,
    pub retrieved_at: DateTime<Utc>,
    pub provenance: Provenance,
}

/// Root and subgroup slots of one class under one source. `None` means the
/// source gave no answer; `Some(0.0)` means it answered zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceSignals {
    pub root: Option<f64>,
    pub subgroups: BTreeMap<String, Option<f64>>,
}

impl SourceSignals {
    pub fn subgroup(&self, id: &str) -> Option<f64> {
        self.subgroups.get(id).copied().flatten()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SourceSignals {
            root: self.root.map(|v| v * factor),
            subgroups: self
                .subgroups
                .iter()
                .map(|(k, v)| (k.clone(), v.map(|v| v * factor)))
                .collect(),
        }
    }
}

/// `class id -> source -> signals`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalTable {
    pub entries: BTreeMap<String, BTreeMap<Source, SourceSignals>>,
}

impl SignalTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, class_id: &str, source: Source) -> Option<&SourceSignals> {
        self.entries.get(class_id).and_then(|m| m.get(&source))
    }

    pub fn entry(&mut self, class_id: &str, source: Source) -> &mut SourceSignals {
        self.entries
            .entry(class_id.to_string())
            .or_default()
            .entry(source)
            .or_default()
    }

    /// Store a value (or an explicit miss) into the right slot.
    pub fn set(&mut self, class_id: &str, source: Source, scope: &Scope, value: Option<f64>) {
        let slot = self.entry(class_id, source);
        match scope {
            Scope::Root => slot.root = value,
            Scope::Subgroup(id) => {
                slot.subgroups.insert(id.clone(), value);
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Trinary dominance outcome: |A| bigger, smaller, or abstain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Prediction {
    Greater,
    Smaller,
    #[default]
    Abstain,
}

impl Prediction {
    pub fn value(self) -> i8 {
        match self {
            Prediction::Greater => 1,
            Prediction::Smaller => -1,
            Prediction::Abstain => 0,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }

    pub fn is_abstain(self) -> bool {
        self == Prediction::Abstain
    }

    /// Label a real-valued score with a symmetric dead zone of `epsilon`.
    pub fn from_score(score: f64, epsilon: f64) -> Self {
        if score > epsilon {
            Prediction::Greater
        } else if score < -epsilon {
            Prediction::Smaller
        } else {
            Prediction::Abstain
        }
    }
}

impl From<Prediction> for i8 {
    fn from(p: Prediction) -> i8 {
        p.value()
    }
}

impl TryFrom<i8> for Prediction {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, Self::Error> {
        match v {
            1 => Ok(Prediction::Greater),
            -1 => Ok(Prediction::Smaller),
            0 => Ok(Prediction::Abstain),
            other => Err(format!("prediction must be -1, 0 or 1, got {other}")),
        }
    }
}

impl std::ops::Neg for Prediction {
    type Output = Prediction;

    fn neg(self) -> Prediction {
        negate_prediction(self)
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.value())
    }
}

/// Swap the roles of A and B.
pub fn negate_prediction(p: Prediction) -> Prediction {
    match p {
        Prediction::Greater => Prediction::Smaller,
        Prediction::Smaller => Prediction::Greater,
        Prediction::Abstain => Prediction::Abstain,
    }
}

/// Thresholds for subgroup aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationParams {
    /// Majority threshold; a direction wins only with a strictly larger share.
    pub theta_m: f64,
    pub alpha: f64,
    pub score_epsilon: f64,
    pub min_paired_subgroups: usize,
    pub paired_ttest: bool,
}

impl Default for AggregationParams {
    fn default() -> Self {
        AggregationParams {
            theta_m: 0.5,
            alpha: 0.05,
            score_epsilon: 1e-9,
            min_paired_subgroups: 2,
            paired_ttest: false,
        }
    }
}

impl AggregationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_m > 0.0 && self.theta_m < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "theta_m must lie in (0, 1), got {}",
                self.theta_m
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.score_epsilon >= 0.0 && self.score_epsilon.is_finite()) {
            return Err(Error::InvalidConfig("score_epsilon must be >= 0".into()));
        }
        if self.min_paired_subgroups < 2 {
            return Err(Error::InvalidConfig("min_paired_subgroups must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Rule {
    #[serde(rename = "subgroup not in scheme")]
    UnknownSubgroup,
    #[serde(rename = "negative signal")]
    NegativeSignal,
    #[serde(rename = "non-finite signal")]
    NonFiniteSignal,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::UnknownSubgroup => "subgroup not in scheme",
            Rule::NegativeSignal => "negative signal",
            Rule::NonFiniteSignal => "non-finite signal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub class_id: String,
    pub source: Source,
    pub scope: Scope,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}: {}", self.class_id, self.source, self.scope, self.rule)
    }
}

/// Check a signal table against the scheme and value invariants.
pub fn validate_table(table: &SignalTable, scheme: &SubgroupScheme) -> Vec<Violation> {
    fn value_rule(value: Option<f64>) -> Option<Rule> {
        let v = value?;
        if !v.is_finite() {
            Some(Rule::NonFiniteSignal)
        } else if v < 0.0 {
            Some(Rule::NegativeSignal)
        } else {
            None
        }
    }

    let mut out = Vec::new();
    for (class_id, per_source) in &table.entries {
        for (&source, signals) in per_source {
            let mut push = |scope: Scope, rule: Rule| {
                out.push(Violation {
                    class_id: class_id.clone(),
                    source,
                    scope,
                    rule,
                })
            };
            if let Some(rule) = value_rule(signals.root) {
                push(Scope::Root, rule);
            }
            for (sg, &value) in &signals.subgroups {
                if !scheme.contains(sg) {
                    push(Scope::subgroup(sg.clone()), Rule::UnknownSubgroup);
                }
                if let Some(rule) = value_rule(value) {
                    push(Scope::subgroup(sg.clone()), rule);
                }
            }
        }
    }
    out
}
