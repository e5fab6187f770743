//! Per-source aggregation: root comparison, subgroup majority and t-test
//! votes, and the weighted per-source ensemble score.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{AggregationParams, Prediction, Source, SourceSignals, SubgroupScheme};
use crate::stats::{self, TTestOutcome};

/// Compare two root signals; a missing side or a tie abstains.
pub fn compare_root(root_a: Option<f64>, root_b: Option<f64>) -> Prediction {
    match (root_a, root_b) {
        (Some(a), Some(b)) if a > b => Prediction::Greater,
        (Some(a), Some(b)) if a < b => Prediction::Smaller,
        _ => Prediction::Abstain,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSubgroup {
    pub id: String,
    pub a: f64,
    pub b: f64,
}

/// Subgroups where both classes have a value, in scheme order.
pub fn pair_subgroups(
    a: &BTreeMap<String, Option<f64>>,
    b: &BTreeMap<String, Option<f64>>,
    scheme: &SubgroupScheme,
) -> Vec<PairedSubgroup> {
    scheme
        .ids()
        .filter_map(|id| {
            let va = a.get(id).copied().flatten()?;
            let vb = b.get(id).copied().flatten()?;
            Some(PairedSubgroup {
                id: id.to_string(),
                a: va,
                b: vb,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MajorityResult {
    pub prediction: Prediction,
    /// Share of paired subgroups with A > B. Ties count toward neither side.
    pub ratio_gt: f64,
    pub ratio_lt: f64,
    pub n_paired: usize,
}

pub fn majority_vote(pairs: &[PairedSubgroup], params: &AggregationParams) -> MajorityResult {
    let n = pairs.len();
    if n < params.min_paired_subgroups.max(1) {
        return MajorityResult {
            prediction: Prediction::Abstain,
            ratio_gt: 0.0,
            ratio_lt: 0.0,
            n_paired: n,
        };
    }
    let gt = pairs.iter().filter(|p| p.a > p.b).count();
    let lt = pairs.iter().filter(|p| p.a < p.b).count();
    let ratio_gt = gt as f64 / n as f64;
    let ratio_lt = lt as f64 / n as f64;
    let prediction = if ratio_gt > params.theta_m {
        Prediction::Greater
    } else if ratio_lt > params.theta_m {
        Prediction::Smaller
    } else {
        Prediction::Abstain
    };
    MajorityResult {
        prediction,
        ratio_gt,
        ratio_lt,
        n_paired: n,
    }
}

pub fn ttest_vote(pairs: &[PairedSubgroup], params: &AggregationParams) -> TTestOutcome {
    if pairs.len() < params.min_paired_subgroups.max(2) {
        return TTestOutcome::abstain();
    }
    let a: Vec<f64> = pairs.iter().map(|p| p.a).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.b).collect();
    let outcome = if params.paired_ttest {
        stats::paired_one_sided_ttest(&a, &b, params.alpha)
    } else {
        stats::one_sided_ttest(&a, &b, params.alpha)
    };
    match outcome {
        Ok(o) => o,
        Err(e) => {
            log::debug!("t-test abstains: {e}");
            TTestOutcome::abstain()
        }
    }
}

/// Which of the root, majority and t-test terms enter the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Combo {
    #[serde(rename = "root")]
    Root,
    #[serde(rename = "maj")]
    Majority,
    #[serde(rename = "ttest")]
    TTest,
    #[serde(rename = "root+maj")]
    RootMajority,
    #[serde(rename = "root+ttest")]
    RootTTest,
    #[serde(rename = "all")]
    All,
}

impl Combo {
    /// Report column order.
    pub const ALL: [Combo; 6] = [
        Combo::Root,
        Combo::Majority,
        Combo::TTest,
        Combo::RootMajority,
        Combo::RootTTest,
        Combo::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Combo::Root => "root",
            Combo::Majority => "maj",
            Combo::TTest => "ttest",
            Combo::RootMajority => "root+maj",
            Combo::RootTTest => "root+ttest",
            Combo::All => "all",
        }
    }

    pub fn column_label(self) -> &'static str {
        match self {
            Combo::Root => "Root (1)",
            Combo::Majority => "Majority (2)",
            Combo::TTest => "T-test (3)",
            Combo::RootMajority => "(1)+(2)",
            Combo::RootTTest => "(1)+(3)",
            Combo::All => "(1)+(2)+(3)",
        }
    }

    /// (root, majority, t-test) membership.
    pub fn terms(self) -> (bool, bool, bool) {
        match self {
            Combo::Root => (true, false, false),
            Combo::Majority => (false, true, false),
            Combo::TTest => (false, false, true),
            Combo::RootMajority => (true, true, false),
            Combo::RootTTest => (true, false, true),
            Combo::All => (true, true, true),
        }
    }

    pub fn len(self) -> usize {
        let (r, m, t) = self.terms();
        usize::from(r) + usize::from(m) + usize::from(t)
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Combo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Combo::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown combo `{s}`")))
    }
}

/// Weight of the majority term: the share of subgroups backing the winning
/// direction, zero on abstention.
pub fn majority_weight(m: &MajorityResult) -> f64 {
    match m.prediction {
        Prediction::Greater => m.ratio_gt,
        Prediction::Smaller => m.ratio_lt,
        Prediction::Abstain => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTerms {
    pub source: Source,
    pub o_root: Prediction,
    pub majority: MajorityResult,
    pub ttest: TTestOutcome,
    pub w_m: f64,
    pub w_s: f64,
    pub included: Combo,
}

impl EnsembleTerms {
    pub fn new(
        source: Source,
        o_root: Prediction,
        majority: MajorityResult,
        ttest: TTestOutcome,
        included: Combo,
    ) -> Self {
        EnsembleTerms {
            source,
            o_root,
            majority,
            ttest,
            w_m: majority_weight(&majority),
            w_s: 1.0 - ttest.result.p,
            included,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleScore {
    pub score: f64,
    pub source: Source,
    pub combo: Combo,
}

/// Mean of the included weighted votes; with all three terms this is
/// `(O_root + W_M * O_M + W_S * O_S) / 3`.
pub fn ensemble_score(terms: &EnsembleTerms) -> EnsembleScore {
    let (root, maj, ttest) = terms.included.terms();
    let (w_m, w_s) = (terms.w_m, terms.w_s);
    let mut sum = 0.0;
    if root {
        sum += terms.o_root.as_f64();
    }
    if maj {
        sum += w_m * terms.majority.prediction.as_f64();
    }
    if ttest {
        sum += w_s * terms.ttest.prediction.as_f64();
    }
    EnsembleScore {
        score: sum / terms.included.len() as f64,
        source: terms.source,
        combo: terms.included,
    }
}

pub fn score_to_prediction(score: &EnsembleScore, epsilon: f64) -> Prediction {
    Prediction::from_score(score.score, epsilon)
}

/// All level-one results for one source and one ordered class pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceAggregation {
    pub source: Source,
    pub o_root: Prediction,
    pub majority: MajorityResult,
    pub ttest: TTestOutcome,
}

impl SourceAggregation {
    pub fn terms(&self, combo: Combo) -> EnsembleTerms {
        EnsembleTerms::new(self.source, self.o_root, self.majority, self.ttest, combo)
    }

    pub fn score(&self, combo: Combo) -> EnsembleScore {
        ensemble_score(&self.terms(combo))
    }

    pub fn prediction(&self, combo: Combo, epsilon: f64) -> Prediction {
        score_to_prediction(&self.score(combo), epsilon)
    }
}

/// Run root, majority and t-test aggregation for one source. A class with no
/// signals for the source behaves like one with every slot missing.
pub fn aggregate_source(
    source: Source,
    a: Option<&SourceSignals>,
    b: Option<&SourceSignals>,
    scheme: &SubgroupScheme,
    params: &AggregationParams,
) -> SourceAggregation {
    let empty = SourceSignals::default();
    let a = a.unwrap_or(&empty);
    let b = b.unwrap_or(&empty);
    let pairs = pair_subgroups(&a.subgroups, &b.subgroups, scheme);
    SourceAggregation {
        source,
        o_root: compare_root(a.root, b.root),
        majority: majority_vote(&pairs, params),
        ttest: ttest_vote(&pairs, params),
    }
}
