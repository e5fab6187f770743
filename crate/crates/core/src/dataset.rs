//! Ground-truth classes, labelled class pairs and the accuracy metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassSpec, Domain, Prediction};

pub const CSV_HEADER: [&str; 6] = [
    "id",
    "label_singular",
    "label_plural",
    "domain",
    "kb_entity_id",
    "gt_cardinality",
];

/// Load a class file where every row carries a ground-truth count.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<ClassSpec>> {
    let classes = load_classes(std::fs::File::open(path)?)?;
    for (i, c) in classes.iter().enumerate() {
        if c.gt_cardinality.is_none() {
            return Err(Error::Schema {
                row: i + 1,
                field: "gt_cardinality".into(),
                message: format!("class `{}` has no ground truth", c.id),
            });
        }
    }
    Ok(classes)
}

/// Parse the class CSV. Rows are numbered from 1, excluding the header.
pub fn load_classes(reader: impl Read) -> Result<Vec<ClassSpec>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Schema {
            row: 0,
            field: "header".into(),
            message: format!("expected `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let schema = |field: &str, message: String| Error::Schema {
            row,
            field: field.into(),
            message,
        };
        let domain: Domain = field(3)
            .parse()
            .map_err(|_| schema("domain", format!("unknown domain `{}`", field(3))))?;
        let gt_cardinality = match field(5) {
            "" => None,
            s => Some(
                s.parse::<u64>()
                    .map_err(|_| schema("gt_cardinality", format!("`{s}` is not a count")))?,
            ),
        };
        let spec = ClassSpec {
            id: field(0).to_string(),
            label_singular: field(1).to_string(),
            label_plural: field(2).to_string(),
            domain,
            kb_entity_id: Some(field(4).to_string()).filter(|s| !s.is_empty()),
            gt_cardinality,
        };
        if spec.id.is_empty() {
            return Err(schema("id", "empty id".into()));
        }
        if spec.label_plural.is_empty() {
            return Err(schema("label_plural", "empty plural label".into()));
        }
        if spec.gt_cardinality == Some(0) {
            return Err(schema("gt_cardinality", "count must be at least 1".into()));
        }
        if !seen.insert(spec.id.clone()) {
            return Err(Error::DuplicateClass(spec.id));
        }
        out.push(spec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub class_a: String,
    pub class_b: String,
    pub gt_label: Prediction,
    pub ratio_magnitude: u32,
    /// Shared domain of an in-domain pair, `None` for interdomain pairs.
    pub domain: Option<Domain>,
}

impl PairRecord {
    pub fn in_domain(&self) -> bool {
        self.domain.is_some()
    }

    pub fn scope_label(&self) -> &'static str {
        self.domain.map_or(INTERDOMAIN, Domain::as_str)
    }

    pub fn key(&self) -> (String, String) {
        (self.class_a.clone(), self.class_b.clone())
    }

    /// The same comparison asked the other way round.
    pub fn swapped(&self) -> PairRecord {
        PairRecord {
            class_a: self.class_b.clone(),
            class_b: self.class_a.clone(),
            gt_label: -self.gt_label,
            ..self.clone()
        }
    }
}

pub const INTERDOMAIN: &str = "interdomain";
pub const ALL_PAIRS: &str = "all";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairSet {
    pub pairs: Vec<PairRecord>,
    /// Pairs left out because their ground-truth counts are equal.
    pub excluded: Vec<(String, String)>,
}

/// `floor(log10(max / min))`, computed in integers.
pub fn ratio_magnitude(a: u64, b: u64) -> u32 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let lo = lo.max(1) as u128;
    let hi = hi as u128;
    let mut k = 0;
    let mut scaled = lo * 10;
    while scaled <= hi {
        k += 1;
        scaled *= 10;
    }
    k
}

/// All unordered pairs of classes that carry ground truth. Classes without a
/// count are skipped.
pub fn generate_pairs(classes: &[ClassSpec]) -> PairSet {
    let mut sorted: Vec<&ClassSpec> = classes.iter().filter(|c| c.gt_cardinality.is_some()).collect();
    sorted.sort_by(|x, y| x.id.cmp(&y.id));
    let mut set = PairSet::default();
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            let (ga, gb) = (a.gt_cardinality.unwrap(), b.gt_cardinality.unwrap());
            if ga == gb {
                log::info!("excluding pair {}/{}: equal ground truth {ga}", a.id, b.id);
                set.excluded.push((a.id.clone(), b.id.clone()));
                continue;
            }
            set.pairs.push(PairRecord {
                class_a: a.id.clone(),
                class_b: b.id.clone(),
                gt_label: if ga > gb {
                    Prediction::Greater
                } else {
                    Prediction::Smaller
                },
                ratio_magnitude: ratio_magnitude(ga, gb),
                domain: (a.domain == b.domain).then_some(a.domain),
            });
        }
    }
    set
}

pub type PredictionMap = BTreeMap<(String, String), Prediction>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_total: usize,
    pub n_correct: usize,
    pub n_abstained: usize,
    pub accuracy: f64,
    /// `None` when every prediction abstained.
    pub precision: Option<f64>,
    pub abstention_rate: f64,
}

impl Metrics {
    pub fn from_counts(n_total: usize, n_correct: usize, n_abstained: usize) -> Self {
        let frac = |k: usize| if n_total == 0 { 0.0 } else { k as f64 / n_total as f64 };
        let answered = n_total - n_abstained;
        Metrics {
            n_total,
            n_correct,
            n_abstained,
            accuracy: frac(n_correct),
            precision: (answered > 0).then(|| n_correct as f64 / answered as f64),
            abstention_rate: frac(n_abstained),
        }
    }
}

pub fn evaluate<'a>(predictions: &PredictionMap, pairs: impl IntoIterator<Item = &'a PairRecord>) -> Result<Metrics> {
    let mut n = 0;
    let mut correct = 0;
    let mut abstained = 0;
    for pair in pairs {
        let p = lookup(predictions, pair)?;
        n += 1;
        if p.is_abstain() {
            abstained += 1;
        } else if p == pair.gt_label {
            correct += 1;
        }
    }
    Ok(Metrics::from_counts(n, correct, abstained))
}

fn lookup(predictions: &PredictionMap, pair: &PairRecord) -> Result<Prediction> {
    predictions
        .get(&(pair.class_a.clone(), pair.class_b.clone()))
        .copied()
        .ok_or_else(|| Error::MissingPrediction(pair.class_a.clone(), pair.class_b.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRow {
    pub scope_row: String,
    pub metrics: Metrics,
}

/// One row per domain (in-domain pairs), one interdomain row and one row
/// over all pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub rows: Vec<DomainRow>,
}

impl DomainReport {
    pub fn row(&self, scope_row: &str) -> Option<&Metrics> {
        self.rows.iter().find(|r| r.scope_row == scope_row).map(|r| &r.metrics)
    }
}

pub fn domain_breakdown(predictions: &PredictionMap, pairs: &[PairRecord]) -> Result<DomainReport> {
    let mut rows = Vec::with_capacity(Domain::ALL.len() + 2);
    for d in Domain::ALL {
        let metrics = evaluate(predictions, pairs.iter().filter(|p| p.domain == Some(d)))?;
        rows.push(DomainRow {
            scope_row: d.as_str().to_string(),
            metrics,
        });
    }
    rows.push(DomainRow {
        scope_row: INTERDOMAIN.to_string(),
        metrics: evaluate(predictions, pairs.iter().filter(|p| p.domain.is_none()))?,
    });
    rows.push(DomainRow {
        scope_row: ALL_PAIRS.to_string(),
        metrics: evaluate(predictions, pairs)?,
    });
    Ok(DomainReport { rows })
}

/// For each row, the label of the report with the highest accuracy. Ties go
/// to the earlier report; rows with no pairs have no winner.
pub fn best_per_row(reports: &[(String, DomainReport)]) -> Vec<(String, Option<String>)> {
    let Some((_, first)) = reports.first() else {
        return Vec::new();
    };
    first
        .rows
        .iter()
        .map(|row| {
            let mut best: Option<(&str, f64)> = None;
            for (label, report) in reports {
                if let Some(m) = report.row(&row.scope_row).filter(|m| m.n_total > 0) {
                    if best.is_none_or(|(_, acc)| m.accuracy > acc) {
                        best = Some((label, m.accuracy));
                    }
                }
            }
            (row.scope_row.clone(), best.map(|(l, _)| l.to_string()))
        })
        .collect()
}

/// Seeded split; `|test| = round((1 - train_fraction) * n)`. Both halves keep
/// the input order.
pub fn split_train_test(
    pairs: &[PairRecord],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<PairRecord>, Vec<PairRecord>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = pairs.len();
    let n_test = ((1.0 - train_fraction) * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_idx: BTreeSet<usize> = idx[..n_test].iter().copied().collect();
    let (test, train): (Vec<_>, Vec<_>) = pairs.iter().enumerate().partition(|(i, _)| test_idx.contains(i));
    Ok((
        train.into_iter().map(|(_, p)| p.clone()).collect(),
        test.into_iter().map(|(_, p)| p.clone()).collect(),
    ))
}
