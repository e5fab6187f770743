//! Evaluation reports as aligned text tables, CSV and JSON. All three carry
//! the same numbers and are byte-stable for identical inputs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aggregate::Combo;
use crate::dataset::{DomainReport, Metrics};
use crate::error::Result;
use crate::pipeline::Strategy;

/// Published non-expert human accuracy (%) on the same task, shown for
/// reference only.
pub const HUMAN_BASELINE_CLOSED_BOOK: f64 = 75.0;
pub const HUMAN_BASELINE_OPEN_BOOK: f64 = 76.0;

pub const CSV_HEADER: [&str; 7] = [
    "strategy",
    "source",
    "scope_row",
    "n",
    "accuracy",
    "precision",
    "abstention",
];

/// One row of the strategy × combo grid. `cells` follows `Combo::ALL`; a
/// weighted-vote cell is `None` when no model was trained for that combo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub strategy: Strategy,
    pub source: String,
    pub n: usize,
    pub cells: Vec<Option<Metrics>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_classes: usize,
    pub n_pairs: usize,
    pub n_in_domain: usize,
    pub n_excluded: usize,
    /// Size of the held-out split the weighted vote is scored on.
    pub n_test: Option<usize>,
    pub seed: u64,
    pub grid: Vec<GridRow>,
    pub domain_combo: Combo,
    /// Per-source breakdown by domain.
    pub domains: Vec<(String, DomainReport)>,
    /// Most accurate source per domain row.
    pub best: Vec<(String, Option<String>)>,
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn table(out: &mut String, rows: &[Vec<String>], left_cols: usize) {
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            if c < left_cols {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(line, "{cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
}

impl EvaluationReport {
    fn grid_table(&self, out: &mut String, title: &str, cell: impl Fn(&Metrics) -> String) {
        let _ = writeln!(out, "{title}");
        let mut rows = vec![["strategy", "source", "n"]
            .iter()
            .map(|s| s.to_string())
            .chain(Combo::ALL.iter().map(|c| c.column_label().to_string()))
            .collect::<Vec<_>>()];
        for r in &self.grid {
            let mut row = vec![r.strategy.to_string(), r.source.clone(), r.n.to_string()];
            row.extend(r.cells.iter().map(|m| m.as_ref().map_or("n/a".to_string(), &cell)));
            rows.push(row);
        }
        table(out, &rows, 2);
        out.push('\n');
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Dominance estimation report");
        let _ = writeln!(
            out,
            "classes {}, pairs {} (in-domain {}, interdomain {}), excluded ties {}, seed {}",
            self.n_classes,
            self.n_pairs,
            self.n_in_domain,
            self.n_pairs - self.n_in_domain,
            self.n_excluded,
            self.seed
        );
        if let Some(n) = self.n_test {
            let _ = writeln!(out, "weighted vote scored on {n} held-out pairs");
        }
        out.push('\n');

        if !self.grid.is_empty() {
            self.grid_table(&mut out, "Accuracy (%)", |m| pct(m.accuracy));
            self.grid_table(&mut out, "Precision (%)", |m| m.precision.map_or("none".into(), pct));
            self.grid_table(&mut out, "Abstention (%)", |m| pct(m.abstention_rate));
        }

        if let Some((_, first)) = self.domains.first() {
            let _ = writeln!(
                out,
                "Accuracy (%) by domain, combo {}",
                self.domain_combo.column_label()
            );
            let mut header = vec!["domain".to_string(), "n".to_string()];
            header.extend(self.domains.iter().map(|(s, _)| s.clone()));
            header.push("best".into());
            let mut rows = vec![header];
            for (i, row) in first.rows.iter().enumerate() {
                let mut r = vec![row.scope_row.clone(), row.metrics.n_total.to_string()];
                r.extend(self.domains.iter().map(|(_, d)| pct(d.rows[i].metrics.accuracy)));
                r.push(self.best[i].1.clone().unwrap_or_else(|| "-".into()));
                rows.push(r);
            }
            table(&mut out, &rows, 1);
            out.push('\n');
        }

        let _ = writeln!(
            out,
            "Non-expert human baseline, published reference values (not computed): closed-book {:.1}, open-book {:.1}",
            HUMAN_BASELINE_CLOSED_BOOK, HUMAN_BASELINE_OPEN_BOOK
        );
        out
    }

    /// Grid cells use the combo as `scope_row`; domain rows use
    /// `{combo}/{domain}`. Fractions carry six decimals and an undefined
    /// precision is an empty field.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        let mut record = |strategy: &str, source: &str, scope: &str, m: &Metrics| {
            w.write_record([
                strategy.to_string(),
                source.to_string(),
                scope.to_string(),
                m.n_total.to_string(),
                format!("{:.6}", m.accuracy),
                m.precision.map_or(String::new(), |p| format!("{p:.6}")),
                format!("{:.6}", m.abstention_rate),
            ])
        };
        for r in &self.grid {
            for (combo, m) in Combo::ALL.iter().zip(&r.cells) {
                if let Some(m) = m {
                    record(r.strategy.as_str(), &r.source, combo.as_str(), m)?;
                }
            }
        }
        for (source, d) in &self.domains {
            for row in &d.rows {
                let scope = format!("{}/{}", self.domain_combo, row.scope_row);
                record(Strategy::PerSource.as_str(), source, &scope, &row.metrics)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DomainRow;

    fn report() -> EvaluationReport {
        let m = Metrics::from_counts(4, 2, 1);
        let none = Metrics::from_counts(4, 0, 4);
        let rows = vec![
            DomainRow {
                scope_row: "species".into(),
                metrics: m,
            },
            DomainRow {
                scope_row: "all".into(),
                metrics: none,
            },
        ];
        EvaluationReport {
            n_classes: 4,
            n_pairs: 4,
            n_in_domain: 1,
            n_excluded: 2,
            n_test: None,
            seed: 9,
            grid: vec![GridRow {
                strategy: Strategy::PerSource,
                source: "KB".into(),
                n: 4,
                cells: vec![Some(m), Some(none), None, Some(m), Some(m), Some(m)],
            }],
            domain_combo: Combo::All,
            domains: vec![("KB".into(), DomainReport { rows })],
            best: vec![("species".into(), Some("KB".into())), ("all".into(), None)],
        }
    }

    #[test]
    fn text_tables_are_aligned() {
        let text = report().to_text();
        assert!(text.contains("Root (1)"));
        assert!(text.contains("50.0"));
        assert!(text.contains("66.7"));
        assert!(text.contains("none"));
        assert!(text.contains("n/a"));
        assert!(text.contains("closed-book 75.0, open-book 76.0"));
        let acc: Vec<&str> = text
            .lines()
            .skip_while(|l| *l != "Accuracy (%)")
            .skip(1)
            .take(2)
            .collect();
        assert_eq!(acc[0].len(), acc[1].len());
    }

    #[test]
    fn csv_rows_match_metrics() {
        let csv = report().to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "strategy,source,scope_row,n,accuracy,precision,abstention");
        assert_eq!(lines[1], "per-source,KB,root,4,0.500000,0.666667,0.250000");
        assert_eq!(lines[2], "per-source,KB,maj,4,0.000000,,1.000000");
        assert_eq!(lines.len(), 1 + 5 + 2);
        assert_eq!(lines[6], "per-source,KB,all/species,4,0.500000,0.666667,0.250000");
    }

    #[test]
    fn json_round_trips() {
        let r = report();
        let back: EvaluationReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
