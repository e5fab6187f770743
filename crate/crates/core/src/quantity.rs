//! Count extraction from free text ("an estimated 1.3 million rivers") and
//! selection of a single confident count from ranked search snippets.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modifier {
    Exact,
    Approximate,
    LowerBound,
    UpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleWord {
    Hundred,
    Thousand,
    Million,
    Billion,
    Trillion,
}

impl ScaleWord {
    fn parse(word: &str) -> Option<Self> {
        let w = word.to_ascii_lowercase();
        let w = w.strip_suffix('s').unwrap_or(&w);
        match w {
            "hundred" => Some(ScaleWord::Hundred),
            "thousand" => Some(ScaleWord::Thousand),
            "million" => Some(ScaleWord::Million),
            "billion" => Some(ScaleWord::Billion),
            "trillion" => Some(ScaleWord::Trillion),
            _ => None,
        }
    }

    pub fn exponent(self) -> i32 {
        match self {
            ScaleWord::Hundred => 2,
            ScaleWord::Thousand => 3,
            ScaleWord::Million => 6,
            ScaleWord::Billion => 9,
            ScaleWord::Trillion => 12,
        }
    }
}

/// A numeric count found in text. `char_span` holds byte offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityMention {
    pub value: f64,
    pub char_span: (usize, usize),
    pub modifier: Modifier,
    pub scale_word: Option<ScaleWord>,
    pub range_partner: Option<usize>,
}

/// Literal digits with the decimal point removed plus the number of
/// fractional digits, so that scaling stays exact in decimal.
#[derive(Debug, Clone, Copy)]
struct Literal {
    mantissa: u128,
    frac_digits: i32,
    is_plain_integer: bool,
    digits: usize,
}

impl Literal {
    fn parse(s: &str) -> Option<Self> {
        let mut mantissa: u128 = 0;
        let mut frac_digits = 0;
        let mut seen_dot = false;
        let mut digits = 0;
        for c in s.chars() {
            match c {
                '0'..='9' => {
                    mantissa = mantissa.checked_mul(10)?.checked_add(c as u128 - '0' as u128)?;
                    digits += 1;
                    if seen_dot {
                        frac_digits += 1;
                    }
                }
                '.' => seen_dot = true,
                ',' => {}
                _ => return None,
            }
        }
        Some(Literal {
            mantissa,
            frac_digits,
            is_plain_integer: !s.contains([',', '.']),
            digits,
        })
    }

    fn value(self, scale: Option<ScaleWord>) -> f64 {
        let exp = scale.map_or(0, ScaleWord::exponent) - self.frac_digits;
        let m = self.mantissa as f64;
        if exp >= 0 {
            m * 10f64.powi(exp)
        } else {
            m / 10f64.powi(-exp)
        }
    }

    fn unscaled(self) -> f64 {
        self.value(None)
    }
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)(\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)(?:[ \t]+(hundreds?|thousands?|millions?|billions?|trillions?)\b)?",
        )
        .expect("valid regex")
    })
}

const MODIFIER_PHRASES: &[(&str, Modifier)] = &[
    ("an estimated", Modifier::Approximate),
    ("estimated", Modifier::Approximate),
    ("approximately", Modifier::Approximate),
    ("approx.", Modifier::Approximate),
    ("around", Modifier::Approximate),
    ("about", Modifier::Approximate),
    ("roughly", Modifier::Approximate),
    ("nearly", Modifier::Approximate),
    ("almost", Modifier::Approximate),
    ("circa", Modifier::Approximate),
    ("some", Modifier::Approximate),
    ("~", Modifier::Approximate),
    ("more than", Modifier::LowerBound),
    ("greater than", Modifier::LowerBound),
    ("at least", Modifier::LowerBound),
    ("upwards of", Modifier::LowerBound),
    ("in excess of", Modifier::LowerBound),
    ("over", Modifier::LowerBound),
    ("above", Modifier::LowerBound),
    ("no more than", Modifier::UpperBound),
    ("fewer than", Modifier::UpperBound),
    ("less than", Modifier::UpperBound),
    ("at most", Modifier::UpperBound),
    ("up to", Modifier::UpperBound),
    ("under", Modifier::UpperBound),
    ("below", Modifier::UpperBound),
];

fn modifier_before(prefix: &str) -> Modifier {
    let prefix = prefix.trim_end().to_lowercase();
    let mut phrases: Vec<&(&str, Modifier)> = MODIFIER_PHRASES.iter().collect();
    phrases.sort_by_key(|(p, _)| std::cmp::Reverse(p.len()));
    for (phrase, modifier) in phrases {
        if let Some(rest) = prefix.strip_suffix(phrase) {
            let boundary = !phrase.chars().next().is_some_and(char::is_alphabetic)
                || !rest.chars().next_back().is_some_and(char::is_alphanumeric);
            if boundary {
                return *modifier;
            }
        }
    }
    Modifier::Exact
}

fn last_word(prefix: &str) -> String {
    let trimmed = prefix.trim_end();
    let start = trimmed
        .char_indices()
        .rev()
        .find(|(_, c)| !c.is_alphabetic())
        .map_or(0, |(i, c)| i + c.len_utf8());
    trimmed[start..].to_lowercase()
}

struct Raw {
    literal: Literal,
    span: (usize, usize),
    scale: Option<ScaleWord>,
    modifier: Modifier,
}

/// Find every count mention in `text`, in order of appearance.
pub fn extract_quantities(text: &str) -> Vec<QuantityMention> {
    let mut raws: Vec<Raw> = Vec::new();

    for caps in number_regex().captures_iter(text) {
        let num = caps.get(1).expect("group 1 always participates");
        let whole = caps.get(0).expect("match");
        let (start, mut end) = (whole.start(), whole.end());

        // the token must stand alone: no letters or digits glued on either side
        let before = text[..start].chars().next_back();
        if before.is_some_and(|c| c.is_alphanumeric() || c == '_') {
            continue;
        }
        if before == Some('.')
            && text[..start]
                .trim_end_matches('.')
                .ends_with(|c: char| c.is_ascii_digit())
        {
            continue;
        }
        let scale = caps.get(2).and_then(|m| ScaleWord::parse(m.as_str()));
        if scale.is_none() {
            end = num.end();
        }
        let after = &text[end..];
        if after.starts_with(|c: char| c.is_alphanumeric() || c == '%' || c == '_') {
            continue;
        }
        if scale.is_none() {
            let next = after.trim_start().to_lowercase();
            if next.starts_with("percent") || next.starts_with("per cent") {
                continue;
            }
        }

        let Some(literal) = Literal::parse(num.as_str()) else {
            continue;
        };
        let prefix = &text[..start];
        if scale.is_none() && literal.is_plain_integer && literal.digits == 4 {
            let v = literal.mantissa;
            if (1000..=2100).contains(&v) && matches!(last_word(prefix).as_str(), "in" | "since" | "by") {
                continue;
            }
        }

        raws.push(Raw {
            literal,
            span: (start, end),
            scale,
            modifier: modifier_before(prefix),
        });
    }

    let mut mentions: Vec<QuantityMention> = raws
        .iter()
        .map(|r| QuantityMention {
            value: r.literal.value(r.scale),
            char_span: r.span,
            modifier: r.modifier,
            scale_word: r.scale,
            range_partner: None,
        })
        .collect();

    let mut i = 0;
    while i + 1 < raws.len() {
        let gap = text[raws[i].span.1..raws[i + 1].span.0].trim().to_lowercase();
        let linked = match gap.as_str() {
            "to" => true,
            "and" => last_word(&text[..raws[i].span.0]) == "between",
            _ => false,
        };
        if linked {
            mentions[i].range_partner = Some(i + 1);
            mentions[i + 1].range_partner = Some(i);
            // "between 2 and 3 million": the lower end borrows the upper scale
            if let (None, Some(scale)) = (raws[i].scale, raws[i + 1].scale) {
                if raws[i].literal.unscaled() < raws[i + 1].literal.unscaled() {
                    mentions[i].value = raws[i].literal.value(Some(scale));
                    mentions[i].scale_word = Some(scale);
                }
            }
            i += 2;
        } else {
            i += 1;
        }
    }

    mentions
}

/// Collapse mentions to one count: the first mention, or the midpoint of
/// the range it belongs to.
pub fn resolve_count(mentions: &[QuantityMention]) -> Option<f64> {
    let first = mentions.first()?;
    match first.range_partner.and_then(|j| mentions.get(j)) {
        Some(partner) => Some(0.5 * (first.value + partner.value)),
        None => Some(first.value),
    }
}

/// Extract and resolve in one step.
pub fn parse_count(text: &str) -> Option<f64> {
    resolve_count(&extract_quantities(text))
}

/// Two candidates cluster together when their log10 ratio is within this.
pub const CLUSTER_LOG10_THRESHOLD: f64 = 0.05;

fn same_cluster(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    if a <= 0.0 || b <= 0.0 {
        return false;
    }
    (a / b).log10().abs() <= CLUSTER_LOG10_THRESHOLD
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut root = i;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = i;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

/// Pick the most supported count across ranked snippets.
///
/// Each snippet contributes at most one candidate. Candidates are grouped
/// by single-linkage on the log scale, each group is weighted by the sum of
/// `1/rank` over its members, and the weighted median of the heaviest group
/// is returned. Equal weights go to the group holding the best rank.
pub fn select_confident_count<S: AsRef<str>>(snippets: &[(u32, S)]) -> Result<Option<f64>> {
    let mut ranked: Vec<(u32, &str)> = snippets.iter().map(|(r, t)| (*r, t.as_ref())).collect();
    ranked.sort_by_key(|(r, _)| *r);
    for w in ranked.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::AmbiguousRanking(format!("rank {} appears twice", w[0].0)));
        }
    }
    if ranked.first().is_some_and(|(r, _)| *r == 0) {
        return Err(Error::AmbiguousRanking("ranks are 1-based".into()));
    }

    let candidates: Vec<(u32, f64)> = ranked
        .iter()
        .filter_map(|(r, t)| parse_count(t).map(|v| (*r, v)))
        .collect();
    if candidates.is_empty() {
        return Ok(None);
    }

    let n = candidates.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if same_cluster(candidates[i].1, candidates[j].1) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    // clusters keyed by root, in rank order of their best member
    let mut clusters: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match clusters.iter_mut().find(|(r, _)| *r == root) {
            Some((_, members)) => members.push(i),
            None => clusters.push((root, vec![i])),
        }
    }

    let weight = |members: &[usize]| -> f64 { members.iter().map(|&i| 1.0 / f64::from(candidates[i].0)).sum() };
    let mut best = &clusters[0].1;
    let mut best_weight = weight(best);
    for (_, members) in &clusters[1..] {
        let w = weight(members);
        // clusters are visited in order of their best rank, so ties keep the earlier one
        if w > best_weight + 1e-12 * best_weight.max(w) {
            best = members;
            best_weight = w;
        }
    }

    let mut members: Vec<(f64, u32)> = best.iter().map(|&i| (candidates[i].1, candidates[i].0)).collect();
    members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let half = 0.5 * best_weight;
    let mut cumulative = 0.0;
    for (value, rank) in &members {
        cumulative += 1.0 / f64::from(*rank);
        if cumulative >= half * (1.0 - 1e-12) {
            return Ok(Some(*value));
        }
    }
    Ok(members.last().map(|m| m.0))
}
