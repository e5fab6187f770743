//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use dominance_core::aggregate::{ensemble_score, majority_vote, Combo, EnsembleTerms, MajorityResult, PairedSubgroup};
use dominance_core::dataset::{generate_pairs, load_ground_truth};
use dominance_core::ensemble::{
    logreg_predict, majority_vote_sources, regularized_gradient, regularized_loss, train_logreg, FeatureVector,
    LogRegModel, Sample, TrainConfig,
};
use dominance_core::pipeline::{aggregate_pair, Strategy};
use dominance_core::quantity::parse_count;
use dominance_core::stats::{one_sided_ttest, Direction, TTestOutcome, TTestResult};
use dominance_core::{AggregationParams, Prediction, Scope, SignalTable, Source, SubgroupScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20221017;

const PAIRS_LIMIT: Duration = Duration::from_secs(1);
const STATS_LIMIT: Duration = Duration::from_secs(5);
const LOGREG_LIMIT: Duration = Duration::from_secs(10);
const REPLAY_LIMIT: Duration = Duration::from_secs(30);

const P_VALUE_TOL: f64 = 1e-6;
const SCALE_TOL: f64 = 1e-12;
const GRAD_REL_TOL: f64 = 1e-5;
const TRAIN_ACCURACY_MIN: f64 = 0.99;
const WORKED_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    if took < limit {
        Ok(took)
    } else {
        Err(format!("took {took:?}, limit {limit:?}"))
    }
}

fn pair_counts() -> Outcome {
    let start = Instant::now();
    let classes = load_ground_truth(data("classes.csv")).map_err(|e| e.to_string())?;
    let set = generate_pairs(&classes);
    let total = set.pairs.len();
    let in_domain = set.pairs.iter().filter(|p| p.in_domain()).count();
    let took = within(PAIRS_LIMIT, start)?;
    let got = (classes.len(), total, in_domain, total - in_domain);
    if got != (90, 4005, 630, 3375) {
        return Err(format!("classes/pairs/in-domain/interdomain = {got:?}"));
    }
    Ok(format!(
        "90 classes -> 4005 pairs, 630 in-domain, 3375 interdomain in {took:?}"
    ))
}

fn grid_shape(replay: &ReplayRun) -> Outcome {
    let report: serde_json::Value = serde_json::from_slice(&replay.first[2]).map_err(|e| e.to_string())?;
    let grid = report["grid"].as_array().ok_or("no grid")?;
    let rows: Vec<(String, String, usize)> = grid
        .iter()
        .map(|r| {
            (
                r["strategy"].as_str().unwrap_or("").to_string(),
                r["source"].as_str().unwrap_or("").to_string(),
                r["cells"].as_array().map_or(0, Vec::len),
            )
        })
        .collect();
    let want: Vec<(String, String, usize)> = [
        (Strategy::PerSource, "KB"),
        (Strategy::PerSource, "SE"),
        (Strategy::PerSource, "LM"),
        (Strategy::MajorityVote, "all"),
        (Strategy::WeightedVote, "all"),
    ]
    .iter()
    .map(|(s, src)| (s.as_str().to_string(), src.to_string(), Combo::ALL.len()))
    .collect();
    if rows != want {
        return Err(format!("grid rows {rows:?}"));
    }
    let text = String::from_utf8_lossy(&replay.first[0]).into_owned();
    let header_ok = Combo::ALL.iter().all(|c| text.contains(c.column_label()));
    if !header_ok {
        return Err("text report lacks combo column labels".into());
    }
    Ok("5 rows (KB, SE, LM, majority vote, weighted vote) x 6 combos; values not asserted".into())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn stats_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let na = rng.random_range(3..=19);
        let nb = rng.random_range(3..=19);
        let mu_a = rng.random_range(0.0..8.0);
        let mu_b = rng.random_range(0.0..8.0);
        let a: Vec<f64> = (0..na).map(|_| (mu_a + normal(&mut rng)).exp()).collect();
        let b: Vec<f64> = (0..nb).map(|_| (mu_b + normal(&mut rng)).exp()).collect();
        let got = one_sided_ttest(&a, &b, 0.05).map_err(|e| e.to_string())?.result.p;
        worst = worst.max((got - oracle::one_sided_p_reference(&a, &b)).abs());
    }
    let took = within(STATS_LIMIT, start)?;
    if worst > P_VALUE_TOL {
        return Err(format!("max |p - oracle| = {worst:e}"));
    }
    Ok(format!(
        "100 log-normal pairs, max |p - oracle| = {worst:.1e} in {took:?}"
    ))
}

/// The majority rule written with integer counts.
fn majority_by_definition(cfg: &[(u8, u8)], theta: (usize, usize), min_paired: usize) -> (i8, usize, usize) {
    let n = cfg.len();
    if n < min_paired {
        return (0, 0, 0);
    }
    let gt = cfg.iter().filter(|(a, b)| a > b).count();
    let lt = cfg.iter().filter(|(a, b)| a < b).count();
    // gt/n > num/den
    let beats = |k: usize| k * theta.1 > theta.0 * n;
    let label = if beats(gt) {
        1
    } else if beats(lt) {
        -1
    } else {
        0
    };
    (label, gt, lt)
}

fn majority_brute_force() -> Outcome {
    let mut checked = 0usize;
    let mut at_four = 0usize;
    for (theta, num_den) in [(0.5, (1, 2)), (0.6, (3, 5))] {
        let params = AggregationParams {
            theta_m: theta,
            ..AggregationParams::default()
        };
        for len in 0..=4u32 {
            for code in 0..9usize.pow(len) {
                let mut c = code;
                let cfg: Vec<(u8, u8)> = (0..len)
                    .map(|_| {
                        let cell = c % 9;
                        c /= 9;
                        ((cell / 3) as u8, (cell % 3) as u8)
                    })
                    .collect();
                let pairs: Vec<PairedSubgroup> = cfg
                    .iter()
                    .enumerate()
                    .map(|(i, &(a, b))| PairedSubgroup {
                        id: format!("g{i}"),
                        a: f64::from(a),
                        b: f64::from(b),
                    })
                    .collect();
                let got = majority_vote(&pairs, &params);
                let (label, gt, lt) = majority_by_definition(&cfg, num_den, params.min_paired_subgroups);
                let (rg, rl) = if len as usize >= params.min_paired_subgroups {
                    (gt as f64 / len as f64, lt as f64 / len as f64)
                } else {
                    (0.0, 0.0)
                };
                if got.prediction.value() != label || got.ratio_gt != rg || got.ratio_lt != rl {
                    return Err(format!(
                        "theta {theta}, config {cfg:?}: got {got:?}, want {label} {rg} {rl}"
                    ));
                }
                checked += 1;
                if len == 4 && theta == 0.5 {
                    at_four += 1;
                }
            }
        }
    }
    if at_four != 6561 {
        return Err(format!("{at_four} length-4 configurations"));
    }
    Ok(format!(
        "{checked} configurations (lengths 0-4, theta 0.5 and 0.6; 6561 of length 4) match the definition"
    ))
}

fn random_value(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..20) {
        0 => 0.0,
        1..=3 => f64::from(rng.random_range(1..4)),
        _ => rng.random_range(0.0f64..15.0).exp(),
    }
}

fn random_table(rng: &mut ChaCha8Rng, scheme: &SubgroupScheme) -> SignalTable {
    let mut t = SignalTable::new();
    for class in ["a", "b"] {
        for s in Source::ALL {
            if rng.random_bool(0.05) {
                continue;
            }
            let root = rng.random_bool(0.85).then(|| random_value(rng));
            t.set(class, s, &Scope::Root, root);
            for id in scheme.ids() {
                let v = rng.random_bool(0.8).then(|| random_value(rng));
                t.set(class, s, &Scope::subgroup(id), v);
            }
        }
    }
    t
}

fn antisymmetry() -> Outcome {
    let scheme = SubgroupScheme::g20();
    let params = AggregationParams::default();
    let eps = params.score_epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut decided = 0usize;
    for case in 0..1000 {
        let table = random_table(&mut rng, &scheme);
        let model = LogRegModel {
            combo: Combo::ALL[case % 6],
            weights: [
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ],
            intercept: 0.0,
            lambda: 1.0,
            seed: 0,
        };
        let ab = aggregate_pair(&table, "a", "b", &scheme, &params, &Source::ALL);
        let ba = aggregate_pair(&table, "b", "a", &scheme, &params, &Source::ALL);
        let fail = |what: &str| Err(format!("table {case}: {what} is not antisymmetric"));
        for s in Source::ALL {
            let (x, y) = (ab.source(s), ba.source(s));
            if x.o_root != -y.o_root {
                return fail("root");
            }
            if x.majority.prediction != -y.majority.prediction {
                return fail("majority");
            }
            if x.ttest.prediction != -y.ttest.prediction {
                return fail("t-test");
            }
            for combo in Combo::ALL {
                if x.score(combo).score != -y.score(combo).score
                    || x.prediction(combo, eps) != -y.prediction(combo, eps)
                {
                    return fail(&format!("{s} score {combo}"));
                }
            }
            decided += usize::from(!x.majority.prediction.is_abstain());
        }
        for combo in Combo::ALL {
            if ab.majority_vote(combo, eps) != -ba.majority_vote(combo, eps) {
                return fail(&format!("majority vote over sources {combo}"));
            }
        }
        let (p_ab, _) = ab.weighted_vote(&model, eps);
        let (p_ba, _) = ba.weighted_vote(&model, eps);
        if p_ab != -p_ba || model.decision(&ab.features(model.combo)) != -model.decision(&ba.features(model.combo)) {
            return fail("weighted vote");
        }
    }
    // the source vote itself on every input
    let all = [Prediction::Greater, Prediction::Smaller, Prediction::Abstain];
    for x in all {
        for y in all {
            for z in all {
                if majority_vote_sources([x, y, z]) != -majority_vote_sources([-x, -y, -z]) {
                    return Err("majority vote over sources".into());
                }
            }
        }
    }
    Ok(format!(
        "1000 tables: root, majority, t-test, 6 scores, source vote, weighted vote ({decided} non-abstaining majority votes)"
    ))
}

fn scale_invariance() -> Outcome {
    let scheme = SubgroupScheme::g20();
    let params = AggregationParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let table = random_table(&mut rng, &scheme);
        let base = aggregate_pair(&table, "a", "b", &scheme, &params, &Source::ALL);
        for c in [1e-3, 7.0, 1e6] {
            let mut scaled = table.clone();
            for per_source in scaled.entries.values_mut() {
                for signals in per_source.values_mut() {
                    *signals = signals.scaled(c);
                }
            }
            let agg = aggregate_pair(&scaled, "a", "b", &scheme, &params, &Source::ALL);
            for s in Source::ALL {
                let (x, y) = (base.source(s), agg.source(s));
                if x.majority.prediction != y.majority.prediction || x.ttest.prediction != y.ttest.prediction {
                    return Err(format!("table {case}, c = {c}: {s} prediction changed"));
                }
                for combo in Combo::ALL {
                    worst = worst.max((x.score(combo).score - y.score(combo).score).abs());
                }
            }
        }
    }
    if worst > SCALE_TOL {
        return Err(format!("max score change {worst:e}"));
    }
    Ok(format!(
        "1000 tables x c in {{1e-3, 7, 1e6}}: predictions unchanged, max score change {worst:.1e}"
    ))
}

fn margin_separated(rng: &mut ChaCha8Rng, n: usize) -> Vec<Sample> {
    let w = [1.0, -2.0, 0.5];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = FeatureVector([
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ]);
        let z = x.dot(&w);
        if z.abs() < 0.2 {
            continue;
        }
        let label = if z > 0.0 {
            Prediction::Greater
        } else {
            Prediction::Smaller
        };
        out.push(Sample { x, label });
    }
    out
}

fn logistic_regression() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);

    let mut worst_rel: f64 = 0.0;
    for _ in 0..20 {
        let samples: Vec<Sample> = (0..30)
            .map(|_| Sample {
                x: FeatureVector([
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]),
                label: if rng.random_bool(0.5) {
                    Prediction::Greater
                } else {
                    Prediction::Smaller
                },
            })
            .collect();
        let lambda = rng.random_range(0.0..5.0);
        let p: [f64; 4] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let g = regularized_gradient(&p, &samples, lambda);
        let mut diff = 0.0;
        let mut norm = 0.0;
        for i in 0..4 {
            let h = 1e-5 * p[i].abs().max(1.0);
            let (mut up, mut down) = (p, p);
            up[i] += h;
            down[i] -= h;
            let fd = (regularized_loss(&up, &samples, lambda) - regularized_loss(&down, &samples, lambda)) / (2.0 * h);
            diff += (g[i] - fd).powi(2);
            norm += g[i].powi(2);
        }
        worst_rel = worst_rel.max(diff.sqrt() / norm.sqrt().max(1e-300));
    }
    if worst_rel >= GRAD_REL_TOL {
        return Err(format!("gradient relative error {worst_rel:e}"));
    }

    let samples = margin_separated(&mut rng, 200);
    let config = TrainConfig {
        seed: SEED,
        ..TrainConfig::default()
    };
    let (model, _) = train_logreg(&samples, Combo::All, &config).map_err(|e| e.to_string())?;
    let correct = samples
        .iter()
        .filter(|s| logreg_predict(&model, &s.x, 1e-9).0 == s.label)
        .count();
    let accuracy = correct as f64 / samples.len() as f64;
    if accuracy < TRAIN_ACCURACY_MIN {
        return Err(format!("training accuracy {accuracy}"));
    }
    let (again, _) = train_logreg(&samples, Combo::All, &config).map_err(|e| e.to_string())?;
    let (a, b) = (
        model.to_json().map_err(|e| e.to_string())?,
        again.to_json().map_err(|e| e.to_string())?,
    );
    if a.as_bytes() != b.as_bytes() {
        return Err("model files differ between runs".into());
    }
    let took = within(LOGREG_LIMIT, start)?;
    Ok(format!(
        "gradient rel. error {worst_rel:.1e} at 20 points, training accuracy {:.1}%, model file byte-identical, {took:?}",
        100.0 * accuracy
    ))
}

fn quantity_corpus() -> Outcome {
    #[derive(serde::Deserialize)]
    struct Case {
        text: String,
        count: Option<f64>,
    }
    let text = std::fs::read_to_string(data("quantity_corpus.json")).map_err(|e| e.to_string())?;
    let cases: Vec<Case> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    if cases.len() < 30 {
        return Err(format!("only {} strings", cases.len()));
    }
    let wrong: Vec<String> = cases
        .iter()
        .filter(|c| parse_count(&c.text) != c.count)
        .map(|c| format!("{:?} -> {:?}", c.text, parse_count(&c.text)))
        .collect();
    if !wrong.is_empty() {
        return Err(wrong.join("; "));
    }
    for (phrase, want) in [
        ("an estimated 1.3 million rivers on Earth", 1_300_000.0),
        ("around 900 castles in the world", 900.0),
    ] {
        if !cases.iter().any(|c| c.text.contains(phrase)) {
            return Err(format!("corpus lacks {phrase:?}"));
        }
        if parse_count(phrase) != Some(want) {
            return Err(format!("{phrase:?} -> {:?}", parse_count(phrase)));
        }
    }
    Ok(format!(
        "{} strings exact, including the rivers and castles quotes",
        cases.len()
    ))
}

fn ensemble_bound_and_worked_example() -> Outcome {
    let scheme = SubgroupScheme::g20();
    let params = AggregationParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut extreme: f64 = 0.0;
    for _ in 0..1000 {
        let table = random_table(&mut rng, &scheme);
        let agg = aggregate_pair(&table, "a", "b", &scheme, &params, &Source::ALL);
        for s in Source::ALL {
            for combo in Combo::ALL {
                let v = agg.source(s).score(combo).score;
                if !(-1.0..=1.0).contains(&v) {
                    return Err(format!("score {v} outside [-1, 1]"));
                }
                extreme = extreme.max(v.abs());
            }
        }
    }
    let terms = EnsembleTerms::new(
        Source::Kb,
        Prediction::Greater,
        MajorityResult {
            prediction: Prediction::Greater,
            ratio_gt: 0.75,
            ratio_lt: 0.25,
            n_paired: 4,
        },
        TTestOutcome {
            result: TTestResult {
                t: -1.0,
                df: 3.0,
                p: 0.84,
                direction_tested: Direction::BGreater,
            },
            prediction: Prediction::Abstain,
        },
        Combo::All,
    );
    let got = ensemble_score(&terms).score;
    // (1 + 0.75 + 0) / 3
    let want = 7.0 / 12.0;
    if (got - want).abs() > WORKED_TOL {
        return Err(format!("worked example scores {got}"));
    }
    Ok(format!(
        "6000 random scores in [-1, 1] (max |s| {extreme}), worked example {got}"
    ))
}

struct ReplayRun {
    /// report.txt, report.csv, report.json of the first run.
    first: Vec<Vec<u8>>,
    second: Vec<Vec<u8>>,
    took: Duration,
}

const REPORT_FILES: [&str; 3] = ["report.txt", "report.csv", "report.json"];

fn dominance(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dominance"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .env_remove("BING_SEARCH_KEY")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn replay_once(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let dataset = s(data("replay/classes.csv"));
    let signals = s(dir.join("signals.json"));
    let models = s(dir.join("models"));
    let report = dir.join("report");
    dominance(&[
        "fetch",
        "--dataset",
        &dataset,
        "--cache",
        &s(data("replay/cache")),
        "--snippets",
        &s(data("replay/no-snippets")),
        "--signals",
        &signals,
    ])?;
    dominance(&[
        "train",
        "--seed",
        "7",
        "--dataset",
        &dataset,
        "--signals",
        &signals,
        "--model",
        &models,
    ])?;
    dominance(&[
        "evaluate",
        "--seed",
        "7",
        "--dataset",
        &dataset,
        "--signals",
        &signals,
        "--model",
        &models,
        "--report",
        &s(report.clone()),
    ])?;
    REPORT_FILES
        .iter()
        .map(|f| std::fs::read(report.join(f)).map_err(|e| e.to_string()))
        .collect()
}

fn run_replay() -> Result<ReplayRun, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let first = replay_once(&dir.path().join("run1"))?;
    let second = replay_once(&dir.path().join("run2"))?;
    Ok(ReplayRun {
        first,
        second,
        took: start.elapsed(),
    })
}

fn end_to_end(replay: &ReplayRun) -> Outcome {
    if replay.took >= REPLAY_LIMIT {
        return Err(format!("two runs took {:?}", replay.took));
    }
    for (i, name) in REPORT_FILES.iter().enumerate() {
        if replay.first[i] != replay.second[i] {
            return Err(format!("{name} differs between runs"));
        }
        let golden = std::fs::read(data("replay/expected").join(name)).map_err(|e| format!("{name}: {e}"))?;
        if replay.first[i] != golden {
            return Err(format!("{name} differs from data/replay/expected/{name}"));
        }
    }
    Ok(format!(
        "fetch -> train -> evaluate twice: reports byte-identical to each other and to data/replay/expected, {:?}",
        replay.took
    ))
}

fn main() {
    let replay = run_replay();
    let grid: Outcome = match &replay {
        Ok(r) => grid_shape(r),
        Err(e) => Err(e.clone()),
    };
    let e2e: Outcome = match &replay {
        Ok(r) => end_to_end(r),
        Err(e) => Err(e.clone()),
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("dataset combinatorics", pair_counts()),
        ("strategy grid shape", grid),
        ("statistics oracle", stats_oracle()),
        ("majority-vote brute force", majority_brute_force()),
        ("antisymmetry", antisymmetry()),
        ("scale invariance", scale_invariance()),
        ("logistic regression", logistic_regression()),
        ("quantity corpus", quantity_corpus()),
        ("ensemble bound and worked example", ensemble_bound_and_worked_example()),
        ("end-to-end replay", e2e),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
