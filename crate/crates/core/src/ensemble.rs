//! Cross-source aggregation: two-of-three voting and an intercept-free
//! logistic regression over the per-source ensemble scores.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::Combo;
use crate::error::{Error, Result};
use crate::model::{Prediction, Source};

/// A label wins when at least two sources output it. Agreement on
/// abstention is still abstention.
pub fn majority_vote_sources(preds: [Prediction; 3]) -> Prediction {
    let up = preds.iter().filter(|p| **p == Prediction::Greater).count();
    let down = preds.iter().filter(|p| **p == Prediction::Smaller).count();
    if up >= 2 {
        Prediction::Greater
    } else if down >= 2 {
        Prediction::Smaller
    } else {
        Prediction::Abstain
    }
}

/// Per-source scores in (KB, SE, LM) order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; 3]);

impl FeatureVector {
    /// Missing sources are imputed with the neutral score 0.
    pub fn from_scores(scores: impl IntoIterator<Item = (Source, Option<f64>)>) -> Self {
        let mut x = [0.0; 3];
        for (source, score) in scores {
            x[source.index()] = score.unwrap_or(0.0);
        }
        FeatureVector(x)
    }

    pub fn dot(&self, w: &[f64; 3]) -> f64 {
        self.0[0] * w[0] + self.0[1] * w[1] + self.0[2] * w[2]
    }
}

impl std::ops::Neg for FeatureVector {
    type Output = FeatureVector;

    fn neg(self) -> FeatureVector {
        FeatureVector(self.0.map(|v| -v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: FeatureVector,
    /// `Greater` or `Smaller`; abstentions cannot be training labels.
    pub label: Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub train_fraction: f64,
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub seed: u64,
    pub max_iterations: usize,
    pub convergence_tolerance: f64,
    pub fit_intercept: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            train_fraction: 0.8,
            folds: 5,
            lambda_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            seed: 0,
            max_iterations: 500,
            convergence_tolerance: 1e-6,
            fit_intercept: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be at least 2".into()));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig(
                "lambda grid must be nonempty and nonnegative".into(),
            ));
        }
        if self.convergence_tolerance <= 0.0 {
            return Err(Error::InvalidConfig("convergence tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Source weights of the weighted vote. The intercept stays at 0 unless
/// training was asked to fit one.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub combo: Combo,
    pub weights: [f64; 3],
    pub intercept: f64,
    pub lambda: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SourceWeights {
    #[serde(rename = "KB")]
    kb: f64,
    #[serde(rename = "SE")]
    se: f64,
    #[serde(rename = "LM")]
    lm: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    combo: Combo,
    weights: SourceWeights,
    intercept: f64,
    lambda: f64,
    seed: u64,
}

impl Serialize for LogRegModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelFile {
            combo: self.combo,
            weights: SourceWeights {
                kb: self.weights[0],
                se: self.weights[1],
                lm: self.weights[2],
            },
            intercept: self.intercept,
            lambda: self.lambda,
            seed: self.seed,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LogRegModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = ModelFile::deserialize(d)?;
        Ok(LogRegModel {
            combo: f.combo,
            weights: [f.weights.kb, f.weights.se, f.weights.lm],
            intercept: f.intercept,
            lambda: f.lambda,
            seed: f.seed,
        })
    }
}

impl LogRegModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: LogRegModel = serde_json::from_str(text)?;
        if m.weights
            .iter()
            .chain([&m.intercept, &m.lambda])
            .any(|v| !v.is_finite())
            || m.lambda < 0.0
        {
            return Err(Error::InvalidConfig(
                "model has non-finite weights or negative lambda".into(),
            ));
        }
        Ok(m)
    }

    pub fn decision(&self, x: &FeatureVector) -> f64 {
        let s = x.dot(&self.weights);
        if self.intercept != 0.0 {
            s + self.intercept
        } else {
            s
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Prediction and `p(|A| > |B|)`. Comparing the probability with its
/// complement is the same as testing the sign of the score.
pub fn logreg_predict(model: &LogRegModel, x: &FeatureVector, epsilon: f64) -> (Prediction, f64) {
    let score = model.decision(x);
    (Prediction::from_score(score, epsilon), sigmoid(score))
}

/// `log(1 + exp(-m))` without overflow.
fn log1p_exp_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

fn label_sign(label: Prediction) -> Result<f64> {
    match label {
        Prediction::Greater => Ok(1.0),
        Prediction::Smaller => Ok(-1.0),
        Prediction::Abstain => Err(Error::DegenerateTrainingSet(
            "abstention is not a training label".into(),
        )),
    }
}

/// Parameters are `[w_kb, w_se, w_lm, intercept]`; the intercept is never
/// penalized.
pub fn regularized_loss(params: &[f64; 4], samples: &[Sample], lambda: f64) -> f64 {
    let w = [params[0], params[1], params[2]];
    let nll: f64 = samples
        .iter()
        .map(|s| {
            let y = if s.label == Prediction::Greater { 1.0 } else { -1.0 };
            log1p_exp_neg(y * (s.x.dot(&w) + params[3]))
        })
        .sum();
    nll + 0.5 * lambda * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
}

pub fn regularized_gradient(params: &[f64; 4], samples: &[Sample], lambda: f64) -> [f64; 4] {
    let w = [params[0], params[1], params[2]];
    let mut g = [lambda * w[0], lambda * w[1], lambda * w[2], 0.0];
    for s in samples {
        let y = if s.label == Prediction::Greater { 1.0 } else { -1.0 };
        let m = y * (s.x.dot(&w) + params[3]);
        // d/dz log(1 + e^{-yz}) = -y * sigmoid(-m)
        let coef = -y * sigmoid(-m);
        for (gi, xi) in g.iter_mut().zip(s.x.0) {
            *gi += coef * xi;
        }
        g[3] += coef;
    }
    g
}

fn norm(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[allow(clippy::needless_range_loop)]
fn regularized_hessian(params: &[f64; 4], samples: &[Sample], lambda: f64) -> [[f64; 4]; 4] {
    let w = [params[0], params[1], params[2]];
    let mut h = [[0.0; 4]; 4];
    for i in 0..3 {
        h[i][i] = lambda;
    }
    for s in samples {
        let z = s.x.dot(&w) + params[3];
        let q = sigmoid(z) * sigmoid(-z);
        let v = [s.x.0[0], s.x.0[1], s.x.0[2], 1.0];
        for i in 0..4 {
            for j in 0..4 {
                h[i][j] += q * v[i] * v[j];
            }
        }
    }
    h
}

/// Solve `h d = g` over the first `n` coordinates by Cholesky; `None` when
/// `h` is not numerically positive definite.
#[allow(clippy::needless_range_loop)]
fn newton_direction(h: &[[f64; 4]; 4], g: &[f64; 4], n: usize) -> Option<[f64; 4]> {
    let mut l = [[0.0; 4]; 4];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = h[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 1e-12 * h[i][i].abs().max(1e-300) {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = [0.0; 4];
    for i in 0..n {
        let mut sum = g[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut d = [0.0; 4];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k][i] * d[k];
        }
        d[i] = sum / l[i][i];
    }
    d.iter().all(|v| v.is_finite()).then_some(d)
}

/// Damped Newton with Armijo backtracking; falls back to a gradient step
/// when the Hessian is singular. Returns the parameters on convergence.
fn minimize(samples: &[Sample], lambda: f64, config: &TrainConfig) -> Result<[f64; 4]> {
    let n = if config.fit_intercept { 4 } else { 3 };
    let mask = |mut g: [f64; 4]| {
        if n == 3 {
            g[3] = 0.0;
        }
        g
    };
    let lipschitz = 0.25
        * samples
            .iter()
            .map(|s| s.x.0.iter().map(|v| v * v).sum::<f64>() + if n == 4 { 1.0 } else { 0.0 })
            .sum::<f64>()
        + lambda;
    let safe_step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let mut p = [0.0; 4];
    let mut f = regularized_loss(&p, samples, lambda);
    let mut g = mask(regularized_gradient(&p, samples, lambda));
    let mut gnorm = norm(&g);

    for _ in 0..config.max_iterations {
        if gnorm <= config.convergence_tolerance {
            return Ok(p);
        }
        let h = regularized_hessian(&p, samples, lambda);
        let (d, mut t) = match newton_direction(&h, &g, n) {
            Some(d) if d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() > 0.0 => (d, 1.0),
            _ => (g, safe_step),
        };
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let (p_new, f_new) = loop {
            let cand = [p[0] - t * d[0], p[1] - t * d[1], p[2] - t * d[2], p[3] - t * d[3]];
            let fc = regularized_loss(&cand, samples, lambda);
            if fc <= f - 1e-4 * t * slope || t < 1e-12 {
                break (cand, fc);
            }
            t *= 0.5;
        };
        p = p_new;
        f = f_new;
        g = mask(regularized_gradient(&p, samples, lambda));
        gnorm = norm(&g);
    }
    if gnorm <= config.convergence_tolerance {
        return Ok(p);
    }
    Err(Error::NotConverged {
        iterations: config.max_iterations,
        gradient_norm: gnorm,
    })
}

/// Fit at one fixed regularization strength.
pub fn fit_logreg(samples: &[Sample], lambda: f64, combo: Combo, config: &TrainConfig) -> Result<LogRegModel> {
    check_labels(samples)?;
    let p = minimize(samples, lambda, config)?;
    Ok(LogRegModel {
        combo,
        weights: [p[0], p[1], p[2]],
        intercept: if config.fit_intercept { p[3] } else { 0.0 },
        lambda,
        seed: config.seed,
    })
}

fn check_labels(samples: &[Sample]) -> Result<()> {
    let mut pos = 0;
    let mut neg = 0;
    for s in samples {
        if label_sign(s.label)? > 0.0 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateTrainingSet(format!(
            "need both labels, got {pos} positive and {neg} negative"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub mean_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub combo: Combo,
    pub selected_lambda: f64,
    pub scores: Vec<LambdaScore>,
}

/// Select λ by stratified k-fold accuracy, then refit on every sample.
pub fn train_logreg(samples: &[Sample], combo: Combo, config: &TrainConfig) -> Result<(LogRegModel, CvReport)> {
    config.validate()?;
    check_labels(samples)?;
    if samples.len() < 2 * config.folds {
        return Err(Error::InvalidConfig(format!(
            "need at least {} samples for {}-fold cross-validation, got {}",
            2 * config.folds,
            config.folds,
            samples.len()
        )));
    }
    let labels: Vec<Prediction> = samples.iter().map(|s| s.label).collect();
    let assignment = kfold_split(samples.len(), config.folds, config.seed, &labels)?;

    let mut scores = Vec::with_capacity(config.lambda_grid.len());
    for &lambda in &config.lambda_grid {
        let mut fold_accuracies = Vec::with_capacity(config.folds);
        for fold in 0..config.folds {
            let in_fold = |i: usize| assignment[i] == fold;
            let train: Vec<Sample> = (0..samples.len())
                .filter(|&i| !in_fold(i))
                .map(|i| samples[i])
                .collect();
            let valid: Vec<&Sample> = (0..samples.len())
                .filter(|&i| in_fold(i))
                .map(|i| &samples[i])
                .collect();
            let model = fit_logreg(&train, lambda, combo, config)?;
            let correct = valid
                .iter()
                .filter(|s| logreg_predict(&model, &s.x, 0.0).0 == s.label)
                .count();
            fold_accuracies.push(correct as f64 / valid.len() as f64);
        }
        let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
        scores.push(LambdaScore {
            lambda,
            mean_accuracy,
            fold_accuracies,
        });
    }

    let best = scores
        .iter()
        .fold(None::<&LambdaScore>, |best, s| match best {
            None => Some(s),
            Some(b) if s.mean_accuracy > b.mean_accuracy => Some(s),
            Some(b) if s.mean_accuracy == b.mean_accuracy && s.lambda < b.lambda => Some(s),
            Some(b) => Some(b),
        })
        .expect("grid is nonempty");
    let selected_lambda = best.lambda;
    let model = fit_logreg(samples, selected_lambda, combo, config)?;
    Ok((
        model,
        CvReport {
            combo,
            selected_lambda,
            scores,
        },
    ))
}

/// Stratified, seeded fold assignment: `result[i]` is the fold of sample `i`.
pub fn kfold_split(n: usize, folds: usize, seed: u64, labels: &[Prediction]) -> Result<Vec<usize>> {
    if folds == 0 || folds > n {
        return Err(Error::InvalidConfig(format!(
            "cannot split {n} samples into {folds} folds"
        )));
    }
    if labels.len() != n {
        return Err(Error::InvalidConfig(format!("{} labels for {n} samples", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(n);
    for class in [Prediction::Greater, Prediction::Smaller, Prediction::Abstain] {
        let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        order.extend(idx);
    }
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % folds;
    }
    Ok(assignment)
}
