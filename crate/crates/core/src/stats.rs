//! Sample moments, Welch's two-sample t statistic, the Student-t survival
//! function and the one-sided significance vote built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Prediction;

const BETA_CF_TOLERANCE: f64 = 1e-12;
const BETA_CF_MAX_ITER: usize = 300;
const FPMIN: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    /// Unbiased (divisor n - 1).
    pub variance: f64,
}

pub fn sample_stats(values: &[f64]) -> Result<SampleStats> {
    if values.len() < 2 {
        return Err(Error::InsufficientSample(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // two-pass with compensation term
    let (ss, comp) = values.iter().fold((0.0, 0.0), |(ss, comp), v| {
        let d = v - mean;
        (ss + d * d, comp + d)
    });
    let variance = ((ss - comp * comp / n) / (n - 1.0)).max(0.0);
    Ok(SampleStats {
        n: values.len(),
        mean,
        variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchT {
    pub t: f64,
    pub df: f64,
}

pub fn welch_t(a: &SampleStats, b: &SampleStats) -> Result<WelchT> {
    if a.variance == 0.0 && b.variance == 0.0 {
        return Err(Error::DegenerateSamples);
    }
    let sa = a.variance / a.n as f64;
    let sb = b.variance / b.n as f64;
    let se2 = sa + sb;
    let t = (a.mean - b.mean) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.n as f64 - 1.0) + sb * sb / (b.n as f64 - 1.0));
    Ok(WelchT { t, df })
}

/// `P(T > t)` for Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    debug_assert!(df > 0.0, "df must be positive");
    if t == 0.0 {
        return 0.5;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    let tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x, y);
    if t > 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// `I_x(a, b)`, taking `y = 1 - x` separately so callers can avoid the
/// cancellation in `1 - x` near 1.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, y) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_CF_TOLERANCE {
            return h;
        }
    }
    log::debug!("incomplete beta continued fraction hit the iteration cap (a={a}, b={b}, x={x})");
    h
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AGreater,
    BGreater,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub direction_tested: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestOutcome {
    pub result: TTestResult,
    pub prediction: Prediction,
}

impl TTestOutcome {
    /// The "not enough data" outcome: abstain with p = 1.
    pub fn abstain() -> Self {
        TTestOutcome {
            result: TTestResult {
                t: 0.0,
                df: 1.0,
                p: 1.0,
                direction_tested: Direction::None,
            },
            prediction: Prediction::Abstain,
        }
    }
}

fn decide(direction: Direction, t: f64, df: f64, p: f64, alpha: f64) -> TTestOutcome {
    let prediction = match direction {
        Direction::AGreater if p <= alpha => Prediction::Greater,
        Direction::BGreater if p <= alpha => Prediction::Smaller,
        _ => Prediction::Abstain,
    };
    TTestOutcome {
        result: TTestResult {
            t,
            df,
            p,
            direction_tested: direction,
        },
        prediction,
    }
}

/// Welch one-sided test in the direction of the larger sample mean.
pub fn one_sided_ttest(a_values: &[f64], b_values: &[f64], alpha: f64) -> Result<TTestOutcome> {
    let a = sample_stats(a_values)?;
    let b = sample_stats(b_values)?;
    let direction = if a.mean > b.mean {
        Direction::AGreater
    } else if b.mean > a.mean {
        Direction::BGreater
    } else {
        Direction::None
    };

    let welch = match welch_t(&a, &b) {
        Ok(w) => w,
        Err(Error::DegenerateSamples) => {
            let df = (a.n + b.n - 2) as f64;
            return Ok(match direction {
                Direction::None => decide(direction, 0.0, df, 0.5, alpha),
                Direction::AGreater => decide(direction, f64::INFINITY, df, 0.0, alpha),
                Direction::BGreater => decide(direction, f64::NEG_INFINITY, df, 0.0, alpha),
            });
        }
        Err(e) => return Err(e),
    };

    let p = match direction {
        Direction::AGreater => student_t_sf(welch.t, welch.df),
        // t(B, A) is exactly -t(A, B)
        Direction::BGreater => student_t_sf(-welch.t, welch.df),
        Direction::None => 0.5,
    };
    Ok(decide(direction, welch.t, welch.df, p, alpha))
}

/// One-sample t-test on the differences `a[i] - b[i]`.
pub fn paired_one_sided_ttest(a_values: &[f64], b_values: &[f64], alpha: f64) -> Result<TTestOutcome> {
    assert_eq!(a_values.len(), b_values.len(), "paired samples differ in length");
    let diffs: Vec<f64> = a_values.iter().zip(b_values).map(|(a, b)| a - b).collect();
    let d = sample_stats(&diffs)?;
    let df = (d.n - 1) as f64;
    let direction = if d.mean > 0.0 {
        Direction::AGreater
    } else if d.mean < 0.0 {
        Direction::BGreater
    } else {
        Direction::None
    };
    if d.variance == 0.0 {
        return Ok(match direction {
            Direction::None => decide(direction, 0.0, df, 0.5, alpha),
            Direction::AGreater => decide(direction, f64::INFINITY, df, 0.0, alpha),
            Direction::BGreater => decide(direction, f64::NEG_INFINITY, df, 0.0, alpha),
        });
    }
    let t = d.mean / (d.variance / d.n as f64).sqrt();
    let p = match direction {
        Direction::AGreater => student_t_sf(t, df),
        Direction::BGreater => student_t_sf(-t, df),
        Direction::None => 0.5,
    };
    Ok(decide(direction, t, df, p, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn moments() {
        let s = sample_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.n, s.mean, s.variance), (3, 2.0, 1.0));
        let s = sample_stats(&[5.0; 4]).unwrap();
        assert_eq!((s.mean, s.variance), (5.0, 0.0));
        assert!(matches!(sample_stats(&[7.0]), Err(Error::InsufficientSample(1))));
    }

    #[test]
    fn welch_examples() {
        let s = sample_stats(&[1.0, 2.0, 3.0]).unwrap();
        let w = welch_t(&s, &s).unwrap();
        assert_eq!(w.t, 0.0);
        assert_abs_diff_eq!(w.df, 4.0, epsilon = 1e-12);

        let a = sample_stats(&[10.0, 12.0, 14.0]).unwrap();
        let w = welch_t(&a, &s).unwrap();
        // t = 10 / sqrt(5/3), df = 50/17
        assert_abs_diff_eq!(w.t, 10.0 / (5.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(w.df, 50.0 / 17.0, epsilon = 1e-12);

        let z = sample_stats(&[0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(welch_t(&z, &z), Err(Error::DegenerateSamples)));
    }

    #[test]
    fn sf_closed_forms() {
        assert_eq!(student_t_sf(0.0, 3.7), 0.5);
        // Cauchy
        assert_abs_diff_eq!(student_t_sf(1.0, 1.0), 0.25, epsilon = 1e-14);
        // df = 2: sf(t) = 1/2 - t / (2 sqrt(t^2 + 2))
        for t in [-3.0, -0.4, 0.3, 1.7, 12.0] {
            let exact = 0.5 - t / (2.0 * (t * t + 2.0f64).sqrt());
            assert_abs_diff_eq!(student_t_sf(t, 2.0), exact, epsilon = 1e-13);
        }
        // frozen from the quadrature oracle in tests/oracle
        assert_abs_diff_eq!(student_t_sf(2.0, 4.0), 0.058_058_261_758_407_75, epsilon = 1e-12);
    }

    #[test]
    fn sf_normal_limit() {
        let p = student_t_sf(1.96, 1e6);
        assert!((0.0249..=0.0251).contains(&p), "p = {p}");
    }

    #[test]
    fn ln_gamma_integers() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert_abs_diff_eq!(ln_gamma(n as f64), fact.ln(), epsilon = 1e-12);
            fact *= n as f64;
        }
        assert_abs_diff_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-13);
    }

    #[test]
    fn ttest_examples() {
        let out = one_sided_ttest(&[10.0, 12.0, 14.0], &[1.0, 2.0, 3.0], 0.05).unwrap();
        assert_eq!(out.prediction, Prediction::Greater);
        assert_eq!(out.result.direction_tested, Direction::AGreater);
        assert_abs_diff_eq!(out.result.p, 0.002_398_999_849_564_027, epsilon = 1e-10);

        let out = one_sided_ttest(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0.05).unwrap();
        assert_eq!(out.prediction, Prediction::Abstain);
        assert_eq!(out.result.p, 0.5);
        assert_eq!(out.result.direction_tested, Direction::None);

        let out = one_sided_ttest(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0], 0.05).unwrap();
        assert_eq!(out.prediction, Prediction::Abstain);
        assert_eq!(out.result.direction_tested, Direction::BGreater);
        assert_abs_diff_eq!(out.result.p, 0.143_932_067_363_345_4, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_samples_are_certain() {
        let out = one_sided_ttest(&[3.0, 3.0], &[1.0, 1.0, 1.0], 0.05).unwrap();
        assert_eq!(out.prediction, Prediction::Greater);
        assert_eq!(out.result.p, 0.0);
        let out = one_sided_ttest(&[2.0, 2.0], &[2.0, 2.0], 0.05).unwrap();
        assert_eq!(out.prediction, Prediction::Abstain);
        assert_eq!(out.result.p, 0.5);
        assert!(one_sided_ttest(&[1.0], &[1.0, 2.0], 0.05).is_err());
    }

    #[test]
    fn paired_mode() {
        // differences 9, 10, 11: mean 10, sd 1, t = 10 sqrt(3)
        let out = paired_one_sided_ttest(&[10.0, 12.0, 14.0], &[1.0, 2.0, 3.0], 0.05).unwrap();
        assert_abs_diff_eq!(out.result.t, 10.0 * 3.0f64.sqrt(), epsilon = 1e-12);
        assert_eq!(out.result.df, 2.0);
        assert_eq!(out.prediction, Prediction::Greater);
        let out = paired_one_sided_ttest(&[2.0, 3.0], &[1.0, 2.0], 0.05).unwrap();
        assert_eq!(out.result.p, 0.0);
        assert_eq!(out.prediction, Prediction::Greater);
    }

    proptest! {
        #[test]
        fn sf_is_complementary(t in -50.0f64..50.0, df in 0.5f64..500.0) {
            let s = student_t_sf(t, df) + student_t_sf(-t, df);
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn sf_decreases(t in -30.0f64..30.0, dt in 1e-3f64..5.0, df in 0.5f64..300.0) {
            let (hi, lo) = (student_t_sf(t, df), student_t_sf(t + dt, df));
            prop_assert!(lo <= hi);
            // strict wherever the tail is representable away from 0 and 1
            if hi < 1.0 - 1e-12 && lo > 1e-290 {
                prop_assert!(lo < hi, "sf({}) = {} vs sf({}) = {}", t, hi, t + dt, lo);
            }
        }

        #[test]
        fn ttest_antisymmetric(
            a in proptest::collection::vec(0.0f64..1e4, 2..12),
            b in proptest::collection::vec(0.0f64..1e4, 2..12),
        ) {
            let ab = one_sided_ttest(&a, &b, 0.05).unwrap();
            let ba = one_sided_ttest(&b, &a, 0.05).unwrap();
            prop_assert_eq!(ab.prediction, -ba.prediction);
            prop_assert_eq!(ab.result.p.to_bits(), ba.result.p.to_bits());
        }

        #[test]
        fn ttest_scale_invariant(
            a in proptest::collection::vec(1.0f64..1e4, 3..12),
            b in proptest::collection::vec(1.0f64..1e4, 3..12),
            c in prop_oneof![Just(1e-3), Just(7.0), Just(1e6)],
        ) {
            let base = one_sided_ttest(&a, &b, 0.05).unwrap();
            let ca: Vec<f64> = a.iter().map(|v| v * c).collect();
            let cb: Vec<f64> = b.iter().map(|v| v * c).collect();
            let scaled = one_sided_ttest(&ca, &cb, 0.05).unwrap();
            prop_assert_eq!(base.prediction, scaled.prediction);
            prop_assert!((base.result.p - scaled.result.p).abs() <= 1e-12);
            prop_assert!((base.result.t - scaled.result.t).abs() <= 1e-9 * base.result.t.abs().max(1.0));
        }
    }
}
