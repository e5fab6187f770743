//! Reference implementations used only by tests. Nothing here shares code
//! with the library kernels it checks.

#![allow(dead_code)]

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
///
/// With `x = sqrt(df) * tan(theta)` the unnormalized density
/// `(1 + x^2/df)^(-(df+1)/2) dx` becomes `sqrt(df) * cos(theta)^(df-1) dtheta`,
/// so the tail is a ratio of two integrals over a bounded interval and no
/// gamma function is needed.
pub fn t_sf_quadrature(t: f64, df: f64) -> f64 {
    let f = |theta: f64| theta.cos().max(0.0).powf(df - 1.0);
    let half = std::f64::consts::FRAC_PI_2;
    let total = 2.0 * adaptive_simpson(&f, 0.0, half, 1e-15);
    let theta_t = (t / df.sqrt()).atan();
    if theta_t >= 0.0 {
        adaptive_simpson(&f, theta_t, half, 1e-15) / total
    } else {
        1.0 - adaptive_simpson(&f, -theta_t, half, 1e-15) / total
    }
}

pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// Welch statistic and Welch–Satterthwaite degrees of freedom, written out
/// longhand from the raw samples.
pub fn welch_reference(a: &[f64], b: &[f64]) -> (f64, f64) {
    let moments = |x: &[f64]| {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (n, mean, var)
    };
    let (na, ma, va) = moments(a);
    let (nb, mb, vb) = moments(b);
    let sa = va / na;
    let sb = vb / nb;
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    (t, df)
}

/// One-sided p-value of the Welch test in the direction of the larger mean.
pub fn one_sided_p_reference(a: &[f64], b: &[f64]) -> f64 {
    let (t, df) = welch_reference(a, b);
    t_sf_quadrature(t.abs(), df)
}
