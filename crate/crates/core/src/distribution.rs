//! Central and noncentral chi-square distribution functions.

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

/// `P(X <= x)` for `X ~ chi^2_k`.
pub fn chi2_cdf(x: f64, k: usize) -> f64 {
    assert!(k >= 1, "chi-square degrees of freedom must be >= 1");
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    gamma_lr(k as f64 / 2.0, x / 2.0)
}

/// Upper tail `P(X > x)`, accurate for small p-values.
pub fn chi2_sf(x: f64, k: usize) -> f64 {
    assert!(k >= 1, "chi-square degrees of freedom must be >= 1");
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(k as f64 / 2.0, x / 2.0)
}

/// Inverse of [`chi2_cdf`] by safeguarded Newton iteration.
pub fn chi2_quantile(prob: f64, k: usize) -> f64 {
    assert!(
        (0.0..1.0).contains(&prob),
        "quantile level must lie in [0, 1)"
    );
    if prob == 0.0 {
        return 0.0;
    }
    let kf = k as f64;
    let (mut lo, mut hi) = (0.0, kf.max(1.0));
    while chi2_cdf(hi, k) < prob {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let f = chi2_cdf(x, k) - prob;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // density of chi^2_k at x
        let ln_pdf =
            (kf / 2.0 - 1.0) * x.ln() - x / 2.0 - (kf / 2.0) * 2f64.ln() - ln_gamma(kf / 2.0);
        let step = f / ln_pdf.exp();
        if step.abs() <= 1e-15 * x {
            return x - step;
        }
        let newton = x - step;
        // Newton only when it stays well inside the bracket; otherwise bisect.
        x = if newton.is_finite() && newton > lo && newton < hi && step.abs() < 0.5 * (hi - lo) {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-15 * x.max(1e-300) {
            break;
        }
    }
    x
}

/// `P(X <= x)` for `X ~ chi^2_k(gamma)` with noncentrality `gamma`, as a
/// Poisson(`gamma/2`) mixture of central chi-squares with `k + 2j` degrees of
/// freedom. Terms are added until the remaining Poisson mass is below `1e-12`.
pub fn noncentral_chi2_cdf(x: f64, k: usize, gamma: f64) -> f64 {
    assert!(gamma >= 0.0, "noncentrality must be >= 0");
    if gamma == 0.0 {
        return chi2_cdf(x, k);
    }
    if x <= 0.0 {
        return 0.0;
    }
    let half = gamma / 2.0;
    let mut acc = 0.0;
    let mut mass = 0.0;
    let mut j = 0usize;
    loop {
        let ln_w = -half + j as f64 * half.ln() - ln_gamma(j as f64 + 1.0);
        let w = ln_w.exp();
        acc += w * chi2_cdf(x, k + 2 * j);
        mass += w;
        j += 1;
        if (j as f64 > half && 1.0 - mass < 1e-12) || j > 100_000 {
            break;
        }
    }
    acc.clamp(0.0, 1.0)
}

/// Asymptotic power `1 - F(q_{1-alpha}; d, gamma)` of a level-`alpha` chi-square test.
pub fn chi2_power(alpha: f64, d: usize, gamma: f64) -> f64 {
    let q = chi2_quantile(1.0 - alpha, d);
    1.0 - noncentral_chi2_cdf(q, d, gamma)
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `sample` and `cdf`.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s: Vec<f64> = sample.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            ((i as f64 + 1.0) / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max)
}
