//! Small numerical toolbox shared by the pipeline stages: order statistics,
//! robust scale, Normal and Gamma quantiles, Kolmogorov–Smirnov statistics
//! and percentile bootstrap intervals.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_lr, gamma_ur};

/// Consistency factor turning a MAD into a Gaussian standard deviation,
/// `1 / Φ⁻¹(3/4)`.
pub const MAD_TO_SD: f64 = 1.4826;

fn total_cmp(a: &f64, b: &f64) -> std::cmp::Ordering {
    a.total_cmp(b)
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(total_cmp);
    v
}

/// Median of an already sorted slice. Even lengths use the mean of the two
/// middle order statistics.
pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "median of empty slice");
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn median(values: &[f64]) -> f64 {
    median_sorted(&sorted(values))
}

/// Raw median absolute deviation (no consistency factor).
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with the `n - 1` denominator; zero for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_sf(x: f64) -> f64 {
    std_normal().sf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Trigamma function ψ'(x) for x > 0.
///
/// Recurrence up to x ≥ 10, then the asymptotic series.
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    let series = r
        + r2 / 2.0
        + r * r2
            * (1.0 / 6.0
                + r2 * (-1.0 / 30.0 + r2 * (1.0 / 42.0 + r2 * (-1.0 / 30.0 + r2 * 5.0 / 66.0))));
    acc + series
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

pub fn gamma_cdf(shape: f64, scale: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(shape, x / scale)
    }
}

pub fn gamma_sf(shape: f64, scale: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(shape, x / scale)
    }
}

pub fn gamma_ln_pdf(shape: f64, scale: f64, x: f64) -> f64 {
    (shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - ln_gamma(shape)
}

/// Quantile of Gamma(shape, scale) at probability `prob`.
///
/// Bracketed Newton iteration on `ln x`, using the lower regularized
/// incomplete gamma below the median and the upper one above it so extreme
/// upper quantiles keep full relative precision.
pub fn gamma_quantile(shape: f64, scale: f64, prob: f64) -> f64 {
    assert!(
        shape > 0.0 && scale > 0.0,
        "gamma parameters must be positive"
    );
    if prob <= 0.0 {
        return 0.0;
    }
    if prob >= 1.0 {
        return f64::INFINITY;
    }
    let upper = prob > 0.5;
    let q = 1.0 - prob;
    // increasing in y = ln x in both branches
    let residual = |y: f64| {
        let x = y.exp();
        if upper {
            q - gamma_ur(shape, x)
        } else {
            gamma_lr(shape, x) - prob
        }
    };
    let ln_norm = ln_gamma(shape);
    // d residual / dy = x · pdf(x)
    let slope = |y: f64| (shape * y - y.exp() - ln_norm).exp();

    // Wilson–Hilferty start
    let z = normal_quantile(prob);
    let c = 1.0 / (9.0 * shape);
    let wh = shape * (1.0 - c + z * c.sqrt()).powi(3);
    let mut y = if wh > 0.0 {
        wh.ln()
    } else {
        (prob * (ln_norm + shape.ln()).exp()).ln() / shape
    };

    let (mut lo, mut hi) = (y, y);
    let mut width = 1.0;
    while residual(lo) > 0.0 {
        lo -= width;
        width *= 2.0;
        if lo < -745.0 {
            return 0.0;
        }
    }
    width = 1.0;
    while residual(hi) < 0.0 {
        hi += width;
        width *= 2.0;
        if hi > 709.0 {
            return f64::INFINITY;
        }
    }
    y = y.clamp(lo, hi);

    for _ in 0..200 {
        let r = residual(y);
        if r == 0.0 {
            break;
        }
        if r < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let mut next = y - r / slope(y);
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        let done =
            (next - y).abs() <= 1e-15 * y.abs().max(1.0) || hi - lo <= 1e-15 * hi.abs().max(1.0);
        y = next;
        if done {
            break;
        }
    }
    y.exp() * scale
}

/// Quantile of |X| for X ~ N(mean, sd²) (folded Normal), by bisection on
/// `Φ((q-μ)/σ) - Φ((-q-μ)/σ)`.
pub fn folded_normal_quantile(mean: f64, sd: f64, prob: f64) -> f64 {
    let cdf = |q: f64| normal_cdf((q - mean) / sd) - normal_cdf((-q - mean) / sd);
    let mut lo = 0.0;
    let mut hi = mean.abs() + 10.0 * sd;
    while cdf(hi) < prob {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Asymptotic Kolmogorov survival function Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test; returns `(D, p_value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let a = sorted(a);
    let b = sorted(b);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let s = sorted(sample);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_mean_ci<R: Rng>(
    values: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let s: f64 = (0..n).map(|_| values[rng.random_range(0..n)]).sum();
            s / n as f64
        })
        .collect();
    means.sort_by(total_cmp);
    let alpha = 0.5 * (1.0 - level);
    (
        empirical_quantile_sorted(&means, alpha),
        empirical_quantile_sorted(&means, 1.0 - alpha),
    )
}

/// Linear-interpolation quantile (type 7) of a sorted slice.
pub fn empirical_quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[0.0, 1.0]), 0.5);
        assert_eq!(mad(&[1.0, 2.0, 3.0, 4.0]), 1.0);
    }

    #[test]
    fn mad_constant_matches_normal_quartile() {
        assert!((MAD_TO_SD - 1.0 / normal_quantile(0.75)).abs() < 1e-4);
    }

    #[test]
    fn trigamma_reference_values() {
        assert!((trigamma(1.0) - 1.644_934_066_848_226_4).abs() < 1e-12);
        assert!((trigamma(0.5) - 4.934_802_200_544_679).abs() < 1e-12);
        assert!((trigamma(10.0) - 0.105_166_335_681_685_75).abs() < 1e-12);
    }

    #[test]
    fn trigamma_is_derivative_of_digamma() {
        for &x in &[0.05, 0.3, 1.7, 8.0, 55.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((fd - trigamma(x)).abs() / trigamma(x) < 1e-7, "x={x}");
        }
    }

    #[test]
    fn gamma_quantile_inverts_cdf() {
        for &shape in &[0.05, 0.3, 0.5, 1.0, 2.5, 40.0] {
            for &p in &[1e-6, 0.01, 0.3, 0.5, 0.9, 0.99, 0.999, 1.0 - 1e-9] {
                let x = gamma_quantile(shape, 1.5, p);
                let back = if p > 0.5 {
                    1.0 - gamma_sf(shape, 1.5, x)
                } else {
                    gamma_cdf(shape, 1.5, x)
                };
                let tol = if p > 0.5 {
                    1e-10 * (1.0 - p).max(1e-3)
                } else {
                    1e-10 * p.max(1e-3)
                };
                assert!(
                    (back - p).abs() <= tol.max(1e-14),
                    "shape={shape} p={p} x={x} back={back}"
                );
            }
        }
    }

    #[test]
    fn chi_square_one_quantile() {
        // chi2_1 quantile equals the squared two-sided normal quantile
        let z = normal_quantile(0.975);
        assert!((gamma_quantile(0.5, 2.0, 0.95) - z * z).abs() < 1e-10);
    }

    #[test]
    fn folded_normal_centered_is_two_sided_normal() {
        let q = folded_normal_quantile(0.0, 1.0, 0.95);
        assert!((q - normal_quantile(0.975)).abs() < 1e-10);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
    }

    #[test]
    fn ks_shifted_samples_reject() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!((d - 0.2).abs() < 2e-3);
        assert!(p < 1e-10);
    }

    #[test]
    fn type7_quantile() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(empirical_quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(empirical_quantile_sorted(&v, 1.0), 4.0);
    }
}
