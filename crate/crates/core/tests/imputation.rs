use ampcal_core::imputation::{impute_repetitions, truncated_normal_draw, BulkFit, GeneCohort};
use ampcal_core::seed::rng_from;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn truncated_draws_follow_the_closed_form_cdf() {
    let fit = BulkFit {
        xi_hat: 0.3,
        omega_hat: 1.2,
        threshold: 1.0,
        retained: 10,
        imputed: 1,
    };
    let normal = Normal::new(fit.xi_hat, fit.omega_hat).unwrap();
    let f_t = normal.cdf(fit.threshold);
    let mut rng = rng_from(3);
    let mut x: Vec<f64> = (0..100_000)
        .map(|_| truncated_normal_draw(&fit, rng.random::<f64>().max(f64::MIN_POSITIVE)))
        .collect();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let ks = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = (normal.cdf(v) - f_t) / (1.0 - f_t);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "KS statistic {ks}");
    assert!(x[0] >= fit.threshold);
}

#[test]
fn repetitions_are_reproducible_and_touch_only_the_top_values() {
    let mu: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin() * 0.1).collect();
    let cohort = GeneCohort::anonymous("G", mu.clone());
    let a = impute_repetitions(&cohort, 4, 5, 11).unwrap();
    assert_eq!(a, impute_repetitions(&cohort, 4, 5, 11).unwrap());
    let mut sorted = mu.clone();
    sorted.sort_by(f64::total_cmp);
    let t = sorted[15];
    for rep in &a {
        for (i, (&orig, &new)) in mu.iter().zip(&rep.values).enumerate() {
            if rep.imputed_mask[i] {
                assert!(orig > t && new >= t);
            } else {
                assert_eq!(orig, new);
            }
        }
    }
}
