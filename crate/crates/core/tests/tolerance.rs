use ampcal_core::seed::rng_from;
use ampcal_core::synth::gaussian_sample;
use ampcal_core::tolerance::{
    attach_pseudo_prior, gamma_mle_weighted, moment_match, sample_gamma, LossSet, PseudoPriorSpec,
};

#[test]
fn mle_is_consistent_for_chi_square_losses() {
    let y = sample_gamma(0.5, 2.0, 100_000, &mut rng_from(1)).unwrap();
    let fit = gamma_mle_weighted(&LossSet::unweighted("g", y).unwrap()).unwrap();
    assert!(
        (fit.alpha_hat - 0.5).abs() < 0.01,
        "alpha {}",
        fit.alpha_hat
    );
    assert!((fit.s_hat - 2.0).abs() < 0.05, "scale {}", fit.s_hat);
}

#[test]
fn prior_alone_recovers_its_generating_gamma() {
    let (alpha, scale) = (1.7, 0.03);
    let prior = PseudoPriorSpec::generated(alpha, scale, 50_000, 1e4, 9).unwrap();
    let empty = LossSet::unweighted("g", Vec::new()).unwrap();
    let fit = gamma_mle_weighted(&attach_pseudo_prior(&empty, &prior)).unwrap();
    assert!(
        (fit.alpha_hat / alpha - 1.0).abs() < 0.02,
        "alpha {}",
        fit.alpha_hat
    );
    assert!(
        (fit.s_hat / scale - 1.0).abs() < 0.02,
        "scale {}",
        fit.s_hat
    );
}

#[test]
fn squared_normal_mean_matches_moment_identity() {
    let (delta, tau2): (f64, f64) = (0.2, 0.17);
    let x = gaussian_sample(delta, tau2.sqrt(), 100_000, 4).unwrap();
    let y: Vec<f64> = x.iter().map(|v| v * v).collect();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let se = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let (a, s) = moment_match(delta * delta / tau2, tau2).unwrap();
    assert!(
        (mean - a * s).abs() < 3.0 * se,
        "mean {mean} vs αs {}",
        a * s
    );
    assert!((a * s - (tau2 + delta * delta)).abs() < 1e-12);
}

#[test]
fn duplicated_losses_equal_doubled_weights() {
    let y = sample_gamma(0.8, 0.1, 40, &mut rng_from(5)).unwrap();
    let doubled = LossSet::new("g", y.clone(), vec![2.0; y.len()]).unwrap();
    let dup = LossSet::unweighted("g", y.iter().chain(&y).copied().collect()).unwrap();
    let (a, b) = (
        gamma_mle_weighted(&doubled).unwrap(),
        gamma_mle_weighted(&dup).unwrap(),
    );
    assert!((a.alpha_hat - b.alpha_hat).abs() < 1e-8 * b.alpha_hat);
    assert!((a.s_hat - b.s_hat).abs() < 1e-8 * b.s_hat);
}
