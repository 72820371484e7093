use ampcal_core::bayescnv::gaussian::GaussianLocationModel;
use ampcal_core::bayescnv::optimize::neg_hessian_fd;
use ampcal_core::bayescnv::{
    fit_sample, map_estimate, FitSettings, HmcSettings, MapSettings, ModelHyperParams,
};
use ampcal_core::comparators::{coarsened_intervals, sandwich_covariance, ComparatorInterval};
use ampcal_core::synth::{gaussian_sample, gen_panel, SynthSpec};

const HMC: HmcSettings = HmcSettings {
    n_warmup: 300,
    n_draws: 1500,
    n_leapfrog: 32,
    target_accept: 0.8,
};

fn mean_width(iv: &[ComparatorInterval]) -> f64 {
    iv.iter().map(|i| i.hi - i.lo).sum::<f64>() / iv.len() as f64
}

#[test]
fn coarsening_widens_intervals_and_is_exact_at_eta_one() {
    let panel = gen_panel(
        &SynthSpec {
            seed: 2,
            ..SynthSpec::default()
        },
        1,
    )
    .unwrap();
    let lcnr = &panel.samples[0];
    let hp = ModelHyperParams::default();
    let widths: Vec<f64> = [1.0, 0.5, 0.2]
        .iter()
        .map(|&eta| mean_width(&coarsened_intervals(lcnr, &hp, eta, 0.95, &HMC, 4).unwrap()))
        .collect();
    assert!(
        widths[0] <= widths[1] && widths[1] <= widths[2],
        "{widths:?}"
    );

    let settings = FitSettings {
        hmc: HMC,
        ..FitSettings::default()
    };
    let fit = fit_sample(lcnr, &hp, &settings, 4).unwrap();
    let at_one = coarsened_intervals(lcnr, &hp, 1.0, 0.95, &HMC, 4).unwrap();
    for (iv, hpd) in at_one.iter().zip(&fit.summary.hpd) {
        assert_eq!((iv.lo, iv.hi), (hpd.lo, hpd.hi));
    }
}

/// Sandwich and model-based variances of μ_1 in a one-gene location model.
fn variance_ratio(data_sd: f64, model_tau2: f64) -> f64 {
    let x = gaussian_sample(0.3, data_sd, 4000, 8).unwrap();
    let m = GaussianLocationModel::new(vec![x], 10.0, 1.0, vec![model_tau2]);
    let map = map_estimate(&m, &[0.0, 0.0], &MapSettings::default()).unwrap();
    let sandwich = sandwich_covariance(&m, &map.x).unwrap();
    let h_inv = neg_hessian_fd(&m, &map.x).try_inverse().unwrap();
    sandwich[(1, 1)] / h_inv[(1, 1)]
}

#[test]
fn sandwich_reduces_to_inverse_information_when_correct() {
    let r = variance_ratio(0.2, 0.04);
    assert!((r - 1.0).abs() < 0.1, "ratio {r}");
}

#[test]
fn sandwich_doubles_interval_under_fourfold_variance() {
    let r = variance_ratio(0.4, 0.04).sqrt();
    assert!((r - 2.0).abs() < 0.2, "width ratio {r}");
}
