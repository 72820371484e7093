use ampcal_core::bayescnv::HmcSettings;
use ampcal_core::harness::biasvar::{bias_variance_decomposition, BiasVarConfig};
use ampcal_core::harness::coverage::PosteriorMeans;
use ampcal_core::harness::sweep::{estimator_sweep, Estimator, SweepConfig};
use ampcal_core::seed::rng_from;
use ampcal_core::synth::{LogProfile, ProfileSpec};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// Large-sample limit of the imputation map when a fraction `f` of
/// `N(0, sd²)` data is replaced: median and 1.4826·MAD of the retained bulk,
/// truncated-normal draws above its maximum, then the `|X|` quantile.
fn imputed_quantile_limit(sd: f64, f: f64, level: f64) -> f64 {
    let n = 400_000;
    let mut rng = rng_from(99);
    let mut x: Vec<f64> = (0..n)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    x.sort_by(f64::total_cmp);
    let l = n - (f * n as f64) as usize;
    let bulk = &x[..l];
    let xi = bulk[l / 2];
    let mut dev: Vec<f64> = bulk.iter().map(|v| (v - xi).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let omega = 1.4826 * dev[l / 2];
    let fit = Normal::new(xi, omega).unwrap();
    let tail = fit.sf(bulk[l - 1]);
    let mut y: Vec<f64> = bulk.to_vec();
    y.extend((l..n).map(|_| fit.inverse_cdf(1.0 - rng.random::<f64>() * tail)));
    let mut a: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    a.sort_by(f64::total_cmp);
    a[(level * n as f64) as usize]
}

#[test]
fn fixed_m_estimators_agree_at_large_n() {
    let cfg = SweepConfig {
        delta: 0.0,
        n_grid: vec![2000],
        replicates: 8,
        reps: 3,
        seed: 6,
        ..SweepConfig::default()
    };
    let rows = estimator_sweep(&cfg).unwrap();
    let get = |e: Estimator| {
        rows.iter()
            .find(|r| r.estimator == e)
            .unwrap()
            .mean_estimate
    };
    let truth = cfg.true_value();
    for e in [Estimator::Empirical, Estimator::Noprior, Estimator::Prior] {
        assert!(
            (get(e) / truth - 1.0).abs() < 0.01,
            "{e:?}: {} vs {truth}",
            get(e)
        );
    }
    // Imputing a fifth of the sample converges to the limit of the bulk fit
    // on the truncated sample, not to the truth.
    let limit = imputed_quantile_limit(cfg.tau2.sqrt(), 0.2, 0.95);
    let scaled = get(Estimator::PriorScaledM);
    assert!(
        (scaled / limit - 1.0).abs() < 0.03,
        "{scaled} vs limit {limit} (truth {truth})"
    );
}

#[test]
fn degraded_references_shift_affected_lcnr_by_the_planted_amount() {
    let spec = ProfileSpec {
        seed: 8,
        ..ProfileSpec::default()
    };
    let profiles = spec.generate(10, 3).unwrap();
    let refs: Vec<&LogProfile> = profiles.iter().filter(|p| p.degraded).collect();
    let mut diffs = Vec::new();
    for test in profiles.iter().filter(|p| !p.degraded) {
        let m = spec.lcnr_against(test, &refs).unwrap();
        let (mut hit, mut miss) = (Vec::new(), Vec::new());
        for (g, v) in m.genes.iter().zip(&m.values) {
            if spec.affected_genes.contains(g) {
                hit.extend(v)
            } else {
                miss.extend(v)
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        diffs.push(mean(&hit) - mean(&miss));
    }
    let d = diffs.iter().sum::<f64>() / diffs.len() as f64;
    assert!(
        (d - spec.shift).abs() < 0.08,
        "affected minus unaffected lCNR {d} vs {}",
        spec.shift
    );
}

#[test]
fn posterior_bias_grows_with_degraded_references() {
    let cfg = BiasVarConfig {
        n_clean: 10,
        n_degraded: 3,
        pool_size: 3,
        bootstrap_b: 3,
        means: PosteriorMeans::Map,
        hmc: HmcSettings::default(),
        seed: 4,
        ..BiasVarConfig::default()
    };
    let rows = bias_variance_decomposition(&cfg).unwrap();
    let shift = cfg.profile.shift;
    for g in &cfg.profile.affected_genes {
        let bias: Vec<f64> = rows
            .iter()
            .filter(|r| &r.gene == g)
            .map(|r| r.bias)
            .collect();
        assert!(bias.windows(2).all(|w| w[1] > w[0]), "{g}: {bias:?}");
        // shrinkage toward the panel mean keeps the gene-level bias below the shift
        let last = bias[cfg.pool_size];
        assert!(last > 0.5 * shift && last < 1.1 * shift, "{g}: {last}");
    }
    for r in rows.iter().filter(|r| r.n_degraded == 0) {
        assert!(
            r.bias.abs() < 0.05,
            "{}: clean pool bias {}",
            r.gene,
            r.bias
        );
    }
}
