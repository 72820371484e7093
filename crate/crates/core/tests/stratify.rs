use ampcal_core::bayescnv::{HmcSettings, ModelHyperParams};
use ampcal_core::harness::coverage::{posterior_means, PosteriorMeans};
use ampcal_core::imputation::{GeneCohort, ImputeCount};
use ampcal_core::stratify::{evidence_split, stratified_tolerance, Stratum, TolerancePlan};
use ampcal_core::synth::{gen_panel, SynthSpec};

#[test]
fn noisy_stratum_gets_the_looser_tolerance() {
    let mut spec = SynthSpec {
        seed: 13,
        ..SynthSpec::default()
    };
    spec.stratum_fractions = vec![0.5, 0.5];
    spec.amplicon_noise_scale = vec![1.0, 3.0];
    let panel = gen_panel(&spec, 40).unwrap();
    let fits = posterior_means(
        &panel.samples,
        &ModelHyperParams::default(),
        PosteriorMeans::Map,
        &HmcSettings::default(),
        1,
    )
    .unwrap();
    let ids: Vec<String> = panel.samples.iter().map(|s| s.sample_id.clone()).collect();
    let evidence: Vec<f64> = fits.iter().map(|f| f.1).collect();
    let split = evidence_split(&ids, &evidence, false).unwrap();

    // the low-evidence half should be the noisy generator stratum
    let agree = split
        .stratum
        .iter()
        .zip(&panel.labels)
        .filter(|(s, l)| (**s == Stratum::Minus) == (l.stratum == 1))
        .count();
    assert!(
        agree >= 36,
        "{agree}/40 samples placed with their generator stratum"
    );

    let cohorts: Vec<GeneCohort> = spec
        .genes
        .iter()
        .enumerate()
        .map(|(j, g)| {
            GeneCohort::new(
                g.clone(),
                ids.clone(),
                fits.iter().map(|f| f.0[j]).collect(),
            )
            .unwrap()
        })
        .collect();
    let plan = TolerancePlan {
        impute: ImputeCount::default(),
        reps: 10,
        prior: None,
        seed: 2,
    };
    let models = stratified_tolerance(&split, &cohorts, &plan, 0.05).unwrap();
    for (gene, m) in &models {
        assert!(
            m.minus.t > m.plus.t,
            "{gene}: T- {} <= T+ {}",
            m.minus.t,
            m.plus.t
        );
    }
}
