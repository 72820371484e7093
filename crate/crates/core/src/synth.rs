//! Synthetic data: per-gene Gaussian posterior means, full lCNR panels with
//! injected copy-number changes and noisy strata, and raw log-depth profiles
//! for reference-pool experiments.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayescnv::density::softlaplace_quantile;
use crate::error::{Error, Result};
use crate::panel_io::{CountsRecord, GeneDef, LcnrMatrix, PanelDef, DEFAULT_PSEUDO_COUNT};
use crate::seed::{derive_index, rng_for, rng_from, SimRng};
use crate::stats;

/// Copy numbers below this are clamped before taking `ln(CN / 2)`, standing
/// in for the depth floor of a homozygous deletion.
pub const MIN_COPY_NUMBER: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseFamily {
    SoftLaplace,
    /// Student-t with `df` degrees of freedom, scaled like the SoftLaplace.
    StudentT {
        df: f64,
    },
}

impl Default for NoiseFamily {
    fn default() -> Self {
        NoiseFamily::SoftLaplace
    }
}

impl NoiseFamily {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseFamily::SoftLaplace => {
                let u: f64 = rng.random::<f64>().clamp(1e-300, 1.0 - 1e-16);
                softlaplace_quantile(u, 0.0, 1.0)
            }
            NoiseFamily::StudentT { df } => StudentT::new(df).expect("validated df").sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positive {
    /// Sample index in `0..N`.
    pub sample: usize,
    pub gene: String,
    pub copy_number: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub genes: Vec<String>,
    pub n_per_gene: Vec<usize>,
    /// Bias δ_j of the per-sample gene mean (lCNR units).
    pub delta: Vec<f64>,
    /// Variance τ_j² of the per-sample gene mean around δ_j.
    pub tau2: Vec<f64>,
    /// SoftLaplace scale of amplicon noise per gene.
    pub amplicon_scale: Vec<f64>,
    /// Off-target amplicons that only enter the median normalization.
    pub background_amplicons: usize,
    /// Multiplier of the amplicon noise in each stratum.
    pub amplicon_noise_scale: Vec<f64>,
    pub stratum_fractions: Vec<f64>,
    pub positives: Vec<Positive>,
    pub noise: NoiseFamily,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// Five genes of 4 to 20 amplicons plus 112 off-target amplicons, 172 in all.
    fn default() -> Self {
        let genes: Vec<String> = (1..=5).map(|i| format!("GENE{i}")).collect();
        SynthSpec {
            n_per_gene: vec![4, 8, 12, 16, 20],
            delta: vec![0.0; 5],
            tau2: vec![0.0025; 5],
            amplicon_scale: vec![0.1; 5],
            background_amplicons: 112,
            amplicon_noise_scale: vec![1.0],
            stratum_fractions: vec![1.0],
            positives: Vec::new(),
            noise: NoiseFamily::SoftLaplace,
            seed: 0,
            genes,
        }
    }
}

impl SynthSpec {
    /// Single-stratum spec for the given genes with shared parameters.
    pub fn uniform(
        names: &[&str],
        sizes: &[usize],
        delta: f64,
        tau2: f64,
        amplicon_scale: f64,
    ) -> Self {
        let j = names.len();
        SynthSpec {
            genes: names.iter().map(|s| s.to_string()).collect(),
            n_per_gene: sizes.to_vec(),
            delta: vec![delta; j],
            tau2: vec![tau2; j],
            amplicon_scale: vec![amplicon_scale; j],
            background_amplicons: 0,
            ..SynthSpec::default()
        }
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.genes.len();
        if j == 0 {
            return Err(Error::Config("synthetic spec has no genes".into()));
        }
        for (name, len) in [
            ("n_per_gene", self.n_per_gene.len()),
            ("delta", self.delta.len()),
            ("tau2", self.tau2.len()),
            ("amplicon_scale", self.amplicon_scale.len()),
        ] {
            if len != j {
                return Err(Error::Config(format!(
                    "{name} has {len} entries for {j} genes"
                )));
            }
        }
        if self.n_per_gene.contains(&0) {
            return Err(Error::Config(
                "every gene needs at least one amplicon".into(),
            ));
        }
        if self
            .tau2
            .iter()
            .chain(&self.amplicon_scale)
            .any(|v| !(*v > 0.0) || !v.is_finite())
        {
            return Err(Error::Config(
                "variances and scales must be positive".into(),
            ));
        }
        if self.delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("delta must be finite".into()));
        }
        if self.stratum_fractions.is_empty()
            || self.stratum_fractions.len() != self.amplicon_noise_scale.len()
        {
            return Err(Error::Config(
                "stratum_fractions and amplicon_noise_scale need one entry per stratum".into(),
            ));
        }
        let total: f64 = self.stratum_fractions.iter().sum();
        if self.stratum_fractions.iter().any(|f| !(*f >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "stratum fractions must be non-negative and sum to 1, got {total}"
            )));
        }
        if self
            .amplicon_noise_scale
            .iter()
            .any(|v| !(*v > 0.0) || !v.is_finite())
        {
            return Err(Error::Config(
                "stratum noise scales must be positive".into(),
            ));
        }
        if let NoiseFamily::StudentT { df } = self.noise {
            if !(df > 0.0) {
                return Err(Error::Config(format!(
                    "Student-t degrees of freedom must be positive, got {df}"
                )));
            }
        }
        for p in &self.positives {
            if !(p.copy_number >= 0.0) || !p.copy_number.is_finite() {
                return Err(Error::Config(format!(
                    "copy number must be non-negative, got {}",
                    p.copy_number
                )));
            }
            if !self.genes.contains(&p.gene) {
                return Err(Error::Config(format!(
                    "positive names unknown gene '{}'",
                    p.gene
                )));
            }
        }
        Ok(())
    }

    /// Stratum of sample `i` out of `n`: consecutive blocks sized by the
    /// fractions (rounded), the last block taking the remainder.
    pub fn stratum_of(&self, i: usize, n: usize) -> usize {
        let mut edge = 0.0;
        for (s, f) in self.stratum_fractions.iter().enumerate() {
            edge += f * n as f64;
            if (i as f64) < edge.round() {
                return s;
            }
        }
        self.stratum_fractions.len() - 1
    }
}

pub fn sample_id(i: usize) -> String {
    format!("sim{i:04}")
}

/// `N` i.i.d. draws of `N(δ_j, τ_j²)` for every gene.
pub fn gen_gene_means(spec: &SynthSpec, n: usize) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    Ok(spec
        .genes
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let mut rng = rng_for(spec.seed, &format!("gene-means/{g}"));
            normal_draws(spec.delta[j], spec.tau2[j].sqrt(), n, &mut rng)
        })
        .collect())
}

/// `n` draws of `N(mean, sd²)`.
pub fn normal_draws<R: Rng>(mean: f64, sd: f64, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleLabel {
    pub sample_id: String,
    pub stratum: usize,
    /// Per-gene mean before amplicon noise and normalization.
    pub true_means: Vec<f64>,
    pub copy_numbers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPanel {
    pub genes: Vec<String>,
    pub samples: Vec<LcnrMatrix>,
    pub labels: Vec<SampleLabel>,
}

impl SyntheticPanel {
    /// Per-gene copy-number-2 indicator for every sample.
    pub fn diploid(&self, sample: usize, gene: usize) -> bool {
        self.labels[sample].copy_numbers[gene] == 2.0
    }

    pub fn panel_def(&self) -> Result<PanelDef> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::invalid("synthetic panel has no samples"))?;
        PanelDef::new(
            first
                .genes
                .iter()
                .zip(&first.amplicon_ids)
                .map(|(name, ids)| GeneDef {
                    name: name.clone(),
                    amplicon_ids: ids.clone(),
                })
                .collect(),
        )
    }

    /// Read counts reproducing the lCNRs up to rounding: the reference count
    /// is `depth` and the test count `depth · exp(lCNR)`. Off-target
    /// amplicons are not rendered, so re-normalizing these counts shifts
    /// each sample by the difference of the two medians.
    pub fn counts_records(&self, depth: u64) -> Vec<CountsRecord> {
        let mut out = Vec::new();
        for s in &self.samples {
            for (ids, vals) in s.amplicon_ids.iter().zip(&s.values) {
                for (id, v) in ids.iter().zip(vals) {
                    out.push(CountsRecord {
                        sample_id: s.sample_id.clone(),
                        amplicon_id: id.clone(),
                        test_count: (depth as f64 * v.exp()).round() as u64,
                        ref_count: depth,
                    });
                }
            }
        }
        out
    }
}

fn copy_number_shift(cn: f64) -> f64 {
    (cn.max(MIN_COPY_NUMBER) / 2.0).ln()
}

/// `N` median-normalized lCNR samples with ground-truth labels.
///
/// Sample `i` draws gene means `δ_j + ln(CN/2) + N(0, τ_j²)`; every amplicon
/// adds independent noise of the chosen family scaled by the gene's amplicon
/// scale and the stratum multiplier. Off-target amplicons carry noise only.
pub fn gen_panel(spec: &SynthSpec, n: usize) -> Result<SyntheticPanel> {
    spec.validate()?;
    for p in &spec.positives {
        if p.sample >= n {
            return Err(Error::Config(format!(
                "positive refers to sample {} of {n}",
                p.sample
            )));
        }
    }
    let mut cns: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for p in &spec.positives {
        let j = spec
            .genes
            .iter()
            .position(|g| *g == p.gene)
            .expect("validated");
        cns.insert((p.sample, j), p.copy_number);
    }
    let amplicon_ids: Vec<Vec<String>> = spec
        .genes
        .iter()
        .zip(&spec.n_per_gene)
        .map(|(g, &k)| (1..=k).map(|a| format!("{g}_{a}")).collect())
        .collect();
    let (samples, labels): (Vec<_>, Vec<_>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(derive_index(spec.seed, "panel", i as u64));
            let stratum = spec.stratum_of(i, n);
            let mult = spec.amplicon_noise_scale[stratum];
            let copy_numbers: Vec<f64> = (0..spec.n_genes())
                .map(|j| *cns.get(&(i, j)).unwrap_or(&2.0))
                .collect();
            let true_means: Vec<f64> = (0..spec.n_genes())
                .map(|j| {
                    let z: f64 = rng.sample(StandardNormal);
                    spec.delta[j] + copy_number_shift(copy_numbers[j]) + spec.tau2[j].sqrt() * z
                })
                .collect();
            let mut values: Vec<Vec<f64>> = (0..spec.n_genes())
                .map(|j| {
                    let scale = spec.amplicon_scale[j] * mult;
                    (0..spec.n_per_gene[j])
                        .map(|_| true_means[j] + scale * spec.noise.draw(&mut rng))
                        .collect()
                })
                .collect();
            let bg_scale = stats::mean(&spec.amplicon_scale) * mult;
            let mut all: Vec<f64> = values.iter().flatten().copied().collect();
            all.extend(
                (0..spec.background_amplicons).map(|_| bg_scale * spec.noise.draw(&mut rng)),
            );
            let med = stats::median(&all);
            values.iter_mut().flatten().for_each(|v| *v -= med);
            let id = sample_id(i);
            let lcnr = LcnrMatrix::new(
                id.clone(),
                spec.genes.clone(),
                amplicon_ids.clone(),
                values,
                DEFAULT_PSEUDO_COUNT,
            )
            .expect("consistent shapes");
            (
                lcnr,
                SampleLabel {
                    sample_id: id,
                    stratum,
                    true_means,
                    copy_numbers,
                },
            )
        })
        .unzip();
    Ok(SyntheticPanel {
        genes: spec.genes.clone(),
        samples,
        labels,
    })
}

/// Raw log-depth profiles for reference-pool experiments.
///
/// Every amplicon has a capture efficiency shared by all samples. Degraded
/// samples lose `shift` log-depth on the affected genes and carry
/// `noise_mult` times the amplicon noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSpec {
    pub genes: Vec<String>,
    pub n_per_gene: Vec<usize>,
    pub background_amplicons: usize,
    pub capture_sd: f64,
    pub amplicon_scale: f64,
    pub affected_genes: Vec<String>,
    pub shift: f64,
    pub noise_mult: f64,
    pub seed: u64,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        let base = SynthSpec::default();
        ProfileSpec {
            affected_genes: vec![base.genes[0].clone(), base.genes[2].clone()],
            genes: base.genes,
            n_per_gene: base.n_per_gene,
            background_amplicons: base.background_amplicons,
            capture_sd: 0.5,
            amplicon_scale: 0.05,
            shift: 0.3,
            noise_mult: 2.0,
            seed: 0,
        }
    }
}

/// Per-sample log depths: the gene amplicons in panel order followed by the
/// off-target amplicons.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProfile {
    pub sample_id: String,
    pub degraded: bool,
    pub values: Vec<f64>,
}

impl ProfileSpec {
    pub fn validate(&self) -> Result<()> {
        if self.genes.is_empty() || self.genes.len() != self.n_per_gene.len() {
            return Err(Error::Config(
                "profile spec needs one amplicon count per gene".into(),
            ));
        }
        if !(self.amplicon_scale > 0.0) || !(self.capture_sd >= 0.0) || !(self.noise_mult > 0.0) {
            return Err(Error::Config("profile scales must be positive".into()));
        }
        if let Some(g) = self.affected_genes.iter().find(|g| !self.genes.contains(g)) {
            return Err(Error::Config(format!(
                "affected gene '{g}' is not on the panel"
            )));
        }
        Ok(())
    }

    fn n_amplicons(&self) -> usize {
        self.n_per_gene.iter().sum::<usize>() + self.background_amplicons
    }

    /// `n_clean` clean then `n_degraded` degraded profiles.
    pub fn generate(&self, n_clean: usize, n_degraded: usize) -> Result<Vec<LogProfile>> {
        self.validate()?;
        let total = self.n_amplicons();
        let mut cap_rng = rng_for(self.seed, "capture");
        let capture = normal_draws(0.0, self.capture_sd, total, &mut cap_rng);
        let mut affected = vec![false; total];
        let mut k = 0;
        for (g, &n) in self.genes.iter().zip(&self.n_per_gene) {
            if self.affected_genes.contains(g) {
                affected[k..k + n].iter_mut().for_each(|a| *a = true);
            }
            k += n;
        }
        Ok((0..n_clean + n_degraded)
            .into_par_iter()
            .map(|i| {
                let degraded = i >= n_clean;
                let mut rng: SimRng = rng_from(derive_index(self.seed, "profile", i as u64));
                let scale = self.amplicon_scale * if degraded { self.noise_mult } else { 1.0 };
                let values = (0..total)
                    .map(|a| {
                        let noise = scale * NoiseFamily::SoftLaplace.draw(&mut rng);
                        let loss = if degraded && affected[a] {
                            -self.shift
                        } else {
                            0.0
                        };
                        capture[a] + loss + noise
                    })
                    .collect();
                LogProfile {
                    sample_id: format!("{}{i:03}", if degraded { "bad" } else { "good" }),
                    degraded,
                    values,
                }
            })
            .collect())
    }

    /// Median-normalized lCNR of `test` against the mean of `refs`.
    pub fn lcnr_against(&self, test: &LogProfile, refs: &[&LogProfile]) -> Result<LcnrMatrix> {
        if refs.is_empty() {
            return Err(Error::invalid("reference pool is empty"));
        }
        let mut raw: Vec<f64> = test.values.clone();
        for (a, v) in raw.iter_mut().enumerate() {
            *v -= refs.iter().map(|r| r.values[a]).sum::<f64>() / refs.len() as f64;
        }
        let med = stats::median(&raw);
        let mut values = Vec::with_capacity(self.genes.len());
        let mut ids = Vec::with_capacity(self.genes.len());
        let mut k = 0;
        for (g, &n) in self.genes.iter().zip(&self.n_per_gene) {
            values.push(raw[k..k + n].iter().map(|v| v - med).collect());
            ids.push((1..=n).map(|a| format!("{g}_{a}")).collect());
            k += n;
        }
        LcnrMatrix::new(
            test.sample_id.clone(),
            self.genes.clone(),
            ids,
            values,
            DEFAULT_PSEUDO_COUNT,
        )
    }
}

/// Normal draws with a given seed, used by oracles that need a plain sample.
pub fn gaussian_sample(mean: f64, sd: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let dist = Normal::new(mean, sd).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = rng_from(seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_panel_shape() {
        let spec = SynthSpec::default();
        spec.validate().unwrap();
        assert_eq!(
            spec.n_per_gene.iter().sum::<usize>() + spec.background_amplicons,
            172
        );
        assert!(spec.n_per_gene.iter().all(|n| (4..=20).contains(n)));
    }

    #[test]
    fn gene_means_reproducible_and_centered() {
        let spec = SynthSpec::uniform(&["A"], &[1], 0.0, 1.0, 0.1);
        let a = gen_gene_means(&spec, 100_000).unwrap();
        let b = gen_gene_means(&spec, 100_000).unwrap();
        assert_eq!(a, b);
        assert!(stats::mean(&a[0]).abs() < 3.0 / (100_000f64).sqrt());
    }

    #[test]
    fn copy_number_shifts() {
        let mut spec = SynthSpec::uniform(&["A", "B", "C"], &[30, 30, 30], 0.0, 1e-8, 0.02);
        spec.background_amplicons = 60;
        spec.positives = vec![Positive {
            sample: 1,
            gene: "B".into(),
            copy_number: 4.0,
        }];
        let p = gen_panel(&spec, 3).unwrap();
        let m = |s: usize, j: usize| stats::mean(&p.samples[s].values[j]);
        assert!((m(1, 1) - 2f64.ln()).abs() < 0.02);
        assert!(m(1, 0).abs() < 0.02 && m(0, 1).abs() < 0.02);
        assert!(!p.diploid(1, 1) && p.diploid(1, 0));
        assert_eq!(p.labels[1].copy_numbers, vec![2.0, 4.0, 2.0]);
    }

    #[test]
    fn strata_blocks() {
        let mut spec = SynthSpec::default();
        spec.stratum_fractions = vec![0.5, 0.5];
        spec.amplicon_noise_scale = vec![1.0, 3.0];
        let strata: Vec<usize> = (0..7).map(|i| spec.stratum_of(i, 7)).collect();
        assert_eq!(strata, vec![0, 0, 0, 0, 1, 1, 1]);
        let p = gen_panel(&spec, 7).unwrap();
        assert_eq!(
            p.labels.iter().map(|l| l.stratum).collect::<Vec<_>>(),
            strata
        );
    }

    #[test]
    fn invalid_specs() {
        let mut s = SynthSpec::default();
        s.stratum_fractions = vec![0.7];
        assert!(s.validate().is_err());
        let mut s = SynthSpec::default();
        s.tau2[0] = 0.0;
        assert!(s.validate().is_err());
        let mut s = SynthSpec::default();
        s.positives.push(Positive {
            sample: 0,
            gene: "GENE1".into(),
            copy_number: -1.0,
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn degraded_reference_shifts_affected_genes() {
        let spec = ProfileSpec::default();
        let profiles = spec.generate(2, 5).unwrap();
        let refs: Vec<&LogProfile> = profiles[2..].iter().collect();
        let l = spec.lcnr_against(&profiles[0], &refs).unwrap();
        let g0 = stats::mean(&l.values[0]);
        let g1 = stats::mean(&l.values[1]);
        assert!((g0 - spec.shift).abs() < 0.1, "{g0}");
        assert!(g1.abs() < 0.1, "{g1}");
    }
}
