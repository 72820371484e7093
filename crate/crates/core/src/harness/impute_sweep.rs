use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imputation::{impute_repetitions, GeneCohort, MIN_BULK};
use crate::seed::{derive_index, rng_from};
use crate::stats;
use crate::synth::normal_draws;
use crate::tolerance::{fit_repetitions, PseudoPriorSpec};

/// A gene cohort with known CNV-positive samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCohort {
    pub cohort: GeneCohort,
    pub positive: Vec<bool>,
}

impl LabeledCohort {
    pub fn n_positive(&self) -> usize {
        self.positive.iter().filter(|&&p| p).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeSweepRow {
    pub replicate: usize,
    pub gene: String,
    pub n_positive: usize,
    pub fraction: f64,
    pub m: usize,
    pub t_hat: f64,
    pub t_true: f64,
    pub rel_error: f64,
}

/// Tolerance from the full cohort with a growing imputed fraction, against
/// the tolerance fitted on the negatives alone without imputation.
pub fn imputation_fraction_sweep(
    cohorts: &[LabeledCohort],
    fractions: &[f64],
    reps: usize,
    prior: Option<&PseudoPriorSpec>,
    p: f64,
    seed: u64,
) -> Result<Vec<ImputeSweepRow>> {
    if let Some(f) = fractions.iter().find(|f| !(**f >= 0.0 && **f < 1.0)) {
        return Err(Error::Config(format!(
            "imputed fraction must lie in [0, 1), got {f}"
        )));
    }
    let mut rows = Vec::new();
    for lc in cohorts {
        let c = &lc.cohort;
        if lc.positive.len() != c.len() {
            return Err(Error::invalid(format!(
                "gene {}: one positive flag per sample is required",
                c.gene
            )));
        }
        let negatives = c.filter(|i| !lc.positive[i]);
        let t_true = fit_repetitions(&impute_repetitions(&negatives, 0, 1, seed)?, prior)?
            .tolerance(p)?
            .0;
        for &f in fractions {
            let m =
                (((f * c.len() as f64) - 1e-9).ceil().max(0.0) as usize).min(c.len() - MIN_BULK);
            let rep_seed = derive_index(seed, &c.gene, (f * 1e6).round() as u64);
            let t_hat = fit_repetitions(&impute_repetitions(c, m, reps, rep_seed)?, prior)?
                .tolerance(p)?
                .0;
            rows.push(ImputeSweepRow {
                replicate: 0,
                gene: c.gene.clone(),
                n_positive: lc.n_positive(),
                fraction: f,
                m,
                t_hat,
                t_true,
                rel_error: (t_hat - t_true).abs() / t_true,
            });
        }
    }
    Ok(rows)
}

/// Synthetic gene-level cohorts: every gene draws `N(0, τ²)` means, and the
/// first `n_positive` samples of the positive gene are shifted by
/// `ln(CN / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeSweepConfig {
    pub genes: Vec<String>,
    pub k: usize,
    pub tau2: f64,
    pub positive_gene: String,
    pub n_positive: usize,
    pub copy_number: f64,
    pub fractions: Vec<f64>,
    pub reps: usize,
    pub p: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for ImputeSweepConfig {
    fn default() -> Self {
        let genes: Vec<String> = (1..=5).map(|i| format!("GENE{i}")).collect();
        ImputeSweepConfig {
            positive_gene: genes[2].clone(),
            genes,
            k: 14,
            tau2: 0.01,
            n_positive: 5,
            copy_number: 6.0,
            fractions: (0..=10).map(|i| i as f64 * 0.05).collect(),
            reps: 25,
            p: 0.05,
            replicates: 50,
            seed: 0,
        }
    }
}

impl ImputeSweepConfig {
    pub fn cohorts(&self, replicate: usize) -> Result<Vec<LabeledCohort>> {
        if !self.genes.contains(&self.positive_gene) {
            return Err(Error::Config(format!(
                "positive gene '{}' is not listed",
                self.positive_gene
            )));
        }
        if self.n_positive > self.k || !(self.tau2 > 0.0) || !(self.copy_number > 0.0) {
            return Err(Error::Config(
                "invalid imputation sweep cohort parameters".into(),
            ));
        }
        let shift = (self.copy_number / 2.0).ln();
        let ids: Vec<String> = (0..self.k).map(crate::synth::sample_id).collect();
        self.genes
            .iter()
            .map(|g| {
                let mut rng = rng_from(derive_index(
                    self.seed,
                    &format!("impute-sweep/{g}"),
                    replicate as u64,
                ));
                let mut mu = normal_draws(0.0, self.tau2.sqrt(), self.k, &mut rng);
                let positive: Vec<bool> = (0..self.k)
                    .map(|i| *g == self.positive_gene && i < self.n_positive)
                    .collect();
                for (v, &pos) in mu.iter_mut().zip(&positive) {
                    if pos {
                        *v += shift;
                    }
                }
                Ok(LabeledCohort {
                    cohort: GeneCohort::new(g.clone(), ids.clone(), mu)?,
                    positive,
                })
            })
            .collect()
    }

    pub fn run(&self) -> Result<Vec<ImputeSweepRow>> {
        if self.replicates == 0 {
            return Err(Error::Config("at least one replicate is required".into()));
        }
        let per: Vec<Vec<ImputeSweepRow>> = (0..self.replicates)
            .into_par_iter()
            .map(|r| {
                let cohorts = self.cohorts(r)?;
                let seed = derive_index(self.seed, "impute-sweep/fit", r as u64);
                let mut rows = imputation_fraction_sweep(
                    &cohorts,
                    &self.fractions,
                    self.reps,
                    None,
                    self.p,
                    seed,
                )?;
                rows.iter_mut().for_each(|row| row.replicate = r);
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        Ok(per.into_iter().flatten().collect())
    }
}

/// Mean and max relative error per (gene, fraction) over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeSweepSummary {
    pub gene: String,
    pub fraction: f64,
    pub mean_rel_error: f64,
    pub max_rel_error: f64,
    pub mean_ratio: f64,
}

pub fn summarize(rows: &[ImputeSweepRow]) -> Vec<ImputeSweepSummary> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(g, f)| *g == r.gene && *f == r.fraction) {
            keys.push((r.gene.clone(), r.fraction));
        }
    }
    keys.into_iter()
        .map(|(g, f)| {
            let sel: Vec<&ImputeSweepRow> = rows
                .iter()
                .filter(|r| r.gene == g && r.fraction == f)
                .collect();
            let errs: Vec<f64> = sel.iter().map(|r| r.rel_error).collect();
            let ratios: Vec<f64> = sel.iter().map(|r| r.t_hat / r.t_true).collect();
            ImputeSweepSummary {
                gene: g,
                fraction: f,
                mean_rel_error: stats::mean(&errs),
                max_rel_error: errs.iter().copied().fold(0.0, f64::max),
                mean_ratio: stats::mean(&ratios),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_positives_no_imputation_is_exact() {
        let cfg = ImputeSweepConfig {
            n_positive: 0,
            fractions: vec![0.0],
            replicates: 1,
            reps: 3,
            ..ImputeSweepConfig::default()
        };
        let rows = cfg.run().unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.rel_error < 1e-12));
    }

    #[test]
    fn positives_inflate_unimputed_tolerance() {
        let cfg = ImputeSweepConfig {
            fractions: vec![0.0, 0.4],
            replicates: 4,
            reps: 5,
            ..ImputeSweepConfig::default()
        };
        let s = summarize(&cfg.run().unwrap());
        let cnv0 = s
            .iter()
            .find(|r| r.gene == "GENE3" && r.fraction == 0.0)
            .unwrap();
        assert!(cnv0.mean_ratio > 3.0, "{cnv0:?}");
    }
}
