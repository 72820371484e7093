//! Median split of a validation cohort on log model evidence, with a
//! separate tolerance model per stratum.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayescnv::PosteriorSummary;
use crate::error::{Error, Result};
use crate::imputation::{impute_repetitions, GeneCohort, ImputeCount};
use crate::stats;
use crate::tolerance::{fit_repetitions, GammaToleranceModel, PseudoPriorSpec, ToleranceFit};

/// Cohorts smaller than this are refused unless forced.
pub const MIN_COHORT: usize = 20;
/// Every stratum must keep at least this many samples.
pub const MIN_STRATUM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stratum {
    Plus,
    Minus,
}

impl Stratum {
    pub fn label(&self) -> &'static str {
        match self {
            Stratum::Plus => "PLUS",
            Stratum::Minus => "MINUS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedAssignment {
    pub sample_ids: Vec<String>,
    pub evidence: Vec<f64>,
    pub z_med: f64,
    pub stratum: Vec<Stratum>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl StratifiedAssignment {
    pub fn stratum_of(&self, id: &str) -> Option<Stratum> {
        self.sample_ids
            .iter()
            .position(|s| s == id)
            .map(|i| self.stratum[i])
    }

    pub fn members(&self, which: Stratum) -> Vec<&str> {
        self.sample_ids
            .iter()
            .zip(&self.stratum)
            .filter(|(_, s)| **s == which)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn as_map(&self) -> BTreeMap<String, Stratum> {
        self.sample_ids
            .iter()
            .cloned()
            .zip(self.stratum.iter().copied())
            .collect()
    }
}

/// Split on the evidence median; `Z_s ≥ Z_med` goes to PLUS.
pub fn evidence_split(
    sample_ids: &[String],
    evidence: &[f64],
    force: bool,
) -> Result<StratifiedAssignment> {
    let k = sample_ids.len();
    if evidence.len() != k {
        return Err(Error::invalid("sample ids and evidence differ in length"));
    }
    if let Some(z) = evidence.iter().find(|z| !z.is_finite()) {
        return Err(Error::invalid(format!("non-finite log evidence {z}")));
    }
    let mut warnings = Vec::new();
    if k < MIN_COHORT {
        let msg = format!(
            "stratification requires K > 20 so that each stratum keeps at least ten samples; \
             cohorts below {MIN_COHORT} are refused unless forced (K = {k})"
        );
        if !force {
            return Err(Error::Config(msg));
        }
        log::warn!("{msg}; continuing because the split was forced");
        warnings.push(format!("{msg}; split forced"));
    }
    let z_med = stats::median(evidence);
    let stratum: Vec<Stratum> = evidence
        .iter()
        .map(|&z| {
            if z >= z_med {
                Stratum::Plus
            } else {
                Stratum::Minus
            }
        })
        .collect();
    let plus = stratum.iter().filter(|s| **s == Stratum::Plus).count();
    let minus = k - plus;
    if plus < MIN_STRATUM || minus < MIN_STRATUM {
        return Err(Error::invalid(format!(
            "each stratum must retain at least ten observations (PLUS {plus}, MINUS {minus})"
        )));
    }
    Ok(StratifiedAssignment {
        sample_ids: sample_ids.to_vec(),
        evidence: evidence.to_vec(),
        z_med,
        stratum,
        warnings,
    })
}

pub fn evidence_split_summaries(
    summaries: &[PosteriorSummary],
    force: bool,
) -> Result<StratifiedAssignment> {
    let ids: Vec<String> = summaries.iter().map(|s| s.sample_id.clone()).collect();
    let z: Vec<f64> = summaries.iter().map(|s| s.log_evidence).collect();
    evidence_split(&ids, &z, force)
}

/// Knobs of one tolerance pipeline run on a gene cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct TolerancePlan {
    pub impute: ImputeCount,
    pub reps: usize,
    pub prior: Option<PseudoPriorSpec>,
    pub seed: u64,
}

impl TolerancePlan {
    /// Impute, then fit every repetition.
    pub fn fit(&self, cohort: &GeneCohort) -> Result<ToleranceFit> {
        let m = self.impute.resolve(cohort.len());
        let reps = impute_repetitions(cohort, m, self.reps, self.seed)?;
        fit_repetitions(&reps, self.prior.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumModels {
    pub plus: GammaToleranceModel,
    pub minus: GammaToleranceModel,
}

/// Per gene, a tolerance model for each stratum, fitted on disjoint samples.
/// The same pseudo-prior is attached to both strata.
pub fn stratified_tolerance(
    assignment: &StratifiedAssignment,
    cohorts: &[GeneCohort],
    plan: &TolerancePlan,
    p: f64,
) -> Result<BTreeMap<String, StratumModels>> {
    let fits = stratified_fits(assignment, cohorts, plan)?;
    fits.into_iter()
        .map(|(g, (plus, minus))| {
            Ok((
                g,
                StratumModels {
                    plus: plus.model(p)?,
                    minus: minus.model(p)?,
                },
            ))
        })
        .collect()
}

/// Level-independent per-stratum fits, keyed by gene.
pub fn stratified_fits(
    assignment: &StratifiedAssignment,
    cohorts: &[GeneCohort],
    plan: &TolerancePlan,
) -> Result<BTreeMap<String, (ToleranceFit, ToleranceFit)>> {
    let map = assignment.as_map();
    let per_gene = cohorts
        .par_iter()
        .map(|c| {
            let parts = [Stratum::Plus, Stratum::Minus]
                .map(|which| c.filter(|i| map.get(&c.sample_ids[i]) == Some(&which)));
            for part in &parts {
                if part.len() < MIN_STRATUM {
                    return Err(Error::invalid(format!(
                        "gene {}: stratum has {} samples with posteriors, at least ten are needed",
                        c.gene,
                        part.len()
                    )));
                }
            }
            let plus_ids: HashSet<&String> = parts[0].sample_ids.iter().collect();
            assert!(
                parts[1].sample_ids.iter().all(|id| !plus_ids.contains(id)),
                "strata share samples"
            );
            let [plus, minus] = parts;
            let fit = |cohort: GeneCohort, salt: u64| {
                let sub = TolerancePlan {
                    seed: crate::seed::derive_index(plan.seed, "stratum", salt),
                    ..plan.clone()
                };
                sub.fit(&cohort)
            };
            Ok((c.gene.clone(), (fit(plus, 0)?, fit(minus, 1)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_gene.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("s{i:02}")).collect()
    }

    #[test]
    fn odd_cohort_sizes() {
        let z: Vec<f64> = (0..21).map(|i| -(i as f64) * 1.5).collect();
        let a = evidence_split(&ids(21), &z, false).unwrap();
        assert_eq!(a.members(Stratum::Plus).len(), 11);
        assert_eq!(a.members(Stratum::Minus).len(), 10);
        assert_eq!(a.z_med, -15.0);
    }

    #[test]
    fn even_cohort_sizes() {
        let z: Vec<f64> = (0..24).map(|i| (i as f64).sin() * 10.0).collect();
        let a = evidence_split(&ids(24), &z, false).unwrap();
        assert_eq!(a.members(Stratum::Plus).len(), 12);
    }

    #[test]
    fn small_cohort_refused() {
        let z: Vec<f64> = (0..15).map(f64::from).collect();
        let err = evidence_split(&ids(15), &z, false).unwrap_err();
        assert!(err.to_string().contains("K > 20"));
        assert_eq!(err.exit_code(), 2);
        // forcing still cannot produce two strata of ten
        assert!(evidence_split(&ids(15), &z, true).is_err());
    }

    #[test]
    fn ties_go_plus_and_trip_stratum_floor() {
        let err = evidence_split(&ids(30), &vec![-5.0; 30], false).unwrap_err();
        assert!(err.to_string().contains("at least ten"));
    }

    #[test]
    fn order_invariant() {
        let z: Vec<f64> = (0..25).map(|i| ((i * 7) % 25) as f64).collect();
        let a = evidence_split(&ids(25), &z, false).unwrap();
        let mut pairs: Vec<(String, f64)> = ids(25).into_iter().zip(z).collect();
        pairs.reverse();
        let (rid, rz): (Vec<String>, Vec<f64>) = pairs.into_iter().unzip();
        let b = evidence_split(&rid, &rz, false).unwrap();
        assert_eq!(a.as_map(), b.as_map());
    }
}
