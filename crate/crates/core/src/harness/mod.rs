//! Evaluation procedures: leave-one-out coverage and MACE, the estimator
//! sweep, the imputation-fraction sweep, the pooled versus stratified
//! mixture study and the reference-pool bias/variance decomposition.

pub mod biasvar;
pub mod coverage;
pub mod impute_sweep;
pub mod mixture;
pub mod output;
pub mod sweep;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparators::Method;
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::stats;

pub use biasvar::{bias_variance_decomposition, BiasVarConfig, BiasVarRow};
pub use coverage::{
    fit_artifacts, interval_coverage, loo_coverage, loo_coverage_matrix, loo_coverage_with,
    panel_calibration, panel_coverage, ArtifactSettings, CalibrationConfig, PanelArtifacts,
    PosteriorMeans,
};
pub use impute_sweep::{
    imputation_fraction_sweep, ImputeSweepConfig, ImputeSweepRow, ImputeSweepSummary, LabeledCohort,
};
pub use mixture::{mixture_study, MixtureConfig, MixtureReport};
pub use sweep::{estimator_sweep, Estimator, SweepConfig, SweepResult};

pub const GRID_POINTS: usize = 31;
/// Level used in place of γ = 1, where every tolerance is infinite.
pub const GRID_CAP: f64 = 0.999;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Level at which interval widths are reported.
pub const WIDTH_LEVEL: f64 = 0.95;

/// Nominal levels 0.70, 0.71, …, 1.00.
pub fn mace_grid() -> Vec<f64> {
    (0..GRID_POINTS).map(|i| (70 + i) as f64 / 100.0).collect()
}

/// Level actually evaluated for a nominal grid point.
pub fn effective_level(nominal: f64) -> f64 {
    nominal.min(GRID_CAP)
}

/// `100 · mean |Ĉ(γ) - γ|`.
pub fn mace_x100(coverage: &[f64], grid: &[f64]) -> f64 {
    assert_eq!(coverage.len(), grid.len());
    100.0
        * coverage
            .iter()
            .zip(grid)
            .map(|(c, g)| (c - g).abs())
            .sum::<f64>()
        / grid.len() as f64
}

/// Per-fold coverage indicators across the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    pub grid: Vec<f64>,
    pub fold_ids: Vec<String>,
    /// `hits[f][g]`: fold `f` covered at grid point `g`.
    pub hits: Vec<Vec<bool>>,
    /// Interval width of each fold at [`WIDTH_LEVEL`].
    pub widths: Vec<f64>,
    pub excluded: Vec<String>,
}

impl CoverageMatrix {
    pub fn empty(grid: Vec<f64>) -> Self {
        CoverageMatrix {
            grid,
            fold_ids: Vec::new(),
            hits: Vec::new(),
            widths: Vec::new(),
            excluded: Vec::new(),
        }
    }

    pub fn n_folds(&self) -> usize {
        self.hits.len()
    }

    /// Append the folds of another matrix on the same grid.
    pub fn extend(&mut self, other: CoverageMatrix) {
        assert_eq!(
            self.grid, other.grid,
            "coverage matrices on different grids"
        );
        self.fold_ids.extend(other.fold_ids);
        self.hits.extend(other.hits);
        self.widths.extend(other.widths);
        self.excluded.extend(other.excluded);
    }

    pub fn coverage(&self) -> Vec<f64> {
        coverage_of(
            &self.hits,
            self.grid.len(),
            (0..self.hits.len()).collect::<Vec<_>>().as_slice(),
        )
    }

    pub fn mace_x100(&self) -> f64 {
        mace_x100(&self.coverage(), &self.grid)
    }

    /// Percentile bootstrap interval of the MACE, resampling folds.
    pub fn mace_ci(&self, resamples: usize, seed: u64) -> [f64; 2] {
        let n = self.hits.len();
        if n == 0 {
            return [f64::NAN, f64::NAN];
        }
        let mut rng = rng_from(seed);
        let picks: Vec<Vec<usize>> = (0..resamples)
            .map(|_| (0..n).map(|_| rng.random_range(0..n)).collect())
            .collect();
        let mut maces: Vec<f64> = picks
            .par_iter()
            .map(|idx| mace_x100(&coverage_of(&self.hits, self.grid.len(), idx), &self.grid))
            .collect();
        maces.sort_by(f64::total_cmp);
        [
            stats::empirical_quantile_sorted(&maces, 0.025),
            stats::empirical_quantile_sorted(&maces, 0.975),
        ]
    }
}

fn coverage_of(hits: &[Vec<bool>], n_grid: usize, idx: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; n_grid];
    for &f in idx {
        for (g, &h) in hits[f].iter().enumerate() {
            if h {
                c[g] += 1.0;
            }
        }
    }
    let n = idx.len().max(1) as f64;
    c.iter_mut().for_each(|v| *v /= n);
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub gene: String,
    pub method: Method,
    pub grid: Vec<f64>,
    pub empirical_coverage: Vec<f64>,
    pub mace_x100: f64,
    pub mace_ci: [f64; 2],
    pub mean_width: f64,
    pub n_folds: usize,
    pub excluded_folds: Vec<String>,
    pub notes: Vec<String>,
}

impl CalibrationReport {
    pub fn from_matrix(gene: &str, method: Method, m: &CoverageMatrix, seed: u64) -> Result<Self> {
        if m.n_folds() == 0 {
            return Err(Error::invalid(format!(
                "gene {gene}: no usable folds for {method}"
            )));
        }
        let mut notes = vec![format!(
            "the nominal level 1.00 is evaluated at {GRID_CAP}; widths are reported at level {WIDTH_LEVEL}"
        )];
        if !m.excluded.is_empty() {
            notes.push(format!(
                "{} folds excluded after pipeline failures",
                m.excluded.len()
            ));
        }
        let finite: Vec<f64> = m.widths.iter().copied().filter(|w| w.is_finite()).collect();
        Ok(CalibrationReport {
            gene: gene.to_string(),
            method,
            grid: m.grid.clone(),
            empirical_coverage: m.coverage(),
            mace_x100: m.mace_x100(),
            mace_ci: m.mace_ci(BOOTSTRAP_RESAMPLES, seed),
            mean_width: if finite.is_empty() {
                f64::NAN
            } else {
                stats::mean(&finite)
            },
            n_folds: m.n_folds(),
            excluded_folds: m.excluded.clone(),
            notes,
        })
    }

    /// Coverage at the grid point nearest `level`.
    pub fn coverage_at(&self, level: f64) -> f64 {
        let i = self
            .grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - level).abs().total_cmp(&(b.1 - level).abs()))
            .map(|(i, _)| i)
            .expect("non-empty grid");
        self.empirical_coverage[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = mace_grid();
        assert_eq!(g.len(), 31);
        assert_eq!(g[0], 0.7);
        assert_eq!(g[25], 0.95);
        assert_eq!(g[30], 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(effective_level(1.0), GRID_CAP);
    }

    #[test]
    fn mace_examples() {
        let g = mace_grid();
        assert!(mace_x100(&g, &g).abs() < 1e-12);
        assert!((mace_x100(&vec![1.0; 31], &g) - 15.0).abs() < 1e-9);
        let shifted: Vec<f64> = g.iter().map(|x| x - 0.05).collect();
        assert!((mace_x100(&shifted, &g) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_ci_brackets_point_estimate() {
        let grid = mace_grid();
        let mut rng = rng_from(1);
        let hits: Vec<Vec<bool>> = (0..200)
            .map(|_| {
                let u: f64 = rng.random();
                grid.iter().map(|&g| u < g - 0.1).collect()
            })
            .collect();
        let m = CoverageMatrix {
            grid: grid.clone(),
            fold_ids: (0..200).map(|i| i.to_string()).collect(),
            hits,
            widths: vec![1.0; 200],
            excluded: vec![],
        };
        let [lo, hi] = m.mace_ci(400, 2);
        let point = m.mace_x100();
        assert!(lo <= point && point <= hi, "{lo} {point} {hi}");
        assert_eq!(m.mace_ci(400, 2), [lo, hi]);
    }
}
