use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Number of sorted draws an HPD window at `level` must span: `⌈level·n⌉`.
pub fn window_len(n: usize, level: f64) -> usize {
    // guard against 0.95 * 100 = 95.00000000000001 style round-up
    (((level * n as f64) - 1e-9).ceil() as usize).clamp(1, n)
}

/// Shortest window of `⌈level·n⌉` consecutive sorted draws; ties go to the
/// lowest start index.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<Interval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "HPD level must lie in (0, 1), got {level}"
        )));
    }
    if draws.len() < 20 {
        return Err(Error::invalid(format!(
            "HPD needs at least 20 draws, got {}",
            draws.len()
        )));
    }
    let s = stats::sorted(draws);
    let k = window_len(s.len(), level);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=s.len() - k {
        let w = s[i + k - 1] - s[i];
        if w < best_width {
            best_width = w;
            best = i;
        }
    }
    Ok(Interval {
        lo: s[best],
        hi: s[best + k - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn uniform_grid_ties_to_lowest_start() {
        let draws: Vec<f64> = (1..=100).map(f64::from).collect();
        let iv = hpd_interval(&draws, 0.95).unwrap();
        assert_eq!((iv.lo, iv.hi), (1.0, 95.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let draws: Vec<f64> = (0..50).map(f64::from).collect();
        assert!(hpd_interval(&draws, 0.0).is_err());
        assert!(hpd_interval(&draws, 1.0).is_err());
        assert!(hpd_interval(&draws[..10], 0.9).is_err());
    }

    #[test]
    fn symmetric_draws_match_equal_tailed() {
        let mut rng = rng_from(3);
        let draws: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let iv = hpd_interval(&draws, 0.9).unwrap();
        let z = stats::normal_quantile(0.95);
        assert!(
            (iv.lo + z).abs() < 0.03 && (iv.hi - z).abs() < 0.03,
            "{iv:?}"
        );
    }

    #[test]
    fn contains_requested_mass() {
        let mut rng = rng_from(4);
        let draws: Vec<f64> = (0..333).map(|_| rng.random::<f64>().powi(3)).collect();
        let iv = hpd_interval(&draws, 0.8).unwrap();
        let inside = draws.iter().filter(|&&d| iv.contains(d)).count();
        assert_eq!(inside, window_len(333, 0.8));
    }
}
