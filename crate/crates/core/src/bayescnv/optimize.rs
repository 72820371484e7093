//! MAP search and finite-difference Hessians.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use super::density::LogDensity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct MapSettings {
    pub max_iterations: usize,
    /// Converged once `‖∇‖ < grad_tol · (1 + |log p|)`.
    pub grad_tol: f64,
    pub history: usize,
}

impl Default for MapSettings {
    fn default() -> Self {
        MapSettings {
            max_iterations: 5000,
            grad_tol: 1e-6,
            history: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MapResult {
    pub x: Vec<f64>,
    pub log_density: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Maximize `target` from `init`.
///
/// Gradient ascent along quasi-Newton (L-BFGS) directions with an Armijo
/// backtracking line search; falls back to the plain gradient whenever the
/// quasi-Newton direction is not an ascent direction.
pub fn map_estimate<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    settings: &MapSettings,
) -> Result<MapResult> {
    let d = target.dim();
    let mut x = init.to_vec();
    let mut g = vec![0.0; d];
    let mut f = target.log_density_grad(&x, &mut g);
    if !f.is_finite() {
        return Err(Error::Numerical(
            "log density is not finite at the starting point".into(),
        ));
    }
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut g_new = vec![0.0; d];

    for it in 0..settings.max_iterations {
        let gn = norm(&g);
        if gn < settings.grad_tol * (1.0 + f.abs()) {
            return Ok(MapResult {
                x,
                log_density: f,
                grad_norm: gn,
                iterations: it,
            });
        }

        // two-loop recursion on the negated objective
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope > 0.0) {
            memory.clear();
            dir = g.clone();
            slope = gn * gn;
        }
        let mut step = if memory.is_empty() {
            (1.0 / gn).min(1.0)
        } else {
            1.0
        };

        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = f;
        for _ in 0..60 {
            for i in 0..d {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = target.log_density_grad(&x_new, &mut g_new);
            if f_new.is_finite() && f_new >= f + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if memory.is_empty() {
                // no progress possible along the gradient at machine precision
                return if gn < 1e-3 * settings.grad_tol.sqrt() * (1.0 + f.abs()) {
                    Ok(MapResult {
                        x,
                        log_density: f,
                        grad_norm: gn,
                        iterations: it,
                    })
                } else {
                    Err(Error::NonConvergence {
                        iterations: it,
                        grad_norm: gn,
                    })
                };
            }
            memory.clear();
            continue;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        // y for the minimization problem is -(g_new - g)
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| -(a - b)).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if memory.len() == settings.history {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iterations,
        grad_norm: norm(&g),
    })
}

/// Hessian of the *negative* log density at `x` by central differences of
/// the analytic gradient (step `1e-4 · max(|x_i|, 1)`). Returned unsymmetrized.
pub fn neg_hessian_fd<T: LogDensity + ?Sized>(target: &T, x: &[f64]) -> DMatrix<f64> {
    let d = target.dim();
    let mut h = DMatrix::zeros(d, d);
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let mut xp = x.to_vec();
    for i in 0..d {
        let step = 1e-4 * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        target.log_density_grad(&xp, &mut gp);
        xp[i] = x[i] - step;
        target.log_density_grad(&xp, &mut gm);
        xp[i] = x[i];
        for r in 0..d {
            h[(r, i)] = -(gp[r] - gm[r]) / (2.0 * step);
        }
    }
    h
}

pub fn symmetrize(h: &DMatrix<f64>) -> DMatrix<f64> {
    (h + h.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayescnv::gaussian::StdNormalTarget;

    struct Rosenbrockish;
    impl LogDensity for Rosenbrockish {
        fn dim(&self) -> usize {
            2
        }
        fn log_density_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let (a, b) = (1.0 - x[0], x[1] - x[0] * x[0]);
            g[0] = 2.0 * a + 40.0 * b * x[0];
            g[1] = -20.0 * b;
            -(a * a + 10.0 * b * b)
        }
    }

    #[test]
    fn finds_curved_optimum() {
        let r = map_estimate(&Rosenbrockish, &[-1.2, 1.0], &MapSettings::default()).unwrap();
        assert!(
            (r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            r.x
        );
    }

    #[test]
    fn hessian_of_standard_normal_is_identity() {
        let h = neg_hessian_fd(&StdNormalTarget { dim: 3 }, &[0.3, -2.0, 5.0]);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((h[(i, j)] - e).abs() < 1e-9);
            }
        }
    }
}
