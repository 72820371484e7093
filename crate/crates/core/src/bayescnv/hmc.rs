//! Static-path Hamiltonian Monte Carlo with an identity mass matrix and
//! dual-averaging step-size adaptation during warmup.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::density::LogDensity;
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Energy error beyond which a trajectory counts as divergent.
const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcSettings {
    pub n_warmup: usize,
    pub n_draws: usize,
    pub n_leapfrog: usize,
    pub target_accept: f64,
}

impl Default for HmcSettings {
    fn default() -> Self {
        HmcSettings {
            n_warmup: 500,
            n_draws: 1000,
            n_leapfrog: 32,
            target_accept: 0.8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub acceptance_rate: f64,
    pub divergences: usize,
    pub step_size: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct HmcOutput {
    /// Retained draws, one full state vector per iteration.
    pub draws: Vec<Vec<f64>>,
    pub diagnostics: SamplerDiagnostics,
}

impl HmcOutput {
    /// Draws of coordinate `i` across iterations.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[i]).collect()
    }
}

struct DualAverage {
    log_step: f64,
    log_step_avg: f64,
    hbar: f64,
    mu: f64,
    count: f64,
    target: f64,
}

impl DualAverage {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(initial_step: f64, target: f64) -> Self {
        DualAverage {
            log_step: initial_step.ln(),
            log_step_avg: initial_step.ln(),
            hbar: 0.0,
            mu: (10.0 * initial_step).ln(),
            count: 1.0,
            target,
        }
    }

    fn advance(&mut self, accept_stat: f64) {
        let w = 1.0 / (self.count + Self::T0);
        self.hbar = (1.0 - w) * self.hbar + w * (self.target - accept_stat);
        self.log_step = self.mu - self.hbar * self.count.sqrt() / Self::GAMMA;
        let mk = self.count.powf(-Self::KAPPA);
        self.log_step_avg = mk * self.log_step + (1.0 - mk) * self.log_step_avg;
        self.count += 1.0;
    }
}

struct Integrator<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    grad: Vec<f64>,
}

impl<T: LogDensity + ?Sized> Integrator<'_, T> {
    /// Run `steps` leapfrog steps in place. Returns the final log density, or
    /// `None` if the trajectory left the finite region.
    fn leapfrog(
        &mut self,
        q: &mut [f64],
        p: &mut [f64],
        grad0: &[f64],
        eps: f64,
        steps: usize,
    ) -> Option<f64> {
        self.grad.copy_from_slice(grad0);
        let mut lp = f64::NAN;
        for _ in 0..steps {
            for (pi, gi) in p.iter_mut().zip(&self.grad) {
                *pi += 0.5 * eps * gi;
            }
            for (qi, pi) in q.iter_mut().zip(p.iter()) {
                *qi += eps * pi;
            }
            lp = self.target.log_density_grad(q, &mut self.grad);
            if !lp.is_finite() {
                return None;
            }
            for (pi, gi) in p.iter_mut().zip(&self.grad) {
                *pi += 0.5 * eps * gi;
            }
        }
        Some(lp)
    }
}

fn kinetic(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|v| v * v).sum::<f64>()
}

/// Step-size heuristic: double or halve until a single leapfrog step's
/// acceptance probability crosses one half.
fn initial_step_size<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    q0: &[f64],
    lp0: f64,
    g0: &[f64],
    rng: &mut R,
) -> f64 {
    let d = q0.len();
    let mut integ = Integrator {
        target,
        grad: vec![0.0; d],
    };
    let p0: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let h0 = -lp0 + kinetic(&p0);
    let log_accept = |eps: f64, integ: &mut Integrator<T>| {
        let mut q = q0.to_vec();
        let mut p = p0.clone();
        match integ.leapfrog(&mut q, &mut p, g0, eps, 1) {
            Some(lp) => h0 - (-lp + kinetic(&p)),
            None => f64::NEG_INFINITY,
        }
    };
    let mut eps = 0.1;
    let up = log_accept(eps, &mut integ) > 0.5f64.ln();
    for _ in 0..100 {
        let la = log_accept(eps, &mut integ);
        let crossed = if up {
            la <= 0.5f64.ln()
        } else {
            la > 0.5f64.ln()
        };
        if crossed {
            break;
        }
        eps = if up { eps * 2.0 } else { eps * 0.5 };
    }
    eps
}

/// Draw `n_draws` states from `target` starting at `init`. Identical seeds
/// give bit-identical draws.
pub fn hmc_sample<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    settings: &HmcSettings,
    seed: u64,
) -> Result<HmcOutput> {
    if settings.n_draws < 100 {
        return Err(Error::invalid(format!(
            "n_draws must be at least 100, got {}",
            settings.n_draws
        )));
    }
    if settings.n_leapfrog == 0 {
        return Err(Error::invalid("n_leapfrog must be positive"));
    }
    let d = target.dim();
    let mut rng = rng_from(seed);
    let mut q = init.to_vec();
    let mut grad = vec![0.0; d];
    let mut lp = target.log_density_grad(&q, &mut grad);
    if !lp.is_finite() {
        return Err(Error::Numerical(
            "log density not finite at the initial state".into(),
        ));
    }

    let mut eps = initial_step_size(target, &q, lp, &grad, &mut rng);
    let mut adapt = DualAverage::new(eps, settings.target_accept);
    let mut integ = Integrator {
        target,
        grad: vec![0.0; d],
    };
    let mut draws = Vec::with_capacity(settings.n_draws);
    let mut accept_sum = 0.0;
    let mut divergences = 0;
    let mut q_new = vec![0.0; d];
    let mut p = vec![0.0; d];

    for iter in 0..settings.n_warmup + settings.n_draws {
        let warming = iter < settings.n_warmup;
        for pi in p.iter_mut() {
            *pi = rng.sample(StandardNormal);
        }
        let h0 = -lp + kinetic(&p);
        q_new.copy_from_slice(&q);
        let outcome = integ.leapfrog(&mut q_new, &mut p, &grad, eps, settings.n_leapfrog);
        let (accept_prob, divergent, lp_new) = match outcome {
            Some(lp_new) => {
                let dh = -lp_new + kinetic(&p) - h0;
                if !dh.is_finite() || dh > MAX_ENERGY_ERROR {
                    (0.0, true, lp_new)
                } else {
                    ((-dh).exp().min(1.0), false, lp_new)
                }
            }
            None => (0.0, true, f64::NAN),
        };
        let u: f64 = rng.random();
        if !divergent && u < accept_prob {
            q.copy_from_slice(&q_new);
            grad.copy_from_slice(&integ.grad);
            lp = lp_new;
        }
        if warming {
            adapt.advance(accept_prob);
            eps = adapt.log_step.exp();
            if iter + 1 == settings.n_warmup {
                eps = adapt.log_step_avg.exp();
            }
        } else {
            accept_sum += accept_prob;
            if divergent {
                divergences += 1;
            }
            draws.push(q.clone());
        }
    }

    let mut warnings = Vec::new();
    let rate = divergences as f64 / settings.n_draws as f64;
    if rate > 0.1 {
        warnings.push(format!("divergence rate {:.1}% exceeds 10%", 100.0 * rate));
    }
    Ok(HmcOutput {
        draws,
        diagnostics: SamplerDiagnostics {
            acceptance_rate: accept_sum / settings.n_draws as f64,
            divergences,
            step_size: eps,
            warnings,
        },
    })
}
