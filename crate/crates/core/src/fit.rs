//! Stochastic variational inference driver with the ADVI step-size schedule.

use std::time::Instant;

use rand::seq::index::sample as sample_indices;

use crate::data::{all_pairs, Catalog, HeldoutPair, Trip};
use crate::error::{Result, ShopperError};
use crate::eval::conditional_logliks;
use crate::exec::Execution;
use crate::model::{Latent, ModelConfig};
use crate::rng::stream_rng;
use crate::variational::{gradient_estimate, Factor, OptimizerConfig, VariationalGrad, VariationalState};

/// One row of the training trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective_estimate: f64,
    /// Mean conditional log-likelihood on the monitoring pairs, on check
    /// iterations only.
    pub validation_loglik: Option<f64>,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub state: VariationalState,
    pub trace: Vec<TraceRow>,
    pub best_validation: Option<f64>,
    pub iterations: usize,
    /// Stopped because validation stopped improving.
    pub converged: bool,
}

/// Per-coordinate adaptive step sizes. Positive parameters are updated on the
/// log scale.
#[derive(Clone, Debug)]
pub struct Advi {
    opt: OptimizerConfig,
    iteration: usize,
    sq_avg: Vec<f64>,
}

impl Advi {
    pub fn new(opt: &OptimizerConfig) -> Self {
        Self {
            opt: opt.clone(),
            iteration: 0,
            sq_avg: Vec::new(),
        }
    }

    /// Take one ascent step on `v` along `grad`.
    pub fn step(&mut self, v: &mut VariationalState, grad: &VariationalGrad) {
        self.iteration += 1;
        let k = self.iteration as f64;
        let decay = k.powf(-(self.opt.step_exponent - self.opt.stabilizer));
        let first = self.sq_avg.is_empty();
        let mut slot = 0;
        for latent in Latent::ALL {
            let g_factor = grad.factor(latent);
            let gaussian = matches!(g_factor, Factor::Gaussian { .. });
            let (ga, gb) = g_factor.params();
            let (pa, pb) = v.factor_mut(latent).params_mut();
            // Gaussian: (mean, log std). Gamma: (log shape, log mean).
            for (params, grads, log_scale) in [(pa, ga, !gaussian), (pb, gb, true)] {
                for (p, &g) in params.as_mut_slice().iter_mut().zip(grads.as_slice()) {
                    let g = if log_scale { g * *p } else { g };
                    if first {
                        self.sq_avg.push(g * g);
                    } else {
                        let s = &mut self.sq_avg[slot];
                        *s = (1.0 - self.opt.memory) * g * g + self.opt.memory * *s;
                    }
                    let rate = self.opt.step_size * decay / (self.opt.step_offset + self.sq_avg[slot].sqrt());
                    if log_scale {
                        *p *= (rate * g).exp();
                    } else {
                        *p += rate * g;
                    }
                    slot += 1;
                }
            }
        }
        v.clamp();
    }
}

/// Fixed monitoring subsample of validation pairs.
pub fn monitoring_pairs(validation: &[Trip], max_pairs: usize, seed: u64) -> Vec<HeldoutPair> {
    let pairs = all_pairs(validation);
    if pairs.len() <= max_pairs {
        return pairs;
    }
    let mut rng = stream_rng(seed, "validation-pairs");
    let mut idx = sample_indices(&mut rng, pairs.len(), max_pairs).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pairs[i]).collect()
}

/// Fit from a random initialization.
pub fn fit(
    catalog: &Catalog,
    train: &[Trip],
    validation: &[Trip],
    config: &ModelConfig,
    opt: &OptimizerConfig,
    exec: Execution,
) -> Result<FitResult> {
    config.validate(catalog.n_items())?;
    let mut rng = stream_rng(opt.rng_seed, "init");
    let init = VariationalState::initialize(config, catalog.n_items(), catalog.n_users(), opt.init_std, &mut rng);
    fit_from(init, catalog, train, validation, config, opt, exec)
}

/// Fit starting at `init`. Returns the state after the last iteration.
pub fn fit_from(
    init: VariationalState,
    catalog: &Catalog,
    train: &[Trip],
    validation: &[Trip],
    config: &ModelConfig,
    opt: &OptimizerConfig,
    exec: Execution,
) -> Result<FitResult> {
    if train.is_empty() {
        return Err(ShopperError::EmptyDataset {
            path: "training trips".into(),
        });
    }
    opt.validate()?;
    let start = Instant::now();
    let pairs = monitoring_pairs(validation, opt.validation_pairs, opt.rng_seed);
    let mut rng = stream_rng(opt.rng_seed, "sgd");
    let mut state = init;
    let mut advi = Advi::new(opt);
    let mut trace = Vec::new();
    let mut best: Option<f64> = None;
    let mut stale = 0;
    let mut converged = false;
    let mut iterations = 0;
    for iteration in 1..=opt.max_iterations {
        let estimate = gradient_estimate(&state, train, catalog, config, opt, &mut rng, exec)?;
        if !estimate.value.is_finite() {
            return Err(ShopperError::Diverged {
                iteration,
                value: estimate.value,
            });
        }
        advi.step(&mut state, &estimate.grad);
        if state.validate().is_err() {
            return Err(ShopperError::Diverged {
                iteration,
                value: f64::NAN,
            });
        }
        iterations = iteration;
        let mut validation_loglik = None;
        if !pairs.is_empty() && (iteration % opt.check_every == 0 || iteration == opt.max_iterations) {
            let values = conditional_logliks(&state.means(), config, catalog, validation, &pairs, exec)?;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            if !mean.is_finite() {
                return Err(ShopperError::Diverged { iteration, value: mean });
            }
            validation_loglik = Some(mean);
            if best.is_none_or(|b| mean > b) {
                best = Some(mean);
                stale = 0;
            } else {
                stale += 1;
            }
        }
        trace.push(TraceRow {
            iteration,
            objective_estimate: estimate.value,
            validation_loglik,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
        if stale >= opt.patience {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        state,
        trace,
        best_validation: best,
        iterations,
        converged,
    })
}
