//! The bounded variational objective `f(ℓ, ν)` and its subsampled estimator.
//!
//! The log-likelihood of each unordered basket is lower-bounded by the
//! expected ordered log-likelihood under a uniform permutation (checkout kept
//! last), and each softmax step by the one-vs-each bound. Subsampling trips,
//! permutations and negative items gives an unbiased estimate whose gradient
//! with respect to the latents is computed analytically.
//!
//! Randomness is consumed only while drawing an [`EstimatePlan`], which is done
//! sequentially; evaluation of a plan is deterministic and reduced in a fixed
//! chunk order, so parallel and sequential runs agree bit for bit.

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Catalog, Trip};
use crate::error::{Result, ShopperError};
use crate::exec::{chunk_ranges, Execution};
use crate::model::{Basket, LatentState, ModelConfig, TripContext};
use crate::variational::{log_prior_minus_q, OptimizerConfig, VariationalState};

/// `log σ(x)`, stable for large `|x|`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `σ(x)`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One ordered pass over a trip's basket.
#[derive(Clone, Debug, PartialEq)]
pub struct Pass {
    /// Index into the trip slice the plan was drawn from.
    pub trip: usize,
    /// Basket order; checkout last.
    pub order: Vec<usize>,
    /// Negative items for each position of `order`.
    pub negatives: Vec<Vec<usize>>,
    /// Multiplier applied to the pass, e.g. `T / |B_T|` over permutations.
    pub weight: f64,
}

/// Every random choice behind one evaluation of the estimator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimatePlan {
    pub passes: Vec<Pass>,
}

/// Items that may serve as negatives at a step: offered, not in the basket
/// prefix, and not the target.
pub fn step_alternatives(trip: &Trip, prefix: &[usize], target: usize) -> Vec<usize> {
    trip.feasible()
        .iter()
        .copied()
        .filter(|&c| c != target && !prefix.contains(&c))
        .collect()
}

/// Draw trips, permutations and negatives for one estimate.
pub fn draw_plan<R: Rng + ?Sized>(trips: &[Trip], opt: &OptimizerConfig, rng: &mut R) -> EstimatePlan {
    let n = trips.len();
    if n == 0 {
        return EstimatePlan::default();
    }
    let chosen: Vec<usize> = if opt.batch_trips >= n {
        (0..n).collect()
    } else {
        let mut idx = sample_indices(rng, n, opt.batch_trips).into_vec();
        idx.sort_unstable();
        idx
    };
    let perms = opt.permutations_per_trip.max(1);
    let weight = n as f64 / chosen.len() as f64 / perms as f64;
    let mut passes = Vec::with_capacity(chosen.len() * perms);
    for &t in &chosen {
        let trip = &trips[t];
        for _ in 0..perms {
            let mut order = trip.items.clone();
            let last = order.len() - 1;
            order[..last].shuffle(rng);
            let negatives = (0..order.len())
                .map(|i| {
                    let alternatives = step_alternatives(trip, &order[..i], order[i]);
                    if alternatives.len() <= opt.batch_negatives {
                        alternatives
                    } else {
                        sample_indices(rng, alternatives.len(), opt.batch_negatives)
                            .into_iter()
                            .map(|k| alternatives[k])
                            .collect()
                    }
                })
                .collect();
            passes.push(Pass {
                trip: t,
                order,
                negatives,
                weight,
            });
        }
    }
    EstimatePlan { passes }
}

/// Weighted one-vs-each term at one step, adding `g_out ·` its gradient into
/// `grad` when given.
fn step_term(
    ctx: &TripContext<'_>,
    basket: &Basket,
    target: usize,
    negatives: &[usize],
    scale: f64,
    grad: Option<&mut LatentState>,
) -> f64 {
    let step = ctx.step(basket);
    let u_target = step.utility(target);
    let mut total = 0.0;
    match grad {
        None => {
            for &c in negatives {
                total += log_sigmoid(u_target.value - step.utility(c).value);
            }
        }
        Some(grad) => {
            let mut d_alpha_sum = vec![0.0; basket.alpha_sum().len()];
            let mut g_target = 0.0;
            for &c in negatives {
                let u = step.utility(c);
                let d = u_target.value - u.value;
                total += log_sigmoid(d);
                let s = sigmoid(-d) * scale;
                g_target += s;
                step.backprop(c, &u, -s, grad, &mut d_alpha_sum);
            }
            step.backprop(target, &u_target, g_target, grad, &mut d_alpha_sum);
            step.spread_alpha_sum(&d_alpha_sum, grad);
        }
    }
    scale * total
}

/// Scale of the subsampled one-vs-each sum: alternatives over negatives.
fn step_scale(ctx: &TripContext<'_>, basket: &Basket, n_negatives: usize) -> f64 {
    let alternatives = ctx.feasible().len() - basket.len() - 1;
    if n_negatives == 0 {
        0.0
    } else {
        alternatives as f64 / n_negatives as f64
    }
}

/// Subsampled one-vs-each bound on `log p(y_i | y_{<i})` for the trip's
/// recorded order, with `position` zero-based. Using every alternative as a
/// negative gives the full bound.
pub fn one_vs_each_step_bound(
    state: &LatentState,
    config: &ModelConfig,
    catalog: &Catalog,
    trip: &Trip,
    position: usize,
    negatives: &[usize],
) -> Result<f64> {
    let target = *trip
        .items
        .get(position)
        .ok_or_else(|| ShopperError::domain(format!("position {position} outside basket")))?;
    let prefix = &trip.items[..position];
    let ctx = TripContext::for_trip(state, config, catalog, trip)?;
    for &c in negatives {
        if c == target || prefix.contains(&c) || !ctx.is_feasible(c) {
            return Err(ShopperError::domain(format!("item {c} cannot be a negative here")));
        }
    }
    let basket = ctx.basket_of(prefix)?;
    let alternatives = ctx.feasible().len() - position - 1;
    if negatives.is_empty() {
        if alternatives > 0 {
            return Err(ShopperError::domain("no negatives although alternatives exist"));
        }
        return Ok(0.0);
    }
    let scale = step_scale(&ctx, &basket, negatives.len());
    Ok(step_term(&ctx, &basket, target, negatives, scale, None))
}

/// Likelihood contribution of one pass, already weighted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripTerm {
    pub trip: usize,
    pub user: usize,
    pub value: f64,
}

fn evaluate_pass(
    state: &LatentState,
    config: &ModelConfig,
    catalog: &Catalog,
    trip: &Trip,
    pass: &Pass,
    mut grad: Option<&mut LatentState>,
) -> Result<f64> {
    let ctx = TripContext::for_trip(state, config, catalog, trip)?;
    let mut basket = ctx.empty_basket();
    let mut total = 0.0;
    for (&target, negatives) in pass.order.iter().zip(&pass.negatives) {
        if !negatives.is_empty() {
            let scale = pass.weight * step_scale(&ctx, &basket, negatives.len());
            total += step_term(&ctx, &basket, target, negatives, scale, grad.as_deref_mut());
        }
        basket.push(state, target);
    }
    Ok(total)
}

/// Evaluate a plan: weighted likelihood terms per pass, plus the gradient of
/// their sum when `with_grad` is set.
pub fn evaluate_plan(
    state: &LatentState,
    config: &ModelConfig,
    catalog: &Catalog,
    trips: &[Trip],
    plan: &EstimatePlan,
    with_grad: bool,
    exec: Execution,
) -> Result<(Vec<TripTerm>, Option<LatentState>)> {
    let ranges = chunk_ranges(plan.passes.len());
    let results = exec.map(&ranges, |range| -> Result<(Vec<TripTerm>, Option<LatentState>)> {
        let mut grad = with_grad.then(|| state.zeros_like());
        let mut terms = Vec::with_capacity(range.len());
        for pass in &plan.passes[range.clone()] {
            let trip = &trips[pass.trip];
            let value = evaluate_pass(state, config, catalog, trip, pass, grad.as_mut())?;
            terms.push(TripTerm {
                trip: pass.trip,
                user: trip.user,
                value,
            });
        }
        Ok((terms, grad))
    });
    let mut terms = Vec::with_capacity(plan.passes.len());
    let mut grad = with_grad.then(|| state.zeros_like());
    for chunk in results {
        let (t, g) = chunk?;
        terms.extend(t);
        if let (Some(total), Some(g)) = (grad.as_mut(), g) {
            total.add_assign(&g);
        }
    }
    Ok((terms, grad))
}

/// Value and latent gradient of one realization of the estimator.
#[derive(Clone, Debug)]
pub struct FEstimate {
    pub value: f64,
    pub grad: LatentState,
    pub trip_terms: Vec<TripTerm>,
}

/// `log p(ℓ) − log q(ℓ; ν)` plus the plan's likelihood terms, with gradient.
pub fn estimate_f_with_plan(
    v: &VariationalState,
    latents: &LatentState,
    trips: &[Trip],
    catalog: &Catalog,
    config: &ModelConfig,
    plan: &EstimatePlan,
    exec: Execution,
) -> Result<FEstimate> {
    let (trip_terms, grad) = evaluate_plan(latents, config, catalog, trips, plan, true, exec)?;
    let mut grad = grad.expect("gradient requested");
    let mut value = log_prior_minus_q(v, config, latents, Some(&mut grad));
    value += trip_terms.iter().map(|t| t.value).sum::<f64>();
    Ok(FEstimate {
        value,
        grad,
        trip_terms,
    })
}

/// Draw a plan from `rng` and evaluate it.
#[allow(clippy::too_many_arguments)]
pub fn estimate_f<R: Rng + ?Sized>(
    v: &VariationalState,
    latents: &LatentState,
    trips: &[Trip],
    catalog: &Catalog,
    config: &ModelConfig,
    opt: &OptimizerConfig,
    rng: &mut R,
    exec: Execution,
) -> Result<FEstimate> {
    let plan = draw_plan(trips, opt, rng);
    estimate_f_with_plan(v, latents, trips, catalog, config, &plan, exec)
}

/// Full-data bound: every trip, the average over all basket permutations,
/// and every alternative as a negative. Factorial in basket size.
pub fn full_objective(
    v: &VariationalState,
    latents: &LatentState,
    trips: &[Trip],
    catalog: &Catalog,
    config: &ModelConfig,
) -> Result<f64> {
    use itertools::Itertools;
    let mut total = log_prior_minus_q(v, config, latents, None);
    for (t, trip) in trips.iter().enumerate() {
        let n = trip.items.len() - 1;
        if n > config.exact_basket_cap {
            return Err(ShopperError::BasketTooLarge {
                size: n,
                cap: config.exact_basket_cap,
            });
        }
        let perms: Vec<Vec<usize>> = trip.items[..n].iter().copied().permutations(n).collect();
        let weight = 1.0 / perms.len() as f64;
        for mut order in perms {
            order.push(catalog.checkout());
            let negatives = (0..order.len())
                .map(|i| step_alternatives(trip, &order[..i], order[i]))
                .collect();
            let pass = Pass {
                trip: t,
                order,
                negatives,
                weight,
            };
            total += evaluate_pass(latents, config, catalog, trip, &pass, None)?;
        }
    }
    Ok(total)
}
