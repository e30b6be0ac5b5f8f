//! Mean-field variational family and the reparameterization gradient.
//!
//! Gaussian factors are parameterized by mean and standard deviation, gamma
//! factors by shape and mean. [`gradient_estimate`] draws one latent sample,
//! evaluates the stochastic objective and its latent gradient, and pushes the
//! gradient through the transforms.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::block::Block;
use crate::data::{Catalog, Trip};
use crate::error::{Result, ShopperError};
use crate::exec::Execution;
use crate::model::{Latent, LatentState, ModelConfig};
use crate::objective::{estimate_f, FEstimate};
use crate::reparam::{
    gamma_chain, gamma_log_pdf, gamma_log_pdf_dx, gamma_transform, gaussian_chain,
    gaussian_log_pdf, gaussian_log_pdf_dx, gaussian_transform, GammaNoise, POSITIVE_FLOOR,
};
use crate::rng::ShopperRng;

/// Variational parameters of one latent block.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    Gaussian { mean: Block, std: Block },
    Gamma { shape: Block, mean: Block },
}

impl Factor {
    pub fn len(&self) -> usize {
        match self {
            Factor::Gaussian { mean, .. } | Factor::Gamma { mean, .. } => mean.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Both parameter blocks: (mean, std) or (shape, mean).
    pub fn params(&self) -> (&Block, &Block) {
        match self {
            Factor::Gaussian { mean, std } => (mean, std),
            Factor::Gamma { shape, mean } => (shape, mean),
        }
    }

    pub fn params_mut(&mut self) -> (&mut Block, &mut Block) {
        match self {
            Factor::Gaussian { mean, std } => (mean, std),
            Factor::Gamma { shape, mean } => (shape, mean),
        }
    }

    fn zeros_like(&self) -> Self {
        let (a, b) = self.params();
        let z = |x: &Block| Block::zeros(x.rows(), x.cols());
        match self {
            Factor::Gaussian { .. } => Factor::Gaussian { mean: z(a), std: z(b) },
            Factor::Gamma { .. } => Factor::Gamma { shape: z(a), mean: z(b) },
        }
    }
}

/// Variational parameters for every latent block, indexed by [`Latent`].
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalState {
    factors: [Factor; 8],
}

/// Gradients share the shape of the parameters they differentiate.
pub type VariationalGrad = VariationalState;

impl VariationalState {
    pub fn from_factors(factors: [Factor; 8]) -> Result<Self> {
        let state = Self { factors };
        state.validate()?;
        Ok(state)
    }

    /// Random initialization: Gaussian means ~ N(0, init_std²) with std
    /// `init_std`; gamma shapes 1 + U(0, 0.1) with means at the prior mean.
    pub fn initialize<R: Rng + ?Sized>(
        config: &ModelConfig,
        n_items: usize,
        n_users: usize,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        let shapes = config.shapes(n_items, n_users);
        let prior_mean = config.gamma_prior_shape / config.gamma_prior_rate;
        let factors = Latent::ALL.map(|latent| {
            let (r, c) = shapes[latent.index()];
            if latent.is_positive() {
                let shape = (0..r * c).map(|_| 1.0 + 0.1 * rng.gen::<f64>()).collect();
                Factor::Gamma {
                    shape: Block::from_vec(r, c, shape),
                    mean: Block::filled(r, c, prior_mean),
                }
            } else {
                let mean = (0..r * c)
                    .map(|_| init_std * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Factor::Gaussian {
                    mean: Block::from_vec(r, c, mean),
                    std: Block::filled(r, c, init_std),
                }
            }
        });
        Self { factors }
    }

    pub fn validate(&self) -> Result<()> {
        for (latent, factor) in Latent::ALL.iter().zip(&self.factors) {
            let (a, b) = factor.params();
            if a.shape() != b.shape() {
                return Err(ShopperError::domain(format!("{}: shape mismatch", latent.name())));
            }
            let positive_ok = |blk: &Block| blk.as_slice().iter().all(|v| *v > 0.0 && v.is_finite());
            let ok = match factor {
                Factor::Gaussian { mean, std } => {
                    mean.as_slice().iter().all(|v| v.is_finite()) && positive_ok(std)
                }
                Factor::Gamma { shape, mean } => positive_ok(shape) && positive_ok(mean),
            };
            if !ok || latent.is_positive() != matches!(factor, Factor::Gamma { .. }) {
                return Err(ShopperError::domain(format!(
                    "{}: invalid variational parameters",
                    latent.name()
                )));
            }
        }
        Ok(())
    }

    pub fn factor(&self, latent: Latent) -> &Factor {
        &self.factors[latent.index()]
    }

    pub fn factor_mut(&mut self, latent: Latent) -> &mut Factor {
        &mut self.factors[latent.index()]
    }

    pub fn factors(&self) -> &[Factor; 8] {
        &self.factors
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            factors: self.factors.clone().map(|f| f.zeros_like()),
        }
    }

    /// Posterior point estimate: Gaussian means and gamma means.
    pub fn means(&self) -> LatentState {
        LatentState::from_blocks(self.factors.clone().map(|f| match f {
            Factor::Gaussian { mean, .. } | Factor::Gamma { mean, .. } => mean,
        }))
    }

    /// Clamp standard deviations, shapes and gamma means at the floor.
    pub fn clamp(&mut self) {
        for factor in self.factors.iter_mut() {
            match factor {
                Factor::Gaussian { std, .. } => {
                    std.as_mut_slice().iter_mut().for_each(|s| *s = s.max(POSITIVE_FLOOR))
                }
                Factor::Gamma { shape, mean } => {
                    for v in shape.as_mut_slice().iter_mut().chain(mean.as_mut_slice()) {
                        *v = v.max(POSITIVE_FLOOR);
                    }
                }
            }
        }
    }
}

/// Auxiliary noise behind one latent draw.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraw {
    /// Standard-normal noise for Gaussian entries.
    pub gaussian: [Vec<f64>; 8],
    /// Accepted proposals and augmentation uniforms for gamma entries.
    pub gamma: [Vec<GammaNoise>; 8],
}

/// Draw `ε ~ π(ε; ν)` and return `ℓ = T(ε; ν)` together with `ε`.
pub fn sample_latents<R: Rng + ?Sized>(v: &VariationalState, rng: &mut R) -> (LatentState, NoiseDraw) {
    let mut gaussian: [Vec<f64>; 8] = Default::default();
    let mut gamma: [Vec<GammaNoise>; 8] = Default::default();
    for latent in Latent::ALL {
        match v.factor(latent) {
            Factor::Gaussian { mean, .. } => {
                gaussian[latent.index()] = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
            }
            Factor::Gamma { shape, .. } => {
                gamma[latent.index()] = shape
                    .as_slice()
                    .iter()
                    .map(|&s| GammaNoise::sample(s, rng))
                    .collect();
            }
        }
    }
    let noise = NoiseDraw { gaussian, gamma };
    (transform(v, &noise), noise)
}

/// Deterministic transform `T(ε; ν)`.
pub fn transform(v: &VariationalState, noise: &NoiseDraw) -> LatentState {
    LatentState::from_blocks(Latent::ALL.map(|latent| match v.factor(latent) {
        Factor::Gaussian { mean, std } => {
            let eps = &noise.gaussian[latent.index()];
            let data = mean
                .as_slice()
                .iter()
                .zip(std.as_slice())
                .zip(eps)
                .map(|((&m, &s), &e)| gaussian_transform(e, m, s))
                .collect();
            Block::from_vec(mean.rows(), mean.cols(), data)
        }
        Factor::Gamma { shape, mean } => {
            let eps = &noise.gamma[latent.index()];
            let data = shape
                .as_slice()
                .iter()
                .zip(mean.as_slice())
                .zip(eps)
                .map(|((&a, &m), n)| gamma_transform(n, a, m).value)
                .collect();
            Block::from_vec(shape.rows(), shape.cols(), data)
        }
    }))
}

/// Per-entry `log p(ℓ_e) − log q(ℓ_e; ν_e)` for one block, and its derivative
/// in `ℓ_e`.
pub fn entry_log_ratio(
    config: &ModelConfig,
    latent: Latent,
    factor: &Factor,
    index: usize,
    x: f64,
) -> (f64, f64) {
    match factor {
        Factor::Gaussian { mean, std } => {
            let s0 = config.gaussian_prior_std(latent);
            let (m, s) = (mean.as_slice()[index], std.as_slice()[index]);
            (
                gaussian_log_pdf(x, 0.0, s0) - gaussian_log_pdf(x, m, s),
                gaussian_log_pdf_dx(x, 0.0, s0) - gaussian_log_pdf_dx(x, m, s),
            )
        }
        Factor::Gamma { shape, mean } => {
            let (a0, b0) = (config.gamma_prior_shape, config.gamma_prior_rate);
            let (a, m) = (shape.as_slice()[index], mean.as_slice()[index]);
            (
                gamma_log_pdf(x, a0, b0) - gamma_log_pdf(x, a, a / m),
                gamma_log_pdf_dx(x, a0, b0) - gamma_log_pdf_dx(x, a, a / m),
            )
        }
    }
}

/// `log p(ℓ) − log q(ℓ; ν)`, adding its latent gradient into `grad`.
pub fn log_prior_minus_q(
    v: &VariationalState,
    config: &ModelConfig,
    latents: &LatentState,
    mut grad: Option<&mut LatentState>,
) -> f64 {
    let mut total = 0.0;
    for latent in Latent::ALL {
        let factor = v.factor(latent);
        let xs = latents.block(latent).as_slice();
        for (i, &x) in xs.iter().enumerate() {
            let (value, dx) = entry_log_ratio(config, latent, factor, i, x);
            total += value;
            if let Some(g) = grad.as_deref_mut() {
                g.block_mut(latent).as_mut_slice()[i] += dx;
            }
        }
    }
    total
}

fn default_batch_trips() -> usize {
    100
}
fn default_batch_negatives() -> usize {
    50
}
fn default_one() -> usize {
    1
}
fn default_step_size() -> f64 {
    0.1
}
fn default_step_exponent() -> f64 {
    0.5
}
fn default_step_offset() -> f64 {
    1.0
}
fn default_stabilizer() -> f64 {
    1e-16
}
fn default_memory() -> f64 {
    0.9
}
fn default_max_iterations() -> usize {
    20_000
}
fn default_check_every() -> usize {
    1000
}
fn default_patience() -> usize {
    10
}
fn default_validation_pairs() -> usize {
    1000
}
fn default_init_std() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_batch_trips")]
    pub batch_trips: usize,
    #[serde(default = "default_batch_negatives")]
    pub batch_negatives: usize,
    #[serde(default = "default_one")]
    pub permutations_per_trip: usize,
    /// Base rate η of the adaptive schedule `η k^{-(exponent - stabilizer)} / (offset + √s_k)`.
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_step_exponent")]
    pub step_exponent: f64,
    #[serde(default = "default_step_offset")]
    pub step_offset: f64,
    #[serde(default = "default_stabilizer")]
    pub stabilizer: f64,
    /// Weight of the previous squared-gradient average.
    #[serde(default = "default_memory")]
    pub memory: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Validation check interval, in iterations.
    #[serde(default = "default_check_every")]
    pub check_every: usize,
    /// Checks without improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Size of the fixed validation subsample used for monitoring.
    #[serde(default = "default_validation_pairs")]
    pub validation_pairs: usize,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// Include the score term of the gamma reparameterization.
    #[serde(default = "default_true")]
    pub score_correction: bool,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            batch_trips: default_batch_trips(),
            batch_negatives: default_batch_negatives(),
            permutations_per_trip: 1,
            step_size: default_step_size(),
            step_exponent: default_step_exponent(),
            step_offset: default_step_offset(),
            stabilizer: default_stabilizer(),
            memory: default_memory(),
            max_iterations: default_max_iterations(),
            check_every: default_check_every(),
            patience: default_patience(),
            validation_pairs: default_validation_pairs(),
            init_std: default_init_std(),
            score_correction: true,
            rng_seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_trips == 0 || self.batch_negatives == 0 || self.permutations_per_trip == 0 {
            return Err(ShopperError::domain("batch sizes must be at least 1"));
        }
        if !(self.step_size > 0.0) || !(self.memory >= 0.0 && self.memory < 1.0) {
            return Err(ShopperError::domain("invalid step schedule"));
        }
        if self.check_every == 0 {
            return Err(ShopperError::domain("check_every must be at least 1"));
        }
        Ok(())
    }
}

/// One stochastic gradient with the objective value it came from.
#[derive(Clone, Debug)]
pub struct GradientEstimate {
    pub value: f64,
    pub grad: VariationalGrad,
}

/// Chain the latent gradient of `f` through the transforms.
///
/// Gaussian parameters receive `∂f/∂ℓ · ∂T/∂ν`. Gamma shapes additionally
/// receive the score term, weighted by the part of `f` that depends on the
/// entry: its own prior/variational terms plus the likelihood of the sampled
/// trips it enters (the user's trips for `gamma`, all sampled trips for
/// `beta`).
pub fn chain_gradient(
    v: &VariationalState,
    config: &ModelConfig,
    latents: &LatentState,
    noise: &NoiseDraw,
    estimate: &FEstimate,
    score_correction: bool,
) -> VariationalGrad {
    let mut out = v.zeros_like();
    let mut user_lik: Vec<f64> = Vec::new();
    let mut batch_lik = 0.0;
    if score_correction {
        user_lik = vec![0.0; latents.gamma().rows()];
        for t in &estimate.trip_terms {
            batch_lik += t.value;
            if let Some(slot) = user_lik.get_mut(t.user) {
                *slot += t.value;
            }
        }
    }
    for latent in Latent::ALL {
        let df = estimate.grad.block(latent).as_slice();
        let xs = latents.block(latent).as_slice();
        let factor = v.factor(latent);
        let (ga, gb) = out.factor_mut(latent).params_mut();
        let (ga, gb) = (ga.as_mut_slice(), gb.as_mut_slice());
        match factor {
            Factor::Gaussian { .. } => {
                let eps = &noise.gaussian[latent.index()];
                for i in 0..xs.len() {
                    let (gm, gs) = gaussian_chain(eps[i], df[i]);
                    ga[i] = gm;
                    gb[i] = gs;
                }
            }
            Factor::Gamma { shape, mean } => {
                let cols = shape.cols().max(1);
                let eps = &noise.gamma[latent.index()];
                for i in 0..xs.len() {
                    let (a, m) = (shape.as_slice()[i], mean.as_slice()[i]);
                    let draw = gamma_transform(&eps[i], a, m);
                    let local = score_correction.then(|| {
                        let lik = match latent {
                            Latent::Gamma => user_lik[i / cols],
                            _ => batch_lik,
                        };
                        lik + entry_log_ratio(config, latent, factor, i, xs[i]).0
                    });
                    let (gs, gm) = gamma_chain(&eps[i], &draw, a, df[i], local);
                    ga[i] = gs;
                    gb[i] = gm;
                }
            }
        }
    }
    out
}

/// Sample noise, evaluate the stochastic objective, and return the
/// reparameterization gradient with respect to every variational parameter.
#[allow(clippy::too_many_arguments)]
pub fn gradient_estimate(
    v: &VariationalState,
    trips: &[Trip],
    catalog: &Catalog,
    config: &ModelConfig,
    opt: &OptimizerConfig,
    rng: &mut ShopperRng,
    exec: Execution,
) -> Result<GradientEstimate> {
    let (latents, noise) = sample_latents(v, rng);
    let estimate = estimate_f(v, &latents, trips, catalog, config, opt, rng, exec)?;
    let grad = chain_gradient(v, config, &latents, &noise, &estimate, opt.score_correction);
    Ok(GradientEstimate {
        value: estimate.value,
        grad,
    })
}
