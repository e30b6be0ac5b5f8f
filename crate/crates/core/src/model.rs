//! Sequential choice model: latent parameterization, utilities, choice
//! probabilities, and basket likelihoods.
//!
//! A trip is a sequence of choices. At each step the customer picks one item
//! not yet in the basket with softmax probability over the utilities
//!
//! ```text
//! Ψ(c, basket) = ψ_tc + ρ_c · mean(α over basket)            [+ look-ahead]
//! ψ_tc        = λ_c + θ_u·α_c − (γ_u·β_c) log r̃_tc + δ_w·μ_c
//! ```
//!
//! With think-ahead enabled the utility of `c` also includes the best
//! utility reachable by one further choice after adding `c`. Items already in
//! the basket, and items not offered on the trip, are excluded from the
//! candidate set rather than carried around as `-inf`.

use itertools::Itertools;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::block::{axpy, dot, Block};
use crate::data::{normalized_log_price, Catalog, Trip, WEEKS_PER_YEAR};
use crate::error::{Result, ShopperError};

/// The eight latent groups, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Latent {
    Rho,
    Alpha,
    Lambda,
    Theta,
    Gamma,
    Beta,
    Mu,
    Delta,
}

impl Latent {
    pub const ALL: [Latent; 8] = [
        Latent::Rho,
        Latent::Alpha,
        Latent::Lambda,
        Latent::Theta,
        Latent::Gamma,
        Latent::Beta,
        Latent::Mu,
        Latent::Delta,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Latent::Rho => "rho",
            Latent::Alpha => "alpha",
            Latent::Lambda => "lambda",
            Latent::Theta => "theta",
            Latent::Gamma => "gamma",
            Latent::Beta => "beta",
            Latent::Mu => "mu",
            Latent::Delta => "delta",
        }
    }

    /// Price sensitivities are nonnegative and carry gamma priors.
    pub fn is_positive(self) -> bool {
        matches!(self, Latent::Gamma | Latent::Beta)
    }
}

fn default_prior_std() -> f64 {
    1.0
}
fn default_prior_std_season() -> f64 {
    0.1
}
fn default_gamma_shape() -> f64 {
    1.0
}
fn default_gamma_rate() -> f64 {
    10.0
}
fn default_exact_cap() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub k_items: usize,
    pub k_price: usize,
    pub k_season: usize,
    pub use_preferences: bool,
    pub use_price: bool,
    pub use_season: bool,
    pub think_ahead: bool,
    #[serde(default = "default_prior_std")]
    pub prior_std: f64,
    #[serde(default = "default_prior_std_season")]
    pub prior_std_season: f64,
    #[serde(default = "default_gamma_shape")]
    pub gamma_prior_shape: f64,
    #[serde(default = "default_gamma_rate")]
    pub gamma_prior_rate: f64,
    /// Item index -> shared row of `beta` and `mu`. Checkout included.
    #[serde(default)]
    pub tie_groups: Option<Vec<usize>>,
    /// Largest basket (without checkout) scored by permutation enumeration.
    #[serde(default = "default_exact_cap")]
    pub exact_basket_cap: usize,
    /// Restrict the look-ahead maximum to the top-M items by ψ.
    #[serde(default)]
    pub lookahead_top: Option<usize>,
    /// Give checkout a look-ahead term too. Off by default: the trip ends at
    /// checkout, so there is no next choice to anticipate.
    #[serde(default)]
    pub checkout_lookahead: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            k_items: 10,
            k_price: 5,
            k_season: 5,
            use_preferences: true,
            use_price: true,
            use_season: false,
            think_ahead: false,
            prior_std: default_prior_std(),
            prior_std_season: default_prior_std_season(),
            gamma_prior_shape: default_gamma_shape(),
            gamma_prior_rate: default_gamma_rate(),
            tie_groups: None,
            exact_basket_cap: default_exact_cap(),
            lookahead_top: None,
            checkout_lookahead: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, n_items: usize) -> Result<()> {
        if self.k_items == 0 || self.k_price == 0 || self.k_season == 0 {
            return Err(ShopperError::domain("latent dimensions must be at least 1"));
        }
        let scales = [
            self.prior_std,
            self.prior_std_season,
            self.gamma_prior_shape,
            self.gamma_prior_rate,
        ];
        if scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(ShopperError::domain("prior scales must be positive"));
        }
        if let Some(groups) = &self.tie_groups {
            if groups.len() != n_items {
                return Err(ShopperError::domain(format!(
                    "tie_groups has {} entries for {n_items} items",
                    groups.len()
                )));
            }
        }
        if self.lookahead_top == Some(0) {
            return Err(ShopperError::domain("lookahead_top must be at least 1"));
        }
        Ok(())
    }

    /// Row of `beta`/`mu` used by item `c`.
    #[inline]
    pub fn group_row(&self, c: usize) -> usize {
        match &self.tie_groups {
            Some(g) => g[c],
            None => c,
        }
    }

    fn n_groups(&self, n_items: usize) -> usize {
        match &self.tie_groups {
            Some(g) => g.iter().max().map_or(0, |m| m + 1),
            None => n_items,
        }
    }

    /// Shape of every latent block. Disabled terms get zero rows.
    pub fn shapes(&self, n_items: usize, n_users: usize) -> [(usize, usize); 8] {
        let groups = self.n_groups(n_items);
        let on = |flag: bool, rows: usize| if flag { rows } else { 0 };
        [
            (n_items, self.k_items),
            (n_items, self.k_items),
            (n_items, 1),
            (on(self.use_preferences, n_users), self.k_items),
            (on(self.use_price, n_users), self.k_price),
            (on(self.use_price, groups), self.k_price),
            (on(self.use_season, groups), self.k_season),
            (on(self.use_season, WEEKS_PER_YEAR as usize), self.k_season),
        ]
    }

    /// Prior standard deviation of a Gaussian latent.
    pub fn gaussian_prior_std(&self, latent: Latent) -> f64 {
        match latent {
            Latent::Mu | Latent::Delta => self.prior_std_season,
            _ => self.prior_std,
        }
    }
}

/// One concrete value of every latent variable.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    blocks: [Block; 8],
}

impl LatentState {
    pub fn zeros(config: &ModelConfig, n_items: usize, n_users: usize) -> Self {
        let shapes = config.shapes(n_items, n_users);
        Self {
            blocks: shapes.map(|(r, c)| Block::zeros(r, c)),
        }
    }

    pub fn from_blocks(blocks: [Block; 8]) -> Self {
        Self { blocks }
    }

    /// Entries drawn from N(0, scale²); positive latents take absolute values.
    pub fn random<R: Rng + ?Sized>(
        config: &ModelConfig,
        n_items: usize,
        n_users: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut state = Self::zeros(config, n_items, n_users);
        for latent in Latent::ALL {
            for v in state.block_mut(latent).as_mut_slice() {
                let z: f64 = rng.sample(StandardNormal);
                *v = if latent.is_positive() {
                    (z * scale).abs()
                } else {
                    z * scale
                };
            }
        }
        state
    }

    pub fn block(&self, latent: Latent) -> &Block {
        &self.blocks[latent.index()]
    }

    pub fn block_mut(&mut self, latent: Latent) -> &mut Block {
        &mut self.blocks[latent.index()]
    }

    pub fn blocks(&self) -> &[Block; 8] {
        &self.blocks
    }

    pub fn rho(&self) -> &Block {
        self.block(Latent::Rho)
    }
    pub fn alpha(&self) -> &Block {
        self.block(Latent::Alpha)
    }
    pub fn lambda(&self) -> &Block {
        self.block(Latent::Lambda)
    }
    pub fn theta(&self) -> &Block {
        self.block(Latent::Theta)
    }
    pub fn gamma(&self) -> &Block {
        self.block(Latent::Gamma)
    }
    pub fn beta(&self) -> &Block {
        self.block(Latent::Beta)
    }
    pub fn mu(&self) -> &Block {
        self.block(Latent::Mu)
    }
    pub fn delta(&self) -> &Block {
        self.block(Latent::Delta)
    }

    pub fn n_items(&self) -> usize {
        self.rho().rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self.blocks.clone().map(|b| Block::zeros(b.rows(), b.cols())),
        }
    }

    pub fn add_assign(&mut self, other: &LatentState) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.add_assign(b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.as_slice().iter().all(|v| v.is_finite()))
    }

    /// Flat view over every entry, in block order.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flat_map(|b| b.as_slice().iter().copied())
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mutable access to the flat entry `index` (block order).
    pub fn entry_mut(&mut self, mut index: usize) -> &mut f64 {
        for b in self.blocks.iter_mut() {
            if index < b.len() {
                return &mut b.as_mut_slice()[index];
            }
            index -= b.len();
        }
        panic!("latent entry out of range");
    }
}

/// Per-customer and per-week vectors a context evaluates with, plus which
/// rows to credit when back-propagating.
#[derive(Clone, Debug)]
pub struct Shopper {
    pub user: Option<usize>,
    pub week: Option<usize>,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
}

impl Shopper {
    fn for_trip(state: &LatentState, trip: &Trip) -> Self {
        let week = (trip.week as usize).saturating_sub(1);
        let row = |b: &Block, i: usize| {
            if b.rows() > i {
                b.row(i).to_vec()
            } else {
                Vec::new()
            }
        };
        Self {
            user: Some(trip.user),
            week: Some(week),
            theta: row(state.theta(), trip.user),
            gamma: row(state.gamma(), trip.user),
            delta: row(state.delta(), week),
        }
    }

    /// Average customer in an average week.
    pub fn average(state: &LatentState) -> Self {
        Self {
            user: None,
            week: None,
            theta: state.theta().mean_row(),
            gamma: state.gamma().mean_row(),
            delta: state.delta().mean_row(),
        }
    }
}

/// Everything about one trip that does not depend on the basket: the feasible
/// items, their normalized log prices, and the mean utilities ψ.
#[derive(Clone, Debug)]
pub struct TripContext<'a> {
    state: &'a LatentState,
    config: &'a ModelConfig,
    shopper: Shopper,
    feasible: Vec<usize>,
    lookahead_pool: Vec<usize>,
    log_price: Vec<f64>,
    psi: Vec<f64>,
    checkout: usize,
}

impl<'a> TripContext<'a> {
    pub fn for_trip(
        state: &'a LatentState,
        config: &'a ModelConfig,
        catalog: &Catalog,
        trip: &Trip,
    ) -> Result<Self> {
        let n = catalog.n_items();
        let mut log_price = vec![0.0; n];
        if config.use_price {
            for &c in trip.feasible() {
                if c != catalog.checkout() {
                    log_price[c] = normalized_log_price(catalog, trip, c)?;
                }
            }
        }
        Ok(Self::build(
            state,
            config,
            Shopper::for_trip(state, trip),
            trip.feasible().to_vec(),
            log_price,
            catalog.checkout(),
        ))
    }

    /// Context for an arbitrary shopper facing explicit normalized log prices.
    pub fn with_prices(
        state: &'a LatentState,
        config: &'a ModelConfig,
        shopper: Shopper,
        feasible: Vec<usize>,
        log_price: Vec<f64>,
        checkout: usize,
    ) -> Self {
        Self::build(state, config, shopper, feasible, log_price, checkout)
    }

    fn build(
        state: &'a LatentState,
        config: &'a ModelConfig,
        shopper: Shopper,
        feasible: Vec<usize>,
        log_price: Vec<f64>,
        checkout: usize,
    ) -> Self {
        let n = state.n_items();
        let mut psi = vec![f64::NAN; n];
        for &c in &feasible {
            psi[c] = mean_utility(state, config, &shopper, c, log_price[c]);
        }
        let lookahead_pool = match config.lookahead_top {
            Some(m) if m < feasible.len() => {
                let mut pool: Vec<usize> = feasible
                    .iter()
                    .copied()
                    .sorted_by(|&a, &b| psi[b].total_cmp(&psi[a]).then(a.cmp(&b)))
                    .take(m)
                    .collect();
                if !pool.contains(&checkout) {
                    pool.push(checkout);
                }
                pool.sort_unstable();
                pool
            }
            _ => feasible.clone(),
        };
        Self {
            state,
            config,
            shopper,
            feasible,
            lookahead_pool,
            log_price,
            psi,
            checkout,
        }
    }

    pub fn state(&self) -> &LatentState {
        self.state
    }

    pub fn config(&self) -> &ModelConfig {
        self.config
    }

    pub fn feasible(&self) -> &[usize] {
        &self.feasible
    }

    pub fn checkout(&self) -> usize {
        self.checkout
    }

    pub fn is_feasible(&self, c: usize) -> bool {
        self.psi.get(c).is_some_and(|p| !p.is_nan())
    }

    /// Mean utility ψ_tc.
    pub fn psi(&self, c: usize) -> f64 {
        self.psi[c]
    }

    pub fn empty_basket(&self) -> Basket {
        Basket::new(self.state.n_items(), self.config.k_items)
    }

    /// Basket built from `items` in order.
    pub fn basket_of(&self, items: &[usize]) -> Result<Basket> {
        let mut basket = self.empty_basket();
        for &c in items {
            if basket.contains(c) {
                return Err(ShopperError::domain(format!("item {c} repeated in basket")));
            }
            basket.push(self.state, c);
        }
        Ok(basket)
    }

    pub fn step<'b>(&'b self, basket: &'b Basket) -> Step<'b, 'a> {
        let rho = self.state.rho();
        let rho_sum = if basket.is_empty() {
            Vec::new()
        } else {
            let mut v = vec![0.0; self.state.n_items()];
            for &c in &self.feasible {
                v[c] = dot(rho.row(c), &basket.alpha_sum);
            }
            v
        };
        Step {
            ctx: self,
            basket,
            rho_sum,
        }
    }

    /// Accumulate `g · ∂ψ_c` into `grad`.
    pub fn backprop_psi(&self, c: usize, g: f64, grad: &mut LatentState) {
        let state = self.state;
        let config = self.config;
        grad.block_mut(Latent::Lambda).row_mut(c)[0] += g;
        if config.use_preferences {
            if let Some(u) = self.shopper.user {
                axpy(g, state.alpha().row(c), grad.block_mut(Latent::Theta).row_mut(u));
            }
            axpy(g, &self.shopper.theta, grad.block_mut(Latent::Alpha).row_mut(c));
        }
        let x = self.log_price[c];
        if config.use_price && x != 0.0 {
            let gr = config.group_row(c);
            if let Some(u) = self.shopper.user {
                axpy(-g * x, state.beta().row(gr), grad.block_mut(Latent::Gamma).row_mut(u));
            }
            axpy(-g * x, &self.shopper.gamma, grad.block_mut(Latent::Beta).row_mut(gr));
        }
        if config.use_season {
            let gr = config.group_row(c);
            if let Some(w) = self.shopper.week {
                axpy(g, state.mu().row(gr), grad.block_mut(Latent::Delta).row_mut(w));
            }
            axpy(g, &self.shopper.delta, grad.block_mut(Latent::Mu).row_mut(gr));
        }
    }

    /// Log-probability of choosing `order` in sequence, one softmax per step.
    pub fn ordered_loglik(&self, order: &[usize]) -> Result<f64> {
        let mut basket = self.empty_basket();
        let mut total = 0.0;
        for &c in order {
            if basket.contains(c) {
                return Err(ShopperError::domain(format!("item {c} repeated in basket")));
            }
            if !self.is_feasible(c) {
                return Err(ShopperError::domain(format!("item {c} is not offered")));
            }
            total += self.step(&basket).log_prob(c);
            basket.push(self.state, c);
        }
        Ok(total)
    }
}

fn mean_utility(
    state: &LatentState,
    config: &ModelConfig,
    shopper: &Shopper,
    c: usize,
    log_price: f64,
) -> f64 {
    let mut psi = state.lambda().row(c)[0];
    if config.use_preferences {
        psi += dot(&shopper.theta, state.alpha().row(c));
    }
    if config.use_price && log_price != 0.0 {
        psi -= dot(&shopper.gamma, state.beta().row(config.group_row(c))) * log_price;
    }
    if config.use_season {
        psi += dot(&shopper.delta, state.mu().row(config.group_row(c)));
    }
    psi
}

/// Items chosen so far with the running sum of their attribute vectors.
#[derive(Clone, Debug)]
pub struct Basket {
    items: Vec<usize>,
    member: Vec<bool>,
    alpha_sum: Vec<f64>,
}

impl Basket {
    pub fn new(n_items: usize, k: usize) -> Self {
        Self {
            items: Vec::new(),
            member: vec![false; n_items],
            alpha_sum: vec![0.0; k],
        }
    }

    pub fn push(&mut self, state: &LatentState, c: usize) {
        self.items.push(c);
        self.member[c] = true;
        axpy(1.0, state.alpha().row(c), &mut self.alpha_sum);
    }

    pub fn contains(&self, c: usize) -> bool {
        self.member[c]
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn alpha_sum(&self) -> &[f64] {
        &self.alpha_sum
    }
}

/// Utility value with the look-ahead item that attained the maximum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Utility {
    pub value: f64,
    pub lookahead: Option<usize>,
}

/// One choice step: a context plus the basket so far, with `ρ_c · Σα` cached.
pub struct Step<'b, 'a> {
    ctx: &'b TripContext<'a>,
    basket: &'b Basket,
    rho_sum: Vec<f64>,
}

impl Step<'_, '_> {
    pub fn basket(&self) -> &Basket {
        self.basket
    }

    /// Candidates: offered items not yet in the basket, ascending.
    pub fn candidates(&self) -> impl Iterator<Item = usize> + '_ {
        self.ctx
            .feasible
            .iter()
            .copied()
            .filter(|&c| !self.basket.contains(c))
    }

    pub fn n_candidates(&self) -> usize {
        self.ctx.feasible.len() - self.basket.len()
    }

    /// Interaction part `ρ_c · mean(α over basket)`; zero for an empty basket.
    #[inline]
    pub fn interaction(&self, c: usize) -> f64 {
        if self.basket.is_empty() {
            0.0
        } else {
            self.rho_sum[c] / self.basket.len() as f64
        }
    }

    pub fn utility(&self, c: usize) -> Utility {
        let ctx = self.ctx;
        let mut value = ctx.psi[c] + self.interaction(c);
        let mut lookahead = None;
        if ctx.config.think_ahead && (c != ctx.checkout || ctx.config.checkout_lookahead) {
            let rho = ctx.state.rho();
            let alpha_c = ctx.state.alpha().row(c);
            let size = (self.basket.len() + 1) as f64;
            let scan = |pool: &[usize]| {
                let mut best = f64::NEG_INFINITY;
                let mut arg = None;
                for &next in pool {
                    if next == c || self.basket.contains(next) {
                        continue;
                    }
                    let base = if self.basket.is_empty() {
                        0.0
                    } else {
                        self.rho_sum[next]
                    };
                    let v = ctx.psi[next] + (dot(rho.row(next), alpha_c) + base) / size;
                    if v > best {
                        best = v;
                        arg = Some(next);
                    }
                }
                (best, arg)
            };
            let (mut best, mut arg) = scan(&ctx.lookahead_pool);
            if arg.is_none() && ctx.lookahead_pool.len() < ctx.feasible.len() {
                (best, arg) = scan(&ctx.feasible);
            }
            lookahead = arg;
            if lookahead.is_some() {
                value += best;
            }
        }
        Utility { value, lookahead }
    }

    /// Utilities of all candidates, in candidate order.
    pub fn utilities(&self) -> Vec<(usize, Utility)> {
        self.candidates().map(|c| (c, self.utility(c))).collect()
    }

    pub fn log_normalizer(&self) -> f64 {
        log_sum_exp(self.candidates().map(|c| self.utility(c).value))
    }

    pub fn log_prob(&self, c: usize) -> f64 {
        self.utility(c).value - self.log_normalizer()
    }

    /// Probability vector over all items; non-candidates get exactly zero.
    pub fn distribution(&self) -> Vec<f64> {
        let utilities = self.utilities();
        let lse = log_sum_exp(utilities.iter().map(|(_, u)| u.value));
        let mut p = vec![0.0; self.ctx.state.n_items()];
        for (c, u) in utilities {
            p[c] = (u.value - lse).exp();
        }
        p
    }

    /// Accumulate `g · ∂Ψ(c)` into `grad`. Gradient with respect to the basket
    /// sum `Σα` is added to `d_alpha_sum` and must be spread over the basket
    /// items by the caller (see [`Step::spread_alpha_sum`]).
    pub fn backprop(
        &self,
        c: usize,
        utility: &Utility,
        g: f64,
        grad: &mut LatentState,
        d_alpha_sum: &mut [f64],
    ) {
        let ctx = self.ctx;
        let state = ctx.state;
        ctx.backprop_psi(c, g, grad);
        let n = self.basket.len();
        if n > 0 {
            let scale = g / n as f64;
            axpy(scale, self.basket.alpha_sum(), grad.block_mut(Latent::Rho).row_mut(c));
            axpy(scale, state.rho().row(c), d_alpha_sum);
        }
        if let Some(next) = utility.lookahead {
            ctx.backprop_psi(next, g, grad);
            let scale = g / (n + 1) as f64;
            let rho_next = state.rho().row(next);
            axpy(scale, state.alpha().row(c), grad.block_mut(Latent::Rho).row_mut(next));
            axpy(scale, self.basket.alpha_sum(), grad.block_mut(Latent::Rho).row_mut(next));
            axpy(scale, rho_next, grad.block_mut(Latent::Alpha).row_mut(c));
            axpy(scale, rho_next, d_alpha_sum);
        }
    }

    pub fn spread_alpha_sum(&self, d_alpha_sum: &[f64], grad: &mut LatentState) {
        for &j in self.basket.items() {
            axpy(1.0, d_alpha_sum, grad.block_mut(Latent::Alpha).row_mut(j));
        }
    }
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `λ_c + θ_u·α_c − (γ_u·β_c) log r̃_tc + δ_w·μ_c`, terms gated by config flags.
pub fn mean_utility_psi(
    state: &LatentState,
    config: &ModelConfig,
    catalog: &Catalog,
    trip: &Trip,
    item: usize,
) -> Result<f64> {
    if item != catalog.checkout() && trip.price(item).is_none() {
        return Err(ShopperError::domain(format!(
            "item {} is not priced on trip {}",
            catalog.item_id(item),
            trip.trip_id
        )));
    }
    let log_price = if config.use_price && item != catalog.checkout() {
        normalized_log_price(catalog, trip, item)?
    } else {
        0.0
    };
    Ok(mean_utility(
        state,
        config,
        &Shopper::for_trip(state, trip),
        item,
        log_price,
    ))
}

/// `ρ_c · mean(α_j for j in basket)`; zero for an empty basket and `-inf`
/// when `item` is already in the basket.
pub fn interaction_utility(state: &LatentState, item: usize, basket_so_far: &[usize]) -> f64 {
    if basket_so_far.contains(&item) {
        return f64::NEG_INFINITY;
    }
    if basket_so_far.is_empty() {
        return 0.0;
    }
    let mut sum = vec![0.0; state.alpha().cols()];
    for &j in basket_so_far {
        axpy(1.0, state.alpha().row(j), &mut sum);
    }
    dot(state.rho().row(item), &sum) / basket_so_far.len() as f64
}

/// Full utility Ψ of `item` given the basket, including look-ahead when enabled.
pub fn full_utility(
    state: &LatentState,
    config: &ModelConfig,
    catalog: &Catalog,
    trip: &Trip,
    item: usize,
    basket_so_far: &[usize],
) -> Result<f64> {
    let ctx = TripContext::for_trip(state, config, catalog, trip)?;
    if !ctx.is_feasible(item) {
        return Err(ShopperError::domain(format!(
            "item {} is not priced on trip {}",
            catalog.item_id(item),
            trip.trip_id
        )));
    }
    let basket = ctx.basket_of(basket_so_far)?;
    if basket.contains(item) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ctx.step(&basket).utility(item).value)
}

/// Choice probabilities over all items given the basket so far.
pub fn choice_distribution(
    state: &LatentState,
    config: &ModelConfig,
    catalog: &Catalog,
    trip: &Trip,
    basket_so_far: &[usize],
) -> Result<Vec<f64>> {
    let ctx = TripContext::for_trip(state, config, catalog, trip)?;
    let basket = ctx.basket_of(basket_so_far)?;
    if basket.contains(catalog.checkout()) {
        return Err(ShopperError::domain("basket already contains checkout"));
    }
    Ok(ctx.step(&basket).distribution())
}

/// Log-likelihood of the trip's basket in its recorded order.
pub fn ordered_basket_loglik(
    state: &LatentState,
    config: &ModelConfig,
    catalog: &Catalog,
    trip: &Trip,
) -> Result<f64> {
    if trip.items.last() != Some(&catalog.checkout()) {
        return Err(ShopperError::domain("basket must end with checkout"));
    }
    TripContext::for_trip(state, config, catalog, trip)?.ordered_loglik(&trip.items)
}

/// Log-likelihood of the unordered basket: log-sum-exp over every ordering of
/// the purchased items with checkout fixed last.
pub fn unordered_basket_loglik_exact(
    state: &LatentState,
    config: &ModelConfig,
    catalog: &Catalog,
    trip: &Trip,
) -> Result<f64> {
    let purchased = trip.purchased();
    if purchased.len() > config.exact_basket_cap {
        return Err(ShopperError::BasketTooLarge {
            size: purchased.len(),
            cap: config.exact_basket_cap,
        });
    }
    let ctx = TripContext::for_trip(state, config, catalog, trip)?;
    let mut terms = Vec::new();
    for perm in purchased.iter().copied().permutations(purchased.len()) {
        let mut order = perm;
        order.push(catalog.checkout());
        terms.push(ctx.ordered_loglik(&order)?);
    }
    Ok(log_sum_exp(terms))
}

/// Largest `|ρ_c·α_c′ − ρ_c′·α_c|` over item pairs; zero when interactions are
/// symmetric. Reported as a diagnostic only.
pub fn interaction_asymmetry(state: &LatentState) -> f64 {
    let (rho, alpha) = (state.rho(), state.alpha());
    let n = rho.rows();
    let mut worst: f64 = 0.0;
    for c in 0..n {
        for d in (c + 1)..n {
            let gap = dot(rho.row(c), alpha.row(d)) - dot(rho.row(d), alpha.row(c));
            worst = worst.max(gap.abs());
        }
    }
    worst
}
