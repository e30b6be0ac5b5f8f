#![allow(dead_code)]

use std::sync::Arc;

use shopper::data::{calendar_week, set_reference_prices, Catalog, Trip, WeekPrices};
use shopper::exec::Execution;
use shopper::model::{Latent, LatentState, ModelConfig};
use shopper::objective::{
    draw_plan, estimate_f_with_plan, full_objective, step_alternatives, EstimatePlan, FEstimate, Pass, TripTerm,
};
use shopper::rng::stream_rng;
use shopper::variational::{
    chain_gradient, log_prior_minus_q, sample_latents, Factor, OptimizerConfig, VariationalState,
};
use statrs::function::gamma::{digamma, ln_gamma};

/// Three items plus checkout, two users, two trips. Item `b` is not offered
/// in the second trip's week.
pub fn tiny_instance() -> (Catalog, Vec<Trip>) {
    let mut catalog = Catalog::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec!["u0".into(), "u1".into()],
    )
    .unwrap();
    let checkout = catalog.checkout();
    let week = |abs: u32, prices: [f64; 3]| {
        let mut p = prices.to_vec();
        p.push(f64::NAN);
        Arc::new(WeekPrices::new(abs, p, checkout))
    };
    let trips = vec![
        Trip {
            trip_id: 1,
            user: 0,
            week: calendar_week(1),
            abs_week: 1,
            prices: week(1, [1.0, 2.0, 1.5]),
            items: vec![0, 1, checkout],
        },
        Trip {
            trip_id: 2,
            user: 1,
            week: calendar_week(2),
            abs_week: 2,
            prices: week(2, [3.0, f64::NAN, 0.5]),
            items: vec![2, 0, checkout],
        },
    ];
    set_reference_prices(&mut catalog, &trips);
    (catalog, trips)
}

pub fn tiny_config(think_ahead: bool) -> ModelConfig {
    ModelConfig {
        k_items: 2,
        k_price: 2,
        k_season: 2,
        use_preferences: true,
        use_price: true,
        use_season: true,
        think_ahead,
        ..ModelConfig::default()
    }
}

/// A catalog of `n` purchasable items, one user, and a trip that offers every
/// item at its mean price.
pub fn uniform_world(n: usize, basket: &[usize]) -> (Catalog, Trip) {
    let mut catalog = Catalog::new((0..n).map(|i| format!("i{i}")).collect(), vec!["u".into()]).unwrap();
    let checkout = catalog.checkout();
    let mut prices = vec![1.0; n];
    prices.push(f64::NAN);
    let mut items = basket.to_vec();
    items.push(checkout);
    let trip = Trip {
        trip_id: 0,
        user: 0,
        week: 1,
        abs_week: 1,
        prices: Arc::new(WeekPrices::new(1, prices, checkout)),
        items,
    };
    set_reference_prices(&mut catalog, std::slice::from_ref(&trip));
    (catalog, trip)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Straight-line mean utility.
pub fn oracle_psi(s: &LatentState, cfg: &ModelConfig, catalog: &Catalog, trip: &Trip, c: usize) -> f64 {
    let mut v = s.lambda().row(c)[0];
    if cfg.use_preferences {
        v += dot(s.theta().row(trip.user), s.alpha().row(c));
    }
    if cfg.use_price && c != catalog.checkout() {
        let x = (trip.price(c).unwrap() / catalog.mean_price(c).unwrap()).ln();
        v -= dot(s.gamma().row(trip.user), s.beta().row(c)) * x;
    }
    if cfg.use_season {
        v += dot(s.delta().row(trip.week as usize - 1), s.mu().row(c));
    }
    v
}

/// Straight-line utility of `c` after `basket`, look-ahead by brute force.
pub fn oracle_utility(
    s: &LatentState,
    cfg: &ModelConfig,
    catalog: &Catalog,
    trip: &Trip,
    c: usize,
    basket: &[usize],
) -> f64 {
    let k = cfg.k_items;
    let mut sum = vec![0.0; k];
    for &j in basket {
        for d in 0..k {
            sum[d] += s.alpha().row(j)[d];
        }
    }
    let mut v = oracle_psi(s, cfg, catalog, trip, c);
    if !basket.is_empty() {
        v += dot(s.rho().row(c), &sum) / basket.len() as f64;
    }
    if cfg.think_ahead && (c != catalog.checkout() || cfg.checkout_lookahead) {
        let mut ahead = sum.clone();
        for d in 0..k {
            ahead[d] += s.alpha().row(c)[d];
        }
        let best = trip
            .feasible()
            .iter()
            .copied()
            .filter(|&n| n != c && !basket.contains(&n))
            .map(|n| {
                oracle_psi(s, cfg, catalog, trip, n) + dot(s.rho().row(n), &ahead) / (basket.len() + 1) as f64
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if best.is_finite() {
            v += best;
        }
    }
    v
}

pub fn oracle_log_softmax(
    s: &LatentState,
    cfg: &ModelConfig,
    catalog: &Catalog,
    trip: &Trip,
    c: usize,
    basket: &[usize],
) -> f64 {
    let us: Vec<f64> = trip
        .feasible()
        .iter()
        .filter(|n| !basket.contains(n))
        .map(|&n| oracle_utility(s, cfg, catalog, trip, n, basket))
        .collect();
    let m = us.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + us.iter().map(|u| (u - m).exp()).sum::<f64>().ln();
    oracle_utility(s, cfg, catalog, trip, c, basket) - lse
}

/// All orderings of `items`.
pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Full one-vs-each bound averaged over every ordering of the trip.
pub fn oracle_trip_bound(s: &LatentState, cfg: &ModelConfig, catalog: &Catalog, trip: &Trip) -> f64 {
    let perms = permutations(trip.purchased());
    let mut total = 0.0;
    for mut order in perms.clone() {
        order.push(catalog.checkout());
        for i in 0..order.len() {
            let (prefix, c) = (&order[..i], order[i]);
            let target = oracle_utility(s, cfg, catalog, trip, c, prefix);
            for &n in trip.feasible() {
                if n != c && !prefix.contains(&n) {
                    let d = target - oracle_utility(s, cfg, catalog, trip, n, prefix);
                    total += -(1.0 + (-d).exp()).ln();
                }
            }
        }
    }
    total / perms.len() as f64
}

pub fn random_setup(think_ahead: bool, seed: u64) -> (Catalog, Vec<Trip>, ModelConfig, VariationalState, LatentState) {
    let (catalog, trips) = tiny_instance();
    let config = tiny_config(think_ahead);
    let mut rng = stream_rng(seed, "objective-test");
    let v = VariationalState::initialize(&config, catalog.n_items(), catalog.n_users(), 0.5, &mut rng);
    let latents = LatentState::random(&config, catalog.n_items(), catalog.n_users(), 0.8, &mut rng);
    (catalog, trips, config, v, latents)
}

/// Worst relative error between the analytic latent gradient of the
/// estimator and central differences, for one frozen plan.
pub fn max_relative_gradient_error(think_ahead: bool, seed: u64) -> f64 {
    let (catalog, trips, config, v, latents) = random_setup(think_ahead, seed);
    let opt = OptimizerConfig {
        batch_trips: 1,
        batch_negatives: 1,
        ..OptimizerConfig::default()
    };
    let plan = draw_plan(&trips, &opt, &mut stream_rng(seed, "plan"));
    let f = |s: &LatentState| {
        estimate_f_with_plan(&v, s, &trips, &catalog, &config, &plan, Execution::Sequential)
            .unwrap()
    };
    let analytic = f(&latents).grad;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..latents.len() {
        let mut plus = latents.clone();
        *plus.entry_mut(i) += h;
        let mut minus = latents.clone();
        *minus.entry_mut(i) -= h;
        let numeric = (f(&plus).value - f(&minus).value) / (2.0 * h);
        let a = analytic.iter().nth(i).unwrap();
        let scale = a.abs().max(numeric.abs()).max(1e-2);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

pub fn n_choose_k_subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if items.len() < k {
        return vec![];
    }
    let mut out = Vec::new();
    for mut rest in n_choose_k_subsets(&items[1..], k - 1) {
        rest.insert(0, items[0]);
        out.push(rest);
    }
    out.extend(n_choose_k_subsets(&items[1..], k));
    out
}

/// Every (negatives per step) configuration of one ordered pass with its
/// probability under uniform sampling without replacement.
pub fn negative_configurations(trip: &Trip, order: &[usize], k: usize) -> Vec<(Vec<Vec<usize>>, f64)> {
    let mut configs = vec![(Vec::new(), 1.0)];
    for i in 0..order.len() {
        let alternatives = step_alternatives(trip, &order[..i], order[i]);
        let subsets = if alternatives.len() <= k {
            vec![alternatives]
        } else {
            n_choose_k_subsets(&alternatives, k)
        };
        let p = 1.0 / subsets.len() as f64;
        configs = configs
            .into_iter()
            .flat_map(|(negs, q): (Vec<Vec<usize>>, f64)| {
                subsets.iter().map(move |s| {
                    let mut n = negs.clone();
                    n.push(s.clone());
                    (n, q * p)
                })
            })
            .collect();
    }
    configs
}

/// Gap between the exact expectation of the subsampled estimator, taken over
/// every permutation and negative draw, and the full objective.
pub fn unbiasedness_gap(think_ahead: bool) -> f64 {
    let (catalog, trips, config, v, latents) = random_setup(think_ahead, 11);
    let full = full_objective(&v, &latents, &trips, &catalog, &config).unwrap();
    let t = trips.len() as f64;
    let mut expectation = 0.0;
    let mut total_probability = 0.0;
    for (ti, trip) in trips.iter().enumerate() {
        let perms = permutations(trip.purchased());
        for mut order in perms.clone() {
            order.push(catalog.checkout());
            for (negatives, p_neg) in negative_configurations(trip, &order, 1) {
                let p = p_neg / perms.len() as f64 / t;
                let plan = EstimatePlan {
                    passes: vec![Pass {
                        trip: ti,
                        order: order.clone(),
                        negatives,
                        weight: t,
                    }],
                };
                let value = estimate_f_with_plan(&v, &latents, &trips, &catalog, &config, &plan, Execution::Sequential)
                    .unwrap()
                    .value;
                expectation += p * value;
                total_probability += p;
            }
        }
    }
    assert!((total_probability - 1.0).abs() < 1e-12);
    (expectation - full).abs()
}

/// Brute-force unordered likelihood from the straight-line oracle.
pub fn oracle_unordered_loglik(s: &LatentState, cfg: &ModelConfig, catalog: &Catalog, trip: &Trip) -> f64 {
    let terms: Vec<f64> = permutations(trip.purchased())
        .into_iter()
        .map(|mut order| {
            order.push(catalog.checkout());
            (0..order.len())
                .map(|i| oracle_log_softmax(s, cfg, catalog, trip, order[i], &order[..i]))
                .sum()
        })
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

pub const ORACLE_DRAWS: usize = 100_000;

/// One Monte Carlo gradient average against its closed-form value.
#[derive(Clone, Debug)]
pub struct OracleCheck {
    pub label: &'static str,
    pub estimate: f64,
    pub se: f64,
    pub expected: f64,
}

impl OracleCheck {
    pub fn within(&self, k: f64) -> bool {
        (self.estimate - self.expected).abs() <= k * self.se + 1e-12
    }
}

struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn new() -> Self {
        Self { n: 0.0, sum: 0.0, sum_sq: 0.0 }
    }

    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn check(&self, label: &'static str, expected: f64) -> OracleCheck {
        let mean = self.sum / self.n;
        OracleCheck {
            label,
            estimate: mean,
            se: ((self.sum_sq / self.n - mean * mean) / self.n).sqrt(),
            expected,
        }
    }
}

pub fn scalar_config() -> ModelConfig {
    ModelConfig {
        k_items: 1,
        k_price: 1,
        k_season: 1,
        use_preferences: false,
        use_price: true,
        use_season: false,
        think_ahead: false,
        prior_std: 1.5,
        gamma_prior_shape: 2.0,
        gamma_prior_rate: 3.0,
        ..ModelConfig::default()
    }
}

/// One item plus checkout and one user, with the first `lambda` entry at
/// mean 0.4, std 0.7 and the first `beta` entry at shape 3, mean 0.8.
pub fn scalar_state(config: &ModelConfig) -> VariationalState {
    let mut v = VariationalState::initialize(config, 2, 1, 0.1, &mut stream_rng(0, "init"));
    if let Factor::Gaussian { mean, std } = v.factor_mut(Latent::Lambda) {
        mean.as_mut_slice()[0] = 0.4;
        std.as_mut_slice()[0] = 0.7;
    }
    if let Factor::Gamma { shape, mean } = v.factor_mut(Latent::Beta) {
        shape.as_mut_slice()[0] = 3.0;
        mean.as_mut_slice()[0] = 0.8;
    }
    v
}

/// Prior and variational terms plus an extra likelihood on a single entry.
fn manual_estimate(
    v: &VariationalState,
    config: &ModelConfig,
    latents: &LatentState,
    latent: Latent,
    lik: impl Fn(f64) -> (f64, f64),
) -> FEstimate {
    let mut grad = latents.zeros_like();
    let prior = log_prior_minus_q(v, config, latents, Some(&mut grad));
    let (value, dx) = lik(latents.block(latent).as_slice()[0]);
    grad.block_mut(latent).as_mut_slice()[0] += dx;
    FEstimate {
        value: prior + value,
        grad,
        trip_terms: vec![TripTerm { trip: 0, user: 0, value }],
    }
}

/// Gaussian entry with a likelihood `N(1.3 | x, 0.5²)`. The ELBO is
/// `−(m² + s²)/(2 s0²) + ln s − ((y − m)² + s²)/(2 sy²) + const`.
pub fn gaussian_gradient_oracle(draws: usize, seed: u64) -> [OracleCheck; 2] {
    let config = scalar_config();
    let v = scalar_state(&config);
    let (y, sy) = (1.3, 0.5);
    let lik = |x: f64| {
        let z = (y - x) / sy;
        (-0.5 * z * z - (sy * (2.0 * std::f64::consts::PI).sqrt()).ln(), z / sy)
    };
    let mut rng = stream_rng(seed, "gaussian-oracle");
    let (mut gm, mut gs) = (Moments::new(), Moments::new());
    for _ in 0..draws {
        let (latents, noise) = sample_latents(&v, &mut rng);
        let est = manual_estimate(&v, &config, &latents, Latent::Lambda, lik);
        let g = chain_gradient(&v, &config, &latents, &noise, &est, true);
        let (dm, ds) = g.factor(Latent::Lambda).params();
        gm.push(dm.as_slice()[0]);
        gs.push(ds.as_slice()[0]);
    }
    let (m, s, s0) = (0.4, 0.7, config.prior_std);
    [
        gm.check("gaussian d/d mean", -m / (s0 * s0) + (y - m) / (sy * sy)),
        gs.check("gaussian d/d std", -s / (s0 * s0) + 1.0 / s - s / (sy * sy)),
    ]
}

/// Gamma entry with a likelihood `1.5 ln x − 2.5 x`; the closed-form ELBO
/// is differentiated numerically.
pub fn gamma_gradient_oracle(draws: usize, seed: u64) -> [OracleCheck; 2] {
    let config = scalar_config();
    let v = scalar_state(&config);
    let (big_a, big_b) = (1.5, 2.5);
    let lik = |x: f64| (big_a * x.ln() - big_b * x, big_a / x - big_b);
    let (a0, b0) = (config.gamma_prior_shape, config.gamma_prior_rate);
    let elbo = |a: f64, m: f64| {
        let r = a / m;
        let e_log = digamma(a) - r.ln();
        let log_p = a0 * b0.ln() - ln_gamma(a0) + (a0 - 1.0) * e_log - b0 * m;
        let log_q = a * r.ln() - ln_gamma(a) + (a - 1.0) * e_log - a;
        log_p - log_q + big_a * e_log - big_b * m
    };
    let (a, m, h) = (3.0, 0.8, 1e-5);
    let want_shape = (elbo(a + h, m) - elbo(a - h, m)) / (2.0 * h);
    let want_mean = (elbo(a, m + h) - elbo(a, m - h)) / (2.0 * h);

    let mut rng = stream_rng(seed, "gamma-oracle");
    let (mut ga, mut gm) = (Moments::new(), Moments::new());
    for _ in 0..draws {
        let (latents, noise) = sample_latents(&v, &mut rng);
        let est = manual_estimate(&v, &config, &latents, Latent::Beta, lik);
        let g = chain_gradient(&v, &config, &latents, &noise, &est, true);
        let (da, dm) = g.factor(Latent::Beta).params();
        ga.push(da.as_slice()[0]);
        gm.push(dm.as_slice()[0]);
    }
    [ga.check("gamma d/d shape", want_shape), gm.check("gamma d/d mean", want_mean)]
}
