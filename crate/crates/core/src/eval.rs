//! Held-out likelihoods and item-pair metrics computed from posterior means.

use rand::Rng;

use crate::block::dot;
use crate::data::{Catalog, HeldoutPair, Trip};
use crate::error::{Result, ShopperError};
use crate::exec::{chunk_ranges, Execution};
use crate::model::{LatentState, ModelConfig, Shopper, TripContext};
use crate::rng::stream_rng;
use crate::variational::VariationalState;

/// Number of bootstrap resamples behind reported standard deviations.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Point estimates of every latent plus the average customer and week.
#[derive(Clone, Debug)]
pub struct PosteriorSummary {
    pub state: LatentState,
    pub theta_bar: Vec<f64>,
    pub gamma_bar: Vec<f64>,
    pub delta_bar: Vec<f64>,
}

impl PosteriorSummary {
    pub fn new(state: LatentState) -> Self {
        let avg = Shopper::average(&state);
        Self {
            state,
            theta_bar: avg.theta,
            gamma_bar: avg.gamma,
            delta_bar: avg.delta,
        }
    }

    pub fn from_variational(v: &VariationalState) -> Self {
        Self::new(v.means())
    }

    fn average_shopper(&self) -> Shopper {
        Shopper {
            user: None,
            week: None,
            theta: self.theta_bar.clone(),
            gamma: self.gamma_bar.clone(),
            delta: self.delta_bar.clone(),
        }
    }
}

/// Mean of per-item log-likelihoods with a bootstrap standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoglikReport {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    /// Baskets skipped because they were too small for the mode.
    pub skipped: usize,
}

impl LoglikReport {
    pub fn from_values(values: &[f64], seed: u64) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                count,
                skipped: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let mut rng = stream_rng(seed, "bootstrap");
        let means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
            .map(|_| (0..count).map(|_| values[rng.gen_range(0..count)]).sum::<f64>() / count as f64)
            .collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
        Self {
            mean,
            std: var.sqrt(),
            count,
            skipped: 0,
        }
    }
}

/// Log-probability of `target` as the next choice after every other
/// purchased item of the trip, taken in recorded order.
pub fn conditional_logprob(
    state: &LatentState,
    config: &ModelConfig,
    catalog: &Catalog,
    trip: &Trip,
    target: usize,
) -> Result<f64> {
    if target == catalog.checkout() || !trip.purchased().contains(&target) {
        return Err(ShopperError::domain(format!(
            "item {} is not a purchase of trip {}",
            catalog.item_id(target),
            trip.trip_id
        )));
    }
    let ctx = TripContext::for_trip(state, config, catalog, trip)?;
    let context: Vec<usize> = trip
        .items
        .iter()
        .copied()
        .filter(|&c| c != target && c != catalog.checkout())
        .collect();
    let basket = ctx.basket_of(&context)?;
    Ok(ctx.step(&basket).log_prob(target))
}

/// Per-pair conditional log-likelihoods, in pair order.
pub fn conditional_logliks(
    state: &LatentState,
    config: &ModelConfig,
    catalog: &Catalog,
    trips: &[Trip],
    pairs: &[HeldoutPair],
    exec: Execution,
) -> Result<Vec<f64>> {
    let ranges = chunk_ranges(pairs.len());
    let chunks = exec.map(&ranges, |r| {
        pairs[r.clone()]
            .iter()
            .map(|p| {
                let trip = trips
                    .get(p.trip)
                    .ok_or_else(|| ShopperError::domain(format!("trip index {} out of range", p.trip)))?;
                conditional_logprob(state, config, catalog, trip, p.item)
            })
            .collect::<Result<Vec<f64>>>()
    });
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in chunks {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Mean held-out log-likelihood of each target given the rest of its basket.
pub fn heldout_conditional_loglik(
    summary: &PosteriorSummary,
    config: &ModelConfig,
    catalog: &Catalog,
    trips: &[Trip],
    pairs: &[HeldoutPair],
    seed: u64,
    exec: Execution,
) -> Result<LoglikReport> {
    let values = conditional_logliks(&summary.state, config, catalog, trips, pairs, exec)?;
    Ok(LoglikReport::from_values(&values, seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasketMode {
    /// First three items, conditioned on the rest of the basket.
    Triplets,
    /// Every item except checkout, from an empty basket.
    WholeBasket,
}

/// Per-item log-likelihoods of one trip scored sequentially in recorded
/// order, or `None` if the basket is too small for the mode.
pub fn basket_item_logliks(
    state: &LatentState,
    config: &ModelConfig,
    catalog: &Catalog,
    trip: &Trip,
    mode: BasketMode,
) -> Result<Option<Vec<f64>>> {
    let purchased: Vec<usize> = trip
        .items
        .iter()
        .copied()
        .filter(|&c| c != catalog.checkout())
        .collect();
    let (context, scored) = match mode {
        BasketMode::Triplets => {
            if purchased.len() < 3 {
                return Ok(None);
            }
            (&purchased[3..], &purchased[..3])
        }
        BasketMode::WholeBasket => (&purchased[..0], &purchased[..]),
    };
    let ctx = TripContext::for_trip(state, config, catalog, trip)?;
    let mut basket = ctx.basket_of(context)?;
    let mut out = Vec::with_capacity(scored.len());
    for &c in scored {
        out.push(ctx.step(&basket).log_prob(c));
        basket.push(state, c);
    }
    Ok(Some(out))
}

/// Per-item average log-likelihood over multi-item targets.
pub fn heldout_basket_loglik(
    summary: &PosteriorSummary,
    config: &ModelConfig,
    catalog: &Catalog,
    trips: &[Trip],
    mode: BasketMode,
    seed: u64,
    exec: Execution,
) -> Result<LoglikReport> {
    let ranges = chunk_ranges(trips.len());
    let chunks = exec.map(&ranges, |r| {
        trips[r.clone()]
            .iter()
            .map(|t| basket_item_logliks(&summary.state, config, catalog, t, mode))
            .collect::<Result<Vec<_>>>()
    });
    let mut values = Vec::new();
    let mut skipped = 0;
    for chunk in chunks {
        for v in chunk? {
            match v {
                Some(v) => values.extend(v),
                None => skipped += 1,
            }
        }
    }
    let mut report = LoglikReport::from_values(&values, seed);
    report.skipped = skipped;
    Ok(report)
}

fn check_pair(catalog: &Catalog, c: usize, c2: usize) -> Result<()> {
    let n = catalog.n_items();
    if c >= n || c2 >= n {
        return Err(ShopperError::domain("item index out of range"));
    }
    if c == catalog.checkout() || c2 == catalog.checkout() {
        return Err(ShopperError::domain("checkout has no pair metrics"));
    }
    if c == c2 {
        return Err(ShopperError::domain("pair metrics need two distinct items"));
    }
    Ok(())
}

/// `½(ρ_c·α_c′ + ρ_c′·α_c)`.
pub fn complementarity(summary: &PosteriorSummary, catalog: &Catalog, c: usize, c2: usize) -> Result<f64> {
    check_pair(catalog, c, c2)?;
    let s = &summary.state;
    Ok(0.5 * (dot(s.rho().row(c), s.alpha().row(c2)) + dot(s.rho().row(c2), s.alpha().row(c))))
}

/// Next-item distribution for the average customer in an average week,
/// every item offered at its mean price, with `c` alone in the basket.
pub fn conditional_item_distribution(
    summary: &PosteriorSummary,
    config: &ModelConfig,
    catalog: &Catalog,
    c: usize,
) -> Result<Vec<f64>> {
    if c >= catalog.n_items() || c == catalog.checkout() {
        return Err(ShopperError::domain("conditioning item must be a purchasable item"));
    }
    let n = catalog.n_items();
    let ctx = TripContext::with_prices(
        &summary.state,
        config,
        summary.average_shopper(),
        (0..n).collect(),
        vec![0.0; n],
        catalog.checkout(),
    );
    let basket = ctx.basket_of(&[c])?;
    Ok(ctx.step(&basket).distribution())
}

/// Symmetrized KL divergence between the next-item distributions given `c`
/// and given `c′`, both renormalized over items other than the pair and
/// checkout.
pub fn exchangeability(
    summary: &PosteriorSummary,
    config: &ModelConfig,
    catalog: &Catalog,
    c: usize,
    c2: usize,
) -> Result<f64> {
    check_pair(catalog, c, c2)?;
    let p = conditional_item_distribution(summary, config, catalog, c)?;
    let q = conditional_item_distribution(summary, config, catalog, c2)?;
    Ok(symmetrized_kl(&p, &q, &[c, c2, catalog.checkout()]))
}

fn symmetrized_kl(p: &[f64], q: &[f64], excluded: &[usize]) -> f64 {
    let support: Vec<usize> = (0..p.len()).filter(|k| !excluded.contains(k)).collect();
    let zp: f64 = support.iter().map(|&k| p[k]).sum();
    let zq: f64 = support.iter().map(|&k| q[k]).sum();
    let mut total = 0.0;
    for &k in &support {
        let (a, b) = (p[k] / zp, q[k] / zq);
        let log_ratio = a.ln() - b.ln();
        total += (a - b) * log_ratio;
    }
    (0.5 * total).max(0.0)
}

/// Items ranked by cosine distance of their attribute vectors to `c`.
pub fn similar_items(
    summary: &PosteriorSummary,
    catalog: &Catalog,
    c: usize,
    top_n: usize,
) -> Result<Vec<(usize, f64)>> {
    let alpha = summary.state.alpha();
    if c >= catalog.n_items() || c == catalog.checkout() {
        return Err(ShopperError::domain("query must be a purchasable item"));
    }
    let norm = |v: &[f64]| dot(v, v).sqrt();
    let a = alpha.row(c);
    let na = norm(a);
    if na == 0.0 {
        return Err(ShopperError::domain(format!(
            "item {} has a zero attribute vector",
            catalog.item_id(c)
        )));
    }
    let mut ranked: Vec<(usize, f64)> = (0..catalog.n_items())
        .filter(|&k| k != c && k != catalog.checkout())
        .map(|k| {
            let b = alpha.row(k);
            let nb = norm(b);
            let cos = if nb == 0.0 { 0.0 } else { dot(a, b) / (na * nb) };
            (k, 1.0 - cos)
        })
        .collect();
    ranked.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    ranked.truncate(top_n);
    Ok(ranked)
}

/// Partners of `c` by descending complementarity.
pub fn top_complements(
    summary: &PosteriorSummary,
    catalog: &Catalog,
    c: usize,
    top_n: usize,
) -> Result<Vec<(usize, f64)>> {
    let mut ranked = partners(catalog, c)
        .map(|k| Ok((k, complementarity(summary, catalog, c, k)?)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    ranked.truncate(top_n);
    Ok(ranked)
}

/// Partners of `c` by ascending exchangeability.
pub fn top_exchangeable(
    summary: &PosteriorSummary,
    config: &ModelConfig,
    catalog: &Catalog,
    c: usize,
    top_n: usize,
) -> Result<Vec<(usize, f64)>> {
    let mut ranked = partners(catalog, c)
        .map(|k| Ok((k, exchangeability(summary, config, catalog, c, k)?)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    ranked.truncate(top_n);
    Ok(ranked)
}

fn partners(catalog: &Catalog, c: usize) -> impl Iterator<Item = usize> + '_ {
    (0..catalog.n_items()).filter(move |&k| k != c && k != catalog.checkout())
}
