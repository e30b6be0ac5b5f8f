//! Simulated grocery world with two customer segments and two complementary
//! pairs, used to exercise the model end to end.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{calendar_week, set_reference_prices, Catalog, Trip, WeekPrices};
use crate::error::{Result, ShopperError};
use crate::rng::stream_rng;

pub const COFFEE: &str = "coffee";
pub const DIAPERS: &str = "diapers";
pub const RAMEN: &str = "ramen";
pub const CANDY: &str = "candy";
pub const HOT_DOGS: &str = "hot_dogs";
pub const HOT_DOG_BUNS: &str = "hot_dog_buns";
pub const TACO_SHELLS: &str = "taco_shells";
pub const TACO_SEASONING: &str = "taco_seasoning";

/// Item identifiers in catalog order.
pub const ITEMS: [&str; 8] = [
    COFFEE,
    DIAPERS,
    RAMEN,
    CANDY,
    HOT_DOGS,
    HOT_DOG_BUNS,
    TACO_SHELLS,
    TACO_SEASONING,
];

/// Catalog indices of the preference items of each segment.
pub const PARENT_ITEMS: [usize; 2] = [0, 1];
pub const STUDENT_ITEMS: [usize; 2] = [2, 3];
/// Catalog indices of the two complementary pairs.
pub const PAIRS: [[usize; 2]; 2] = [[4, 5], [6, 7]];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Parent,
    Student,
}

impl Segment {
    pub fn preferred(self) -> [usize; 2] {
        match self {
            Segment::Parent => PARENT_ITEMS,
            Segment::Student => STUDENT_ITEMS,
        }
    }
}

fn default_customers() -> usize {
    50
}
fn default_trips() -> usize {
    1000
}
fn default_test_trips() -> usize {
    30
}
fn default_markup_pref() -> f64 {
    0.4
}
fn default_markup_pair() -> f64 {
    0.6
}
fn default_markup_pref_test() -> f64 {
    0.95
}
fn default_markup_pair_test() -> f64 {
    1.0
}
fn default_buy_low() -> f64 {
    0.95
}
fn default_buy_high() -> f64 {
    0.1
}
fn default_balanced() -> f64 {
    0.5
}
fn default_cheap() -> f64 {
    0.85
}
fn default_expensive() -> f64 {
    0.15
}
fn default_low_price() -> f64 {
    1.0
}
fn default_high_price() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyWorldConfig {
    #[serde(default = "default_customers")]
    pub n_customers_per_segment: usize,
    #[serde(default = "default_trips")]
    pub n_trips_per_customer: usize,
    #[serde(default = "default_test_trips")]
    pub n_test_trips_per_customer: usize,
    #[serde(default = "default_markup_pref")]
    pub p_markup_preference: f64,
    #[serde(default = "default_markup_pair")]
    pub p_markup_pair: f64,
    #[serde(default = "default_markup_pref_test")]
    pub p_markup_preference_test: f64,
    #[serde(default = "default_markup_pair_test")]
    pub p_markup_pair_test: f64,
    #[serde(default = "default_buy_low")]
    pub p_buy_preferred_low: f64,
    #[serde(default = "default_buy_high")]
    pub p_buy_preferred_high: f64,
    #[serde(default = "default_balanced")]
    pub p_pair_balanced: f64,
    #[serde(default = "default_cheap")]
    pub p_pair_cheap: f64,
    #[serde(default = "default_expensive")]
    pub p_pair_expensive: f64,
    #[serde(default = "default_low_price")]
    pub low_price: f64,
    #[serde(default = "default_high_price")]
    pub high_price: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for ToyWorldConfig {
    fn default() -> Self {
        Self {
            n_customers_per_segment: default_customers(),
            n_trips_per_customer: default_trips(),
            n_test_trips_per_customer: default_test_trips(),
            p_markup_preference: default_markup_pref(),
            p_markup_pair: default_markup_pair(),
            p_markup_preference_test: default_markup_pref_test(),
            p_markup_pair_test: default_markup_pair_test(),
            p_buy_preferred_low: default_buy_low(),
            p_buy_preferred_high: default_buy_high(),
            p_pair_balanced: default_balanced(),
            p_pair_cheap: default_cheap(),
            p_pair_expensive: default_expensive(),
            low_price: default_low_price(),
            high_price: default_high_price(),
            rng_seed: 0,
        }
    }
}

impl ToyWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.p_markup_preference,
            self.p_markup_pair,
            self.p_markup_preference_test,
            self.p_markup_pair_test,
            self.p_buy_preferred_low,
            self.p_buy_preferred_high,
            self.p_pair_balanced,
            self.p_pair_cheap,
            self.p_pair_expensive,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ShopperError::domain("toy probabilities must lie in [0, 1]"));
        }
        if (self.p_pair_cheap + self.p_pair_expensive - 1.0).abs() > 1e-12 {
            return Err(ShopperError::domain(
                "with one pair marked up, the cheap and marked pair probabilities must sum to 1",
            ));
        }
        if !(self.low_price > 0.0 && self.high_price > self.low_price) {
            return Err(ShopperError::domain("toy prices must satisfy 0 < low < high"));
        }
        if self.n_customers_per_segment == 0 {
            return Err(ShopperError::domain("toy world needs at least one customer per segment"));
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        2 * self.n_customers_per_segment
    }

    /// Parents come first in the user registry.
    pub fn segment(&self, user: usize) -> Segment {
        if user < self.n_customers_per_segment {
            Segment::Parent
        } else {
            Segment::Student
        }
    }

    /// Price vector (catalog order, checkout slot included) with `high`
    /// items marked up.
    pub fn prices(&self, high: &[usize]) -> Vec<f64> {
        let mut prices = vec![self.low_price; ITEMS.len() + 1];
        for &c in high {
            prices[c] = self.high_price;
        }
        prices
    }
}

/// The toy catalog: eight items plus checkout, parents then students.
pub fn toy_catalog(cfg: &ToyWorldConfig) -> Result<Catalog> {
    let items = ITEMS.iter().map(|s| s.to_string()).collect();
    let users = (0..cfg.n_customers_per_segment)
        .map(|i| format!("parent_{i:03}"))
        .chain((0..cfg.n_customers_per_segment).map(|i| format!("student_{i:03}")))
        .collect();
    Catalog::new(items, users)
}

/// A trip at the given prices; `items` excludes checkout.
pub fn make_trip(
    catalog: &Catalog,
    cfg: &ToyWorldConfig,
    trip_id: u64,
    user: usize,
    abs_week: u32,
    high: &[usize],
    items: &[usize],
) -> Trip {
    let prices = WeekPrices::new(abs_week, cfg.prices(high), catalog.checkout());
    let mut items = items.to_vec();
    items.push(catalog.checkout());
    Trip {
        trip_id,
        user,
        week: calendar_week(abs_week),
        abs_week,
        prices: Arc::new(prices),
        items,
    }
}

/// Sampled prices and purchases of one trip.
#[derive(Clone, Debug, PartialEq)]
pub struct TripDraw {
    pub high: Vec<usize>,
    /// Pair index marked up, if any.
    pub marked_pair: Option<usize>,
    pub items: Vec<usize>,
}

pub fn draw_trip<R: Rng + ?Sized>(
    cfg: &ToyWorldConfig,
    segment: Segment,
    p_markup_preference: f64,
    p_markup_pair: f64,
    rng: &mut R,
) -> TripDraw {
    let mut high = Vec::new();
    for c in PARENT_ITEMS.into_iter().chain(STUDENT_ITEMS) {
        if rng.gen_bool(p_markup_preference) {
            high.push(c);
        }
    }
    let mut marked_pair = None;
    if rng.gen_bool(p_markup_pair) {
        let which = rng.gen_range(0..4);
        let item = PAIRS[which / 2][which % 2];
        high.push(item);
        marked_pair = Some(which / 2);
    }
    let mut items = Vec::new();
    for c in segment.preferred() {
        let p = if high.contains(&c) {
            cfg.p_buy_preferred_high
        } else {
            cfg.p_buy_preferred_low
        };
        if rng.gen_bool(p) {
            items.push(c);
        }
    }
    let pair = match marked_pair {
        None => usize::from(!rng.gen_bool(cfg.p_pair_balanced)),
        Some(m) => {
            if rng.gen_bool(cfg.p_pair_expensive) {
                m
            } else {
                1 - m
            }
        }
    };
    items.extend(PAIRS[pair]);
    items.shuffle(rng);
    high.sort_unstable();
    TripDraw {
        high,
        marked_pair,
        items,
    }
}

#[allow(clippy::too_many_arguments)]
fn generate_trips(
    catalog: &Catalog,
    cfg: &ToyWorldConfig,
    n_trips: usize,
    p_markup_preference: f64,
    p_markup_pair: f64,
    first_week: u32,
    first_id: u64,
    label: &str,
) -> Vec<Trip> {
    let mut rng = stream_rng(cfg.rng_seed, label);
    let n_users = cfg.n_users();
    let mut trips = Vec::with_capacity(n_trips * n_users);
    for round in 0..n_trips {
        for user in 0..n_users {
            let k = (round * n_users + user) as u64;
            let draw = draw_trip(cfg, cfg.segment(user), p_markup_preference, p_markup_pair, &mut rng);
            trips.push(make_trip(
                catalog,
                cfg,
                first_id + k,
                user,
                first_week + k as u32,
                &draw.high,
                &draw.items,
            ));
        }
    }
    trips
}

/// Training world. Each trip gets its own absolute week so that per-trip
/// prices fit the weekly price format.
pub fn generate_world(cfg: &ToyWorldConfig) -> Result<(Catalog, Vec<Trip>)> {
    cfg.validate()?;
    let mut catalog = toy_catalog(cfg)?;
    let trips = generate_trips(
        &catalog,
        cfg,
        cfg.n_trips_per_customer,
        cfg.p_markup_preference,
        cfg.p_markup_pair,
        1,
        0,
        "toy-train",
    );
    set_reference_prices(&mut catalog, &trips);
    Ok((catalog, trips))
}

/// Intervention test trips, placed after the training weeks.
pub fn generate_intervention_test(cfg: &ToyWorldConfig, catalog: &Catalog) -> Result<Vec<Trip>> {
    cfg.validate()?;
    if catalog.items().len() != ITEMS.len() + 1 || catalog.n_users() != cfg.n_users() {
        return Err(ShopperError::CatalogMismatch {
            expected: "toy catalog".into(),
            found: catalog.hash(),
        });
    }
    let n_train = (cfg.n_trips_per_customer * cfg.n_users()) as u64;
    Ok(generate_trips(
        catalog,
        cfg,
        cfg.n_test_trips_per_customer,
        cfg.p_markup_preference_test,
        cfg.p_markup_pair_test,
        n_train as u32 + 1,
        n_train,
        "toy-intervention",
    ))
}
