//! Transaction data: item/user registries, per-week price vectors, trips,
//! and the chronological train/validation/test protocol.
//!
//! Two CSV files describe a dataset:
//!
//! * trips: header `trip_id,user_id,abs_week,item_id`, one row per purchase;
//! * prices: header `abs_week,item_id,price`.
//!
//! A trip inherits the price vector of its absolute week. Items without a
//! price that week are not offered on the trip. The checkout item is never
//! listed in the files; it is appended to every basket on load.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ShopperError};
use crate::rng::stream_rng;

/// Identifier reserved for the checkout pseudo-item.
pub const CHECKOUT_ID: &str = "checkout";
pub const WEEKS_PER_YEAR: u32 = 52;
/// Size of the chronological test window, in absolute weeks.
pub const TEST_WINDOW_WEEKS: u32 = 8;
pub const VALIDATION_FRACTION: f64 = 0.05;

const TRIPS_HEADER: [&str; 4] = ["trip_id", "user_id", "abs_week", "item_id"];
const PRICES_HEADER: [&str; 3] = ["abs_week", "item_id", "price"];

/// Calendar week (1..=52) of an absolute week counter starting at 1.
pub fn calendar_week(abs_week: u32) -> u32 {
    (abs_week.saturating_sub(1) % WEEKS_PER_YEAR) + 1
}

/// Zero-based month index of an absolute week: weeks 1-4 are month 0.
pub fn month_of(abs_week: u32) -> u32 {
    abs_week.saturating_sub(1) / 4
}

/// Prices offered in one absolute week. Missing prices are stored as NaN.
#[derive(Clone, Debug)]
pub struct WeekPrices {
    abs_week: u32,
    prices: Vec<f64>,
    feasible: Vec<usize>,
}

impl PartialEq for WeekPrices {
    fn eq(&self, other: &Self) -> bool {
        self.abs_week == other.abs_week
            && self.feasible == other.feasible
            && self.prices.len() == other.prices.len()
            && self.prices.iter().zip(&other.prices).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl WeekPrices {
    /// `prices` has one slot per catalog item; the checkout slot is ignored.
    pub fn new(abs_week: u32, mut prices: Vec<f64>, checkout: usize) -> Self {
        prices[checkout] = f64::NAN;
        let mut feasible: Vec<usize> = prices
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_nan())
            .map(|(c, _)| c)
            .collect();
        feasible.push(checkout);
        feasible.sort_unstable();
        Self {
            abs_week,
            prices,
            feasible,
        }
    }

    pub fn abs_week(&self) -> u32 {
        self.abs_week
    }

    pub fn price(&self, item: usize) -> Option<f64> {
        self.prices.get(item).copied().filter(|p| !p.is_nan())
    }

    /// Items offered this week, checkout included, ascending.
    pub fn feasible(&self) -> &[usize] {
        &self.feasible
    }
}

/// One shopping event. `items` is the basket in recorded order and always ends
/// with the checkout item.
#[derive(Clone, Debug, PartialEq)]
pub struct Trip {
    pub trip_id: u64,
    pub user: usize,
    pub week: u32,
    pub abs_week: u32,
    pub prices: Arc<WeekPrices>,
    pub items: Vec<usize>,
}

impl Trip {
    pub fn price(&self, item: usize) -> Option<f64> {
        self.prices.price(item)
    }

    /// Purchased items without the trailing checkout.
    pub fn purchased(&self) -> &[usize] {
        &self.items[..self.items.len().saturating_sub(1)]
    }

    pub fn feasible(&self) -> &[usize] {
        self.prices.feasible()
    }

    /// Basket length including checkout.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MonthPrice {
    month: u32,
    item: usize,
    price: f64,
}

/// Item and user registries plus the reference prices used to normalize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    items: Vec<String>,
    checkout: usize,
    users: Vec<String>,
    mean_price: Vec<Option<f64>>,
    month_mean_price: Vec<MonthPrice>,
    #[serde(skip)]
    item_index: HashMap<String, usize>,
    #[serde(skip)]
    user_index: HashMap<String, usize>,
}

impl Catalog {
    /// Registry with checkout appended after `items`. Mean prices start unset.
    pub fn new(items: Vec<String>, users: Vec<String>) -> Result<Self> {
        let mut items = items;
        if items.iter().any(|i| i == CHECKOUT_ID) {
            return Err(ShopperError::Data(format!(
                "item id `{CHECKOUT_ID}` is reserved"
            )));
        }
        let checkout = items.len();
        items.push(CHECKOUT_ID.to_string());
        let n = items.len();
        let mut catalog = Self {
            items,
            checkout,
            users,
            mean_price: vec![None; n],
            month_mean_price: Vec::new(),
            item_index: HashMap::new(),
            user_index: HashMap::new(),
        };
        catalog.rebuild_index()?;
        Ok(catalog)
    }

    /// Restore lookup tables after deserialization.
    pub fn rebuild_index(&mut self) -> Result<()> {
        self.item_index = self
            .items
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        self.user_index = self
            .users
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        if self.item_index.len() != self.items.len() {
            return Err(ShopperError::Data("duplicate item id".into()));
        }
        if self.user_index.len() != self.users.len() {
            return Err(ShopperError::Data("duplicate user id".into()));
        }
        if self.items.get(self.checkout).map(String::as_str) != Some(CHECKOUT_ID) {
            return Err(ShopperError::Data("checkout slot is corrupt".into()));
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn checkout(&self) -> usize {
        self.checkout
    }

    pub fn item_id(&self, item: usize) -> &str {
        &self.items[item]
    }

    pub fn user_id(&self, user: usize) -> &str {
        &self.users[user]
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn mean_price(&self, item: usize) -> Option<f64> {
        self.mean_price.get(item).copied().flatten()
    }

    pub fn set_mean_price(&mut self, item: usize, price: f64) {
        self.mean_price[item] = Some(price);
    }

    /// Mean price of `item` over trips in the month containing `abs_week`.
    pub fn month_mean_price(&self, abs_week: u32, item: usize) -> Option<f64> {
        let month = month_of(abs_week);
        self.month_mean_price
            .binary_search_by(|m| (m.month, m.item).cmp(&(month, item)))
            .ok()
            .map(|i| self.month_mean_price[i].price)
    }

    /// Replace per-month means with those observed on `trips`.
    pub fn set_month_means_from(&mut self, trips: &[Trip]) {
        let mut acc: BTreeMap<(u32, usize), (f64, usize)> = BTreeMap::new();
        for trip in trips {
            let month = month_of(trip.abs_week);
            for &c in trip.feasible() {
                if let Some(p) = trip.price(c) {
                    let e = acc.entry((month, c)).or_insert((0.0, 0));
                    e.0 += p;
                    e.1 += 1;
                }
            }
        }
        self.month_mean_price = acc
            .into_iter()
            .map(|((month, item), (sum, n))| MonthPrice {
                month,
                item,
                price: sum / n as f64,
            })
            .collect();
    }

    /// Set per-item mean prices as the trip-weighted average over `trips`.
    pub fn set_mean_prices_from<'a>(&mut self, trips: impl IntoIterator<Item = &'a Trip>) {
        let n = self.n_items();
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for trip in trips {
            for &c in trip.feasible() {
                if let Some(p) = trip.price(c) {
                    sum[c] += p;
                    count[c] += 1;
                }
            }
        }
        for c in 0..n {
            if count[c] > 0 {
                self.mean_price[c] = Some(sum[c] / count[c] as f64);
            }
        }
    }

    /// Hash over the index maps and reference prices. Month means are not part
    /// of it because evaluation data legitimately brings its own months.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for id in &self.items {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
        for id in &self.users {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        for p in &self.mean_price {
            h.update(p.unwrap_or(f64::NAN).to_le_bytes());
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `log(r_tc / mean_price[c])`.
pub fn normalized_log_price(catalog: &Catalog, trip: &Trip, item: usize) -> Result<f64> {
    let price = trip.price(item).ok_or_else(|| {
        ShopperError::domain(format!(
            "item {} has no price on trip {}",
            catalog.item_id(item),
            trip.trip_id
        ))
    })?;
    if !(price > 0.0) || !price.is_finite() {
        return Err(ShopperError::domain(format!(
            "price {price} of item {} on trip {} is not positive",
            catalog.item_id(item),
            trip.trip_id
        )));
    }
    let mean = catalog
        .mean_price(item)
        .filter(|m| *m > 0.0)
        .ok_or_else(|| {
            ShopperError::domain(format!("item {} has no mean price", catalog.item_id(item)))
        })?;
    Ok((price / mean).ln())
}

struct PriceRows {
    item_order: Vec<String>,
    by_week: BTreeMap<u32, HashMap<String, f64>>,
}

struct TripRow {
    trip_id: u64,
    user: String,
    abs_week: u32,
    items: Vec<(String, u64)>,
}

fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| ShopperError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers().map_err(|e| ShopperError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(ShopperError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(reader)
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T> {
    let raw = record.get(idx).map(str::trim).unwrap_or("");
    raw.parse().map_err(|_| ShopperError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("invalid {name} `{raw}`"),
    })
}

fn read_prices(path: &Path) -> Result<PriceRows> {
    let mut reader = open_csv(path, &PRICES_HEADER)?;
    let mut item_order = Vec::new();
    let mut seen = HashSet::new();
    let mut by_week: BTreeMap<u32, HashMap<String, f64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| ShopperError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let abs_week: u32 = parse_field(path, line, &record, 0, "abs_week")?;
        let item: String = parse_field(path, line, &record, 1, "item_id")?;
        let price: f64 = parse_field(path, line, &record, 2, "price")?;
        let bad = |message: String| ShopperError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if abs_week == 0 {
            return Err(bad("abs_week starts at 1".into()));
        }
        if item.is_empty() || item == CHECKOUT_ID {
            return Err(bad(format!("invalid item id `{item}`")));
        }
        if !(price > 0.0) || !price.is_finite() {
            return Err(bad(format!("price must be positive, got {price}")));
        }
        if seen.insert(item.clone()) {
            item_order.push(item.clone());
        }
        if by_week.entry(abs_week).or_default().insert(item.clone(), price).is_some() {
            return Err(bad(format!("duplicate price for `{item}` in week {abs_week}")));
        }
    }
    if by_week.is_empty() {
        return Err(ShopperError::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    Ok(PriceRows {
        item_order,
        by_week,
    })
}

fn read_trips(path: &Path) -> Result<Vec<TripRow>> {
    let mut reader = open_csv(path, &TRIPS_HEADER)?;
    let mut rows: Vec<TripRow> = Vec::new();
    let mut index: HashMap<u64, usize> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| ShopperError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let trip_id: u64 = parse_field(path, line, &record, 0, "trip_id")?;
        let user: String = parse_field(path, line, &record, 1, "user_id")?;
        let abs_week: u32 = parse_field(path, line, &record, 2, "abs_week")?;
        let item: String = parse_field(path, line, &record, 3, "item_id")?;
        let bad = |message: String| ShopperError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if abs_week == 0 {
            return Err(bad("abs_week starts at 1".into()));
        }
        if user.is_empty() {
            return Err(bad("empty user_id".into()));
        }
        if item.is_empty() || item == CHECKOUT_ID {
            return Err(bad(format!("invalid item id `{item}`")));
        }
        match index.get(&trip_id) {
            Some(&i) => {
                let row = &mut rows[i];
                if row.user != user || row.abs_week != abs_week {
                    return Err(bad(format!(
                        "trip {trip_id} changes user or week between rows"
                    )));
                }
                if row.items.iter().any(|(it, _)| *it == item) {
                    return Err(bad(format!("item `{item}` repeated in trip {trip_id}")));
                }
                row.items.push((item, line));
            }
            None => {
                index.insert(trip_id, rows.len());
                rows.push(TripRow {
                    trip_id,
                    user,
                    abs_week,
                    items: vec![(item, line)],
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(ShopperError::EmptyDataset {
            path: path.to_path_buf(),
        });
    }
    Ok(rows)
}

fn assemble_trips(catalog: &Catalog, rows: Vec<TripRow>, prices: &PriceRows) -> Result<Vec<Trip>> {
    let n = catalog.n_items();
    let mut weeks: HashMap<u32, Arc<WeekPrices>> = HashMap::new();
    let mut trips = Vec::with_capacity(rows.len());
    for row in rows {
        let week_prices = match weeks.get(&row.abs_week) {
            Some(w) => Arc::clone(w),
            None => {
                let mut vector = vec![f64::NAN; n];
                if let Some(map) = prices.by_week.get(&row.abs_week) {
                    for (id, &p) in map {
                        if let Some(c) = catalog.item_index(id) {
                            vector[c] = p;
                        }
                    }
                }
                let w = Arc::new(WeekPrices::new(row.abs_week, vector, catalog.checkout()));
                weeks.insert(row.abs_week, Arc::clone(&w));
                w
            }
        };
        let user = catalog
            .user_index(&row.user)
            .ok_or_else(|| ShopperError::CatalogMismatch {
                expected: format!("catalog {}", catalog.hash()),
                found: format!("unknown user `{}` in trip {}", row.user, row.trip_id),
            })?;
        let mut items = Vec::with_capacity(row.items.len() + 1);
        for (id, _line) in &row.items {
            // The catalog holds every priced item, so an unknown id has no price.
            let c = catalog
                .item_index(id)
                .ok_or_else(|| ShopperError::MissingPrice {
                    trip_id: row.trip_id,
                    item: id.clone(),
                    abs_week: row.abs_week,
                })?;
            if week_prices.price(c).is_none() {
                return Err(ShopperError::MissingPrice {
                    trip_id: row.trip_id,
                    item: id.clone(),
                    abs_week: row.abs_week,
                });
            }
            items.push(c);
        }
        items.push(catalog.checkout());
        trips.push(Trip {
            trip_id: row.trip_id,
            user,
            week: calendar_week(row.abs_week),
            abs_week: row.abs_week,
            prices: week_prices,
            items,
        });
    }
    Ok(trips)
}

/// Last absolute week belonging to the training period, or `None` when the
/// data is too short to hold out a test window.
pub fn training_cutoff(trips: &[Trip]) -> Option<u32> {
    let weeks: HashSet<u32> = trips.iter().map(|t| t.abs_week).collect();
    let max = weeks.iter().copied().max()?;
    (weeks.len() > TEST_WINDOW_WEEKS as usize).then(|| max - TEST_WINDOW_WEEKS)
}

/// Load a dataset, building the catalog from the files.
///
/// Item indices follow first appearance in the prices file, users follow first
/// appearance in the trips file, and checkout takes the last item slot. Mean
/// prices are trip-weighted over the training period.
pub fn load_dataset(trips_path: &Path, prices_path: &Path) -> Result<(Catalog, Vec<Trip>)> {
    let prices = read_prices(prices_path)?;
    let rows = read_trips(trips_path)?;
    let mut users = Vec::new();
    let mut seen = HashSet::new();
    for row in &rows {
        if seen.insert(row.user.as_str()) {
            users.push(row.user.clone());
        }
    }
    let mut catalog = Catalog::new(prices.item_order.clone(), users)?;
    let trips = assemble_trips(&catalog, rows, &prices)?;
    set_reference_prices(&mut catalog, &trips);
    Ok((catalog, trips))
}

/// Compute mean prices over the training period (falling back to all trips
/// for items only priced later) and month means over all trips.
pub fn set_reference_prices(catalog: &mut Catalog, trips: &[Trip]) {
    catalog.set_mean_prices_from(trips.iter());
    if let Some(cutoff) = training_cutoff(trips) {
        catalog.set_mean_prices_from(trips.iter().filter(|t| t.abs_week <= cutoff));
    }
    catalog.set_month_means_from(trips);
}

/// Load trips against an existing catalog (e.g. one restored from a
/// checkpoint). Reference means stay as they are; month means are taken from
/// the loaded trips.
pub fn load_trips_with_catalog(
    catalog: &Catalog,
    trips_path: &Path,
    prices_path: &Path,
) -> Result<(Catalog, Vec<Trip>)> {
    let prices = read_prices(prices_path)?;
    let rows = read_trips(trips_path)?;
    for id in &prices.item_order {
        if catalog.item_index(id).is_none() {
            return Err(ShopperError::CatalogMismatch {
                expected: format!("catalog {}", catalog.hash()),
                found: format!("unknown item `{id}` in {}", prices_path.display()),
            });
        }
    }
    let trips = assemble_trips(catalog, rows, &prices)?;
    let mut catalog = catalog.clone();
    catalog.set_month_means_from(&trips);
    Ok((catalog, trips))
}

/// Write trips and their week price vectors in the loader's formats. Weeks are
/// emitted in first-appearance order and items in index order.
pub fn write_dataset(
    catalog: &Catalog,
    trips: &[Trip],
    trips_path: &Path,
    prices_path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        File::create(trips_path).map_err(|e| ShopperError::io(trips_path, e))?,
    );
    let io = |e| ShopperError::io(trips_path, e);
    writeln!(out, "{}", TRIPS_HEADER.join(",")).map_err(io)?;
    for trip in trips {
        for &c in trip.purchased() {
            writeln!(
                out,
                "{},{},{},{}",
                trip.trip_id,
                catalog.user_id(trip.user),
                trip.abs_week,
                catalog.item_id(c)
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)?;

    let mut out = std::io::BufWriter::new(
        File::create(prices_path).map_err(|e| ShopperError::io(prices_path, e))?,
    );
    let io = |e| ShopperError::io(prices_path, e);
    writeln!(out, "{}", PRICES_HEADER.join(",")).map_err(io)?;
    let mut written = HashSet::new();
    for trip in trips {
        if !written.insert(trip.abs_week) {
            continue;
        }
        for c in 0..catalog.n_items() {
            if let Some(p) = trip.price(c) {
                writeln!(out, "{},{},{}", trip.abs_week, catalog.item_id(c), p).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)?;
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct DatasetSplit {
    pub train: Vec<Trip>,
    pub validation: Vec<Trip>,
    pub test: Vec<Trip>,
}

/// Chronological split: the final [`TEST_WINDOW_WEEKS`] absolute weeks are the
/// test set, and a seeded 5% of the remaining trips is held for validation.
pub fn split_dataset(trips: &[Trip], seed: u64) -> Result<DatasetSplit> {
    if trips.is_empty() {
        return Err(ShopperError::Split("no trips to split".into()));
    }
    let cutoff = training_cutoff(trips).ok_or_else(|| {
        let weeks: HashSet<u32> = trips.iter().map(|t| t.abs_week).collect();
        ShopperError::Split(format!(
            "{} distinct weeks; need more than {TEST_WINDOW_WEEKS}",
            weeks.len()
        ))
    })?;
    let (early, test): (Vec<Trip>, Vec<Trip>) = trips.iter().cloned().partition(|t| t.abs_week <= cutoff);
    let (train, validation) = holdout_validation(&early, seed);
    Ok(DatasetSplit {
        train,
        validation,
        test,
    })
}

/// Seeded 5% validation holdout, returned as `(train, validation)` with
/// input order preserved.
pub fn holdout_validation(trips: &[Trip], seed: u64) -> (Vec<Trip>, Vec<Trip>) {
    let n_val = (trips.len() as f64 * VALIDATION_FRACTION).round() as usize;
    let mut order: Vec<usize> = (0..trips.len()).collect();
    order.shuffle(&mut stream_rng(seed, "validation-split"));
    let mut is_val = vec![false; trips.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (trip, val) in trips.iter().zip(is_val) {
        if val {
            validation.push(trip.clone());
        } else {
            train.push(trip.clone());
        }
    }
    (train, validation)
}

/// A purchased item of a held-out trip, addressed by position in a trip list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HeldoutPair {
    pub trip: usize,
    pub item: usize,
}

/// Every purchased (non-checkout) item of every trip.
pub fn all_pairs(trips: &[Trip]) -> Vec<HeldoutPair> {
    trips
        .iter()
        .enumerate()
        .flat_map(|(t, trip)| {
            trip.purchased()
                .iter()
                .map(move |&item| HeldoutPair { trip: t, item })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SkewedSet {
    pub threshold: f64,
    pub pairs: Vec<HeldoutPair>,
}

/// Test purchases whose price lies outside `±threshold` of the item's
/// per-month mean, one set per threshold. Pairs index `split.test`.
pub fn build_skewed_test_sets(
    split: &DatasetSplit,
    catalog: &Catalog,
    thresholds: &[f64],
) -> Result<Vec<SkewedSet>> {
    if let Some(bad) = thresholds.iter().find(|x| !(**x > 0.0)) {
        return Err(ShopperError::domain(format!(
            "skew threshold must be positive, got {bad}"
        )));
    }
    let deviations: Vec<(HeldoutPair, f64)> = all_pairs(&split.test)
        .into_iter()
        .filter_map(|pair| {
            let trip = &split.test[pair.trip];
            let price = trip.price(pair.item)?;
            let mean = catalog.month_mean_price(trip.abs_week, pair.item)?;
            Some((pair, (price / mean - 1.0).abs()))
        })
        .collect();
    Ok(thresholds
        .iter()
        .map(|&threshold| SkewedSet {
            threshold,
            pairs: deviations
                .iter()
                .filter(|(_, d)| *d > threshold)
                .map(|(p, _)| *p)
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn smallest_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.csv", "trip_id,user_id,abs_week,item_id\n1,u0,1,A\n1,u0,1,B\n");
        let p = write(dir.path(), "p.csv", "abs_week,item_id,price\n1,A,2.0\n1,B,4.0\n");
        let (cat, trips) = load_dataset(&t, &p).unwrap();
        assert_eq!(cat.n_items(), 3);
        assert_eq!(cat.item_id(cat.checkout()), CHECKOUT_ID);
        assert_eq!(trips.len(), 1);
        let a = cat.item_index("A").unwrap();
        let b = cat.item_index("B").unwrap();
        assert_eq!(trips[0].items, vec![a, b, cat.checkout()]);
        assert_eq!(trips[0].week, 1);
    }

    #[test]
    fn missing_price_names_trip_and_item() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.csv", "trip_id,user_id,abs_week,item_id\n1,u0,1,A\n1,u0,1,B\n");
        let p = write(dir.path(), "p.csv", "abs_week,item_id,price\n1,A,2.0\n2,B,4.0\n");
        match load_dataset(&t, &p) {
            Err(ShopperError::MissingPrice { trip_id, item, .. }) => {
                assert_eq!(trip_id, 1);
                assert_eq!(item, "B");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mean_price_is_trip_average() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.csv", "trip_id,user_id,abs_week,item_id\n1,u0,1,A\n2,u0,2,A\n");
        let p = write(dir.path(), "p.csv", "abs_week,item_id,price\n1,A,1.0\n2,A,3.0\n");
        let (cat, _) = load_dataset(&t, &p).unwrap();
        assert_eq!(cat.mean_price(cat.item_index("A").unwrap()), Some(2.0));
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.csv", "trip_id,user_id,abs_week,item_id\n1,u0,1,A\nx,u0,1,B\n");
        let p = write(dir.path(), "p.csv", "abs_week,item_id,price\n1,A,1.0\n");
        match load_dataset(&t, &p) {
            Err(ShopperError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.csv", "trip_id,user_id,abs_week,item_id\n");
        let p = write(dir.path(), "p.csv", "abs_week,item_id,price\n1,A,1.0\n");
        assert!(matches!(load_dataset(&t, &p), Err(ShopperError::EmptyDataset { .. })));
    }

    #[test]
    fn normalized_price_values() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.csv", "trip_id,user_id,abs_week,item_id\n1,u0,1,A\n2,u0,2,A\n");
        let p = write(dir.path(), "p.csv", "abs_week,item_id,price\n1,A,1.0\n2,A,3.0\n");
        let (mut cat, trips) = load_dataset(&t, &p).unwrap();
        let a = cat.item_index("A").unwrap();
        cat.set_mean_price(a, 1.0);
        assert_eq!(normalized_log_price(&cat, &trips[0], a).unwrap(), 0.0);
        cat.set_mean_price(a, 1.5);
        let v = normalized_log_price(&cat, &trips[1], a).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);

        let mut zero = trips[0].clone();
        zero.prices = Arc::new(WeekPrices {
            abs_week: 1,
            prices: vec![0.0, f64::NAN],
            feasible: vec![0, 1],
        });
        assert!(matches!(
            normalized_log_price(&cat, &zero, a),
            Err(ShopperError::Domain(_))
        ));
    }

    fn synthetic(weeks: u32, per_week: usize) -> (Catalog, Vec<Trip>) {
        let mut cat = Catalog::new(vec!["A".into(), "B".into()], vec!["u".into()]).unwrap();
        let mut trips = Vec::new();
        let mut id = 0;
        for w in 1..=weeks {
            let prices = Arc::new(WeekPrices::new(w, vec![1.0 + (w % 3) as f64, 2.0, 0.0], 2));
            for _ in 0..per_week {
                trips.push(Trip {
                    trip_id: id,
                    user: 0,
                    week: calendar_week(w),
                    abs_week: w,
                    prices: Arc::clone(&prices),
                    items: vec![0, 1, 2],
                });
                id += 1;
            }
        }
        set_reference_prices(&mut cat, &trips);
        (cat, trips)
    }

    #[test]
    fn split_follows_protocol() {
        let (_, trips) = synthetic(97, 3);
        let s = split_dataset(&trips, 5).unwrap();
        assert!(s.test.iter().all(|t| t.abs_week > 89));
        assert_eq!(s.test.len(), 8 * 3);
        assert!(s.train.iter().chain(&s.validation).all(|t| t.abs_week <= 89));
        assert_eq!(s.validation.len(), (89.0 * 3.0 * 0.05f64).round() as usize);
        let again = split_dataset(&trips, 5).unwrap();
        assert_eq!(s.validation, again.validation);
        assert_eq!(s.train, again.train);

        let (_, short) = synthetic(3, 2);
        assert!(matches!(split_dataset(&short, 1), Err(ShopperError::Split(_))));
    }

    #[test]
    fn skew_sets_select_deviating_prices() {
        let mut cat = Catalog::new(vec!["A".into()], vec!["u".into()]).unwrap();
        let flat = Arc::new(WeekPrices::new(1, vec![1.0, 0.0], 1));
        let up = Arc::new(WeekPrices::new(2, vec![1.1, 0.0], 1));
        let trip = |w: u32, p: &Arc<WeekPrices>| Trip {
            trip_id: w as u64,
            user: 0,
            week: w,
            abs_week: w,
            prices: Arc::clone(p),
            items: vec![0, 1],
        };
        // Month 0 holds one trip at 1.0 and one at 1.1: month mean 1.05.
        let trips = vec![trip(1, &flat), trip(2, &up)];
        cat.set_month_means_from(&trips);
        let split = DatasetSplit {
            test: trips,
            ..Default::default()
        };
        let sets = build_skewed_test_sets(&split, &cat, &[0.025, 0.05, 0.15]).unwrap();
        // |1.1/1.05 - 1| = 0.0476 and |1.0/1.05 - 1| = 0.0476.
        assert_eq!(sets[0].pairs.len(), 2);
        assert_eq!(sets[1].pairs.len(), 0);
        assert!(build_skewed_test_sets(&split, &cat, &[0.0]).is_err());
    }

    #[test]
    fn skew_sets_exclude_prices_at_their_mean() {
        let (cat, trips) = synthetic(20, 1);
        let mut flat_cat = cat.clone();
        flat_cat.set_month_means_from(&trips);
        let split = split_dataset(&trips, 0).unwrap();
        let b = flat_cat.item_index("B").unwrap();
        let sets = build_skewed_test_sets(&split, &flat_cat, &[0.025]).unwrap();
        assert!(sets[0].pairs.iter().all(|p| p.item != b));
    }
}
