//! Data directory layouts.
//!
//! A directory either holds a pre-split dataset (`train_trips.csv`,
//! `train_prices.csv`, `test_trips.csv`, `test_prices.csv`, as written by
//! `simulate`) or a single dataset (`trips.csv`, `prices.csv`) that is split
//! chronologically.

use std::path::{Path, PathBuf};

use shopper::data::{holdout_validation, load_dataset, load_trips_with_catalog, split_dataset, Catalog, Trip};

use crate::error::CliError;

pub const TRAIN_TRIPS: &str = "train_trips.csv";
pub const TRAIN_PRICES: &str = "train_prices.csv";
pub const TEST_TRIPS: &str = "test_trips.csv";
pub const TEST_PRICES: &str = "test_prices.csv";
pub const TRIPS: &str = "trips.csv";
pub const PRICES: &str = "prices.csv";

#[derive(Clone, Debug, PartialEq)]
pub enum Layout {
    PreSplit { dir: PathBuf },
    Single { dir: PathBuf },
}

fn require(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Input(format!("missing data file {}", path.display())))
    }
}

impl Layout {
    pub fn detect(dir: &Path) -> Result<Self, CliError> {
        if !dir.is_dir() {
            return Err(CliError::Input(format!("data directory {} does not exist", dir.display())));
        }
        let layout = if dir.join(TRAIN_TRIPS).is_file() {
            Layout::PreSplit { dir: dir.to_path_buf() }
        } else if dir.join(TRIPS).is_file() {
            Layout::Single { dir: dir.to_path_buf() }
        } else {
            return Err(CliError::Input(format!(
                "{} holds neither {TRAIN_TRIPS} nor {TRIPS}",
                dir.display()
            )));
        };
        layout.training_files()?;
        Ok(layout)
    }

    fn training_files(&self) -> Result<(PathBuf, PathBuf), CliError> {
        match self {
            Layout::PreSplit { dir } => Ok((require(dir, TRAIN_TRIPS)?, require(dir, TRAIN_PRICES)?)),
            Layout::Single { dir } => Ok((require(dir, TRIPS)?, require(dir, PRICES)?)),
        }
    }

    /// Check that evaluation data is present.
    pub fn require_test_files(&self) -> Result<(), CliError> {
        if let Layout::PreSplit { dir } = self {
            require(dir, TEST_TRIPS)?;
            require(dir, TEST_PRICES)?;
        }
        Ok(())
    }

    /// Catalog plus training and validation trips.
    pub fn load_training(&self, seed: u64) -> Result<(Catalog, Vec<Trip>, Vec<Trip>), CliError> {
        let (trips_path, prices_path) = self.training_files()?;
        let (mut catalog, trips) = load_dataset(&trips_path, &prices_path)?;
        match self {
            Layout::PreSplit { .. } => {
                // Every trip here is training data.
                catalog.set_mean_prices_from(trips.iter());
                let (train, validation) = holdout_validation(&trips, seed);
                Ok((catalog, train, validation))
            }
            Layout::Single { .. } => {
                let split = split_dataset(&trips, seed)?;
                Ok((catalog, split.train, split.validation))
            }
        }
    }

    /// Test trips indexed against `catalog`, with month means taken over the
    /// whole directory.
    pub fn load_test(&self, catalog: &Catalog, seed: u64) -> Result<(Catalog, Vec<Trip>), CliError> {
        match self {
            Layout::PreSplit { dir } => {
                let (mut out, test) =
                    load_trips_with_catalog(catalog, &require(dir, TEST_TRIPS)?, &require(dir, TEST_PRICES)?)?;
                let (_, train) = load_trips_with_catalog(catalog, &require(dir, TRAIN_TRIPS)?, &require(dir, TRAIN_PRICES)?)?;
                let all: Vec<Trip> = train.into_iter().chain(test.iter().cloned()).collect();
                out.set_month_means_from(&all);
                Ok((out, test))
            }
            Layout::Single { dir } => {
                let (out, trips) = load_trips_with_catalog(catalog, &require(dir, TRIPS)?, &require(dir, PRICES)?)?;
                Ok((out, split_dataset(&trips, seed)?.test))
            }
        }
    }
}
