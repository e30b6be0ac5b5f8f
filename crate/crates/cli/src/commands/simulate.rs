use std::path::PathBuf;

use shopper::data::write_dataset;
use shopper::toy::{generate_intervention_test, generate_world};

use super::{load_config, resolve};
use crate::dataset::{TEST_PRICES, TEST_TRIPS, TRAIN_PRICES, TRAIN_TRIPS};
use crate::error::CliError;
use crate::output::{prepare_out_dir, write_manifest};
use crate::Common;

pub fn run(common: &Common, out: Option<PathBuf>) -> Result<(), CliError> {
    let config = load_config(common)?;
    let dir = resolve(out, &config.paths.out, "out")?;
    config.simulate.validate()?;
    prepare_out_dir(&dir)?;
    let (catalog, train) = generate_world(&config.simulate)?;
    let test = generate_intervention_test(&config.simulate, &catalog)?;
    let files: Vec<PathBuf> = [TRAIN_TRIPS, TRAIN_PRICES, TEST_TRIPS, TEST_PRICES]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_dataset(&catalog, &train, &files[0], &files[1])?;
    write_dataset(&catalog, &test, &files[2], &files[3])?;
    let manifest = dir.join("manifest.json");
    write_manifest(&manifest, "simulate", config.simulate.rng_seed, &config, &files)?;
    println!(
        "wrote {} training and {} test trips for {} customers to {}",
        train.len(),
        test.len(),
        catalog.n_users(),
        dir.display()
    );
    Ok(())
}
