use std::path::PathBuf;

use shopper::checkpoint::Checkpoint;
use shopper::fit::fit;

use super::{execution, load_config, out_dir, resolve};
use crate::dataset::Layout;
use crate::error::CliError;
use crate::output::{csv_writer, finish_csv, num, prepare_out_dir, write_manifest};
use crate::Common;

pub fn run(
    common: &Common,
    data_dir: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
    max_iterations: Option<usize>,
) -> Result<(), CliError> {
    let mut config = load_config(common)?;
    if let Some(n) = max_iterations {
        config.optimizer.max_iterations = n;
    }
    config.optimizer.validate()?;
    let layout = Layout::detect(&resolve(data_dir, &config.paths.data_dir, "data-dir")?)?;
    let checkpoint_path = resolve(checkpoint, &config.paths.checkpoint, "checkpoint")?;
    let parent = checkpoint_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| std::path::Path::new("."))
        .to_path_buf();
    prepare_out_dir(&parent)?;
    let dir = out_dir(out, &config, &parent);
    prepare_out_dir(&dir)?;
    let exec = execution(common)?;

    let seed = config.optimizer.rng_seed;
    let (catalog, train, validation) = layout.load_training(seed)?;
    config.model.validate(catalog.n_items())?;
    println!(
        "fitting on {} trips ({} validation), {} items, {} users",
        train.len(),
        validation.len(),
        catalog.n_items() - 1,
        catalog.n_users()
    );
    let result = fit(&catalog, &train, &validation, &config.model, &config.optimizer, exec)?;

    let ckpt = Checkpoint {
        config: config.model.clone(),
        catalog,
        state: result.state,
    };
    ckpt.save(&checkpoint_path)?;
    let trace_path = dir.join("trace.csv");
    let mut w = csv_writer(&trace_path)?;
    let io = |e| crate::error::io_error(&trace_path, e);
    w.write_record(["iteration", "objective_estimate", "validation_loglik", "elapsed_seconds"])
        .map_err(io)?;
    for row in &result.trace {
        w.write_record([
            row.iteration.to_string(),
            num(row.objective_estimate),
            row.validation_loglik.map_or_else(String::new, num),
            format!("{:.3}", row.elapsed_seconds),
        ])
        .map_err(io)?;
    }
    finish_csv(w, &trace_path)?;
    write_manifest(
        &dir.join("fit_manifest.json"),
        "fit",
        seed,
        &config,
        &[checkpoint_path.clone(), trace_path],
    )?;

    let last_validation = result.trace.iter().rev().find_map(|r| r.validation_loglik);
    println!(
        "{} iterations ({}), checkpoint {}",
        result.iterations,
        if result.converged { "converged" } else { "iteration limit" },
        checkpoint_path.display()
    );
    match last_validation {
        Some(v) => println!("final validation log-likelihood per item: {v:.4}"),
        None => println!("final validation log-likelihood per item: n/a (no validation items)"),
    }
    Ok(())
}
