use std::path::PathBuf;

use shopper::data::Catalog;
use shopper::eval::{top_complements, top_exchangeable, PosteriorSummary};

use super::{load_config, open_checkpoint, out_dir, resolve};
use crate::error::CliError;
use crate::output::{csv_writer, finish_csv, num, prepare_out_dir, write_manifest};
use crate::Common;

/// Catalog ids within edit distance 3 of `query`, or containing it.
fn near_matches(catalog: &Catalog, query: &str) -> Vec<String> {
    let q = query.to_lowercase();
    let mut scored: Vec<(usize, &String)> = catalog.items()[..catalog.checkout()]
        .iter()
        .filter_map(|id| {
            let lower = id.to_lowercase();
            let d = strsim::levenshtein(&q, &lower);
            (d <= 3 || lower.contains(&q) || q.contains(&lower)).then_some((d, id))
        })
        .collect();
    scored.sort();
    scored.into_iter().take(5).map(|(_, id)| id.clone()).collect()
}

fn lookup(catalog: &Catalog, id: &str) -> Result<usize, CliError> {
    match catalog.item_index(id) {
        Some(c) if c != catalog.checkout() => Ok(c),
        Some(_) => Err(CliError::Input(format!("`{id}` is the checkout item and has no metrics"))),
        None => {
            let near = near_matches(catalog, id);
            let hint = if near.is_empty() {
                String::new()
            } else {
                format!("; did you mean {}?", near.join(", "))
            };
            Err(CliError::Input(format!("unknown item `{id}`{hint}")))
        }
    }
}

pub fn run(
    common: &Common,
    checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
    items: &[String],
    all_pairs_top: Option<usize>,
    top: usize,
) -> Result<(), CliError> {
    let config = load_config(common)?;
    let checkpoint_path = resolve(checkpoint, &config.paths.checkpoint, "checkpoint")?;
    let dir = out_dir(out, &config, std::path::Path::new("."));
    prepare_out_dir(&dir)?;
    let ckpt = open_checkpoint(&checkpoint_path)?;
    let catalog = &ckpt.catalog;
    let (queries, top_n) = match all_pairs_top {
        Some(n) => ((0..catalog.checkout()).collect::<Vec<_>>(), n),
        None => {
            if items.is_empty() {
                return Err(CliError::Input("give --items or --all-pairs-top".into()));
            }
            (items.iter().map(|id| lookup(catalog, id)).collect::<Result<Vec<_>, _>>()?, top)
        }
    };
    if top_n == 0 {
        return Err(CliError::Input("number of partners must be at least 1".into()));
    }
    let summary = PosteriorSummary::from_variational(&ckpt.state);

    let table_path = dir.join("metrics.csv");
    let mut w = csv_writer(&table_path)?;
    let io = |e| crate::error::io_error(&table_path, e);
    w.write_record(["query", "kind", "rank", "partner", "score"]).map_err(io)?;
    for &c in &queries {
        let complements = top_complements(&summary, catalog, c, top_n)?;
        let exchangeable = top_exchangeable(&summary, &ckpt.config, catalog, c, top_n)?;
        println!("{}", catalog.item_id(c));
        println!("  {:<32} {:<32}", "complements (C, descending)", "exchangeable (E, ascending)");
        for rank in 0..complements.len().max(exchangeable.len()) {
            let cell = |list: &[(usize, f64)]| {
                list.get(rank)
                    .map_or_else(String::new, |(k, s)| format!("{} {:.3}", catalog.item_id(*k), s))
            };
            println!("  {:<32} {:<32}", cell(&complements), cell(&exchangeable));
        }
        for (kind, list) in [("complement", &complements), ("exchangeable", &exchangeable)] {
            for (rank, (k, score)) in list.iter().enumerate() {
                w.write_record([
                    catalog.item_id(c).to_string(),
                    kind.to_string(),
                    (rank + 1).to_string(),
                    catalog.item_id(*k).to_string(),
                    num(*score),
                ])
                .map_err(io)?;
            }
        }
    }
    finish_csv(w, &table_path)?;
    write_manifest(
        &dir.join("metrics_manifest.json"),
        "metrics",
        config.optimizer.rng_seed,
        &config,
        &[table_path],
    )?;
    Ok(())
}
