use std::path::{Path, PathBuf};

use shopper::block::Block;
use shopper::model::Latent;

use super::{load_config, open_checkpoint, out_dir, resolve};
use crate::error::CliError;
use crate::output::{csv_writer, finish_csv, num, prepare_out_dir, write_manifest};
use crate::Common;

fn header(name: &str, cols: usize) -> impl Iterator<Item = String> + '_ {
    (0..cols).map(move |k| format!("{name}_{k}"))
}

/// One row per key, columns taken from `blocks` at the row chosen by `row_of`.
fn write_table(
    path: &Path,
    key: &str,
    keys: &[String],
    blocks: &[(&str, &Block)],
    row_of: impl Fn(&str, usize) -> Option<usize>,
) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let io = |e| crate::error::io_error(path, e);
    let mut head = vec![key.to_string()];
    for (name, block) in blocks {
        head.extend(header(name, block.cols()));
    }
    w.write_record(&head).map_err(io)?;
    for (i, id) in keys.iter().enumerate() {
        let mut rec = vec![id.clone()];
        for (name, block) in blocks {
            match row_of(name, i) {
                Some(r) => rec.extend(block.row(r).iter().map(|&x| num(x))),
                None => rec.extend(std::iter::repeat_n(String::new(), block.cols())),
            }
        }
        w.write_record(&rec).map_err(io)?;
    }
    finish_csv(w, path)
}

pub fn run(common: &Common, checkpoint: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), CliError> {
    let config = load_config(common)?;
    let checkpoint_path = resolve(checkpoint, &config.paths.checkpoint, "checkpoint")?;
    let dir = out_dir(out, &config, Path::new("."));
    prepare_out_dir(&dir)?;
    let ckpt = open_checkpoint(&checkpoint_path)?;
    let means = ckpt.state.means();
    let catalog = &ckpt.catalog;
    let model = &ckpt.config;

    let item_blocks: Vec<(&str, &Block)> = [Latent::Lambda, Latent::Alpha, Latent::Rho, Latent::Beta, Latent::Mu]
        .into_iter()
        .map(|l| (l.name(), means.block(l)))
        .filter(|(_, b)| b.rows() > 0)
        .collect();
    let items_path = dir.join("items.csv");
    write_table(&items_path, "item_id", catalog.items(), &item_blocks, |name, c| {
        if name == Latent::Beta.name() || name == Latent::Mu.name() {
            Some(model.group_row(c))
        } else {
            Some(c)
        }
    })?;

    let mut files = vec![items_path];
    let user_blocks: Vec<(&str, &Block)> = [Latent::Theta, Latent::Gamma]
        .into_iter()
        .map(|l| (l.name(), means.block(l)))
        .filter(|(_, b)| b.rows() > 0)
        .collect();
    if !user_blocks.is_empty() {
        let users_path = dir.join("users.csv");
        write_table(&users_path, "user_id", catalog.users(), &user_blocks, |_, u| Some(u))?;
        files.push(users_path);
    }
    let delta = means.block(Latent::Delta);
    if delta.rows() > 0 {
        let weeks: Vec<String> = (1..=delta.rows()).map(|w| w.to_string()).collect();
        let weeks_path = dir.join("weeks.csv");
        write_table(&weeks_path, "week", &weeks, &[(Latent::Delta.name(), delta)], |_, w| Some(w))?;
        files.push(weeks_path);
    }
    write_manifest(
        &dir.join("export_manifest.json"),
        "export",
        config.optimizer.rng_seed,
        &config,
        &files,
    )?;
    println!("exported posterior means for {} items to {}", catalog.checkout(), dir.display());
    Ok(())
}
