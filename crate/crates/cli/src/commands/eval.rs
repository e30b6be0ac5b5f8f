use std::path::PathBuf;

use shopper::data::{all_pairs, build_skewed_test_sets, DatasetSplit};
use shopper::eval::{heldout_basket_loglik, heldout_conditional_loglik, BasketMode, LoglikReport, PosteriorSummary};

use super::{execution, load_config, open_checkpoint, out_dir, resolve};
use crate::dataset::Layout;
use crate::error::CliError;
use crate::output::{csv_writer, finish_csv, num, prepare_out_dir, write_manifest};
use crate::{Common, EvalMode};

struct Column {
    label: String,
    threshold: Option<f64>,
    report: LoglikReport,
}

pub fn run(
    common: &Common,
    checkpoint: Option<PathBuf>,
    data_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    skew_percent: &[f64],
    mode: EvalMode,
) -> Result<(), CliError> {
    let config = load_config(common)?;
    if mode != EvalMode::Item && !skew_percent.is_empty() {
        return Err(CliError::Input("--skew applies to --mode item only".into()));
    }
    if let Some(bad) = skew_percent.iter().find(|x| !(**x > 0.0)) {
        return Err(CliError::Input(format!("skew thresholds must be positive, got {bad}")));
    }
    let checkpoint_path = resolve(checkpoint, &config.paths.checkpoint, "checkpoint")?;
    let layout = Layout::detect(&resolve(data_dir, &config.paths.data_dir, "data-dir")?)?;
    layout.require_test_files()?;
    let dir = out_dir(out, &config, std::path::Path::new("."));
    prepare_out_dir(&dir)?;
    let exec = execution(common)?;
    let seed = config.optimizer.rng_seed;

    let ckpt = open_checkpoint(&checkpoint_path)?;
    let (catalog, test) = layout.load_test(&ckpt.catalog, seed)?;
    let summary = PosteriorSummary::from_variational(&ckpt.state);
    let model = &ckpt.config;

    let mut columns = Vec::new();
    match mode {
        EvalMode::Item => {
            let report = heldout_conditional_loglik(&summary, model, &catalog, &test, &all_pairs(&test), seed, exec)?;
            columns.push(Column {
                label: "All".into(),
                threshold: None,
                report,
            });
            let split = DatasetSplit {
                test,
                ..Default::default()
            };
            let fractions: Vec<f64> = skew_percent.iter().map(|p| p / 100.0).collect();
            for (set, pct) in build_skewed_test_sets(&split, &catalog, &fractions)?
                .into_iter()
                .zip(skew_percent)
            {
                let report = heldout_conditional_loglik(&summary, model, &catalog, &split.test, &set.pairs, seed, exec)?;
                columns.push(Column {
                    label: format!("Price ±{pct}%"),
                    threshold: Some(set.threshold),
                    report,
                });
            }
        }
        EvalMode::Triplets | EvalMode::Basket => {
            let basket_mode = if mode == EvalMode::Triplets {
                BasketMode::Triplets
            } else {
                BasketMode::WholeBasket
            };
            let report = heldout_basket_loglik(&summary, model, &catalog, &test, basket_mode, seed, exec)?;
            columns.push(Column {
                label: "All".into(),
                threshold: None,
                report,
            });
        }
    }

    let mode_name = match mode {
        EvalMode::Item => "item",
        EvalMode::Triplets => "triplets",
        EvalMode::Basket => "basket",
    };
    print_table(mode_name, &columns);

    let table_path = dir.join(format!("eval_{mode_name}.csv"));
    let mut w = csv_writer(&table_path)?;
    let io = |e| crate::error::io_error(&table_path, e);
    w.write_record(["mode", "column", "threshold", "mean", "std", "count", "skipped", "empty"])
        .map_err(io)?;
    for c in &columns {
        w.write_record([
            mode_name.to_string(),
            c.label.clone(),
            c.threshold.map_or_else(String::new, |t| t.to_string()),
            num(c.report.mean),
            num(c.report.std),
            c.report.count.to_string(),
            c.report.skipped.to_string(),
            (c.report.count == 0).to_string(),
        ])
        .map_err(io)?;
    }
    finish_csv(w, &table_path)?;
    write_manifest(
        &dir.join(format!("eval_{mode_name}_manifest.json")),
        "eval",
        seed,
        &config,
        &[table_path],
    )?;
    Ok(())
}

fn print_table(mode: &str, columns: &[Column]) {
    let what = match mode {
        "item" => "per-item conditional log-likelihood",
        "triplets" => "per-item log-likelihood of item triplets",
        _ => "per-item log-likelihood of whole baskets",
    };
    println!("held-out {what}");
    let width = columns.iter().map(|c| c.label.chars().count()).max().unwrap_or(0).max(12) + 2;
    print!("{:<8}", "");
    for c in columns {
        print!("{:>width$}", c.label);
    }
    println!();
    let row = |name: &str, f: &dyn Fn(&LoglikReport) -> String| {
        print!("{name:<8}");
        for c in columns {
            print!("{:>width$}", f(&c.report));
        }
        println!();
    };
    row("mean", &|r| if r.count == 0 { "NaN*".into() } else { format!("{:.4}", r.mean) });
    row("std", &|r| if r.count == 0 { "NaN*".into() } else { format!("{:.4}", r.std) });
    row("count", &|r| r.count.to_string());
    if columns.iter().any(|c| c.report.skipped > 0) {
        row("skipped", &|r| r.skipped.to_string());
    }
    if columns.iter().any(|c| c.report.count == 0) {
        println!("* empty set: no held-out purchases in this column");
    }
}
