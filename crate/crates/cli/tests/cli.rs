use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

const SMALL: &str = r#"
[model]
k_items = 4
k_price = 2
think_ahead = true

[optimizer]
max_iterations = 400
check_every = 100

[simulate]
n_customers_per_segment = 5
n_trips_per_customer = 100
n_test_trips_per_customer = 10
"#;

fn shopper(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shopper")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A simulated dataset and a checkpoint fitted on it, shared by the tests.
struct Fitted {
    _dir: TempDir,
    config: PathBuf,
    data: PathBuf,
    checkpoint: PathBuf,
    fit_out: PathBuf,
}

fn fitted() -> &'static Fitted {
    static FITTED: OnceLock<Fitted> = OnceLock::new();
    FITTED.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("run.toml");
        std::fs::write(&config, SMALL).unwrap();
        let data = dir.path().join("data");
        let out = shopper(&["simulate", "--config", s(&config), "--out", s(&data)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let checkpoint = dir.path().join("model").join("toy.ckpt");
        let out = shopper(&["fit", "--config", s(&config), "--data-dir", s(&data), "--checkpoint", s(&checkpoint)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("final validation log-likelihood"));
        Fitted {
            fit_out: checkpoint.parent().unwrap().to_path_buf(),
            _dir: dir,
            config,
            data,
            checkpoint,
        }
    })
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn simulate_default_config_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = shopper(&["simulate", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["train_trips.csv", "train_prices.csv", "test_trips.csv", "test_prices.csv", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let config = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(config.path(), SMALL).unwrap();
    let dirs: Vec<TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, seed) in dirs.iter().zip(["7", "7", "8"]) {
        let out = shopper(&["simulate", "--config", s(config.path()), "--seed", seed, "--out", s(dir.path())]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for f in ["train_trips.csv", "train_prices.csv", "test_trips.csv", "test_prices.csv"] {
        let read = |d: &TempDir| std::fs::read(d.path().join(f)).unwrap();
        assert_eq!(read(&dirs[0]), read(&dirs[1]), "{f}");
    }
    assert_ne!(
        std::fs::read(dirs[0].path().join("train_trips.csv")).unwrap(),
        std::fs::read(dirs[2].path().join("train_trips.csv")).unwrap()
    );
}

#[test]
fn simulate_into_unwritable_location_is_an_input_error() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let target = file.path().join("sub");
    let out = shopper(&["simulate", "--out", s(&target)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bad_config_is_rejected() {
    let config = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(config.path(), "[model]\nk_itemz = 3\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = shopper(&["simulate", "--config", s(config.path()), "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("k_itemz"), "{}", stderr(&out));
}

#[test]
fn fit_writes_checkpoint_trace_and_manifest() {
    let f = fitted();
    assert!(f.checkpoint.is_file());
    let trace = read_csv(&f.fit_out.join("trace.csv"));
    assert_eq!(trace.len(), 400);
    assert_eq!(trace.iter().filter(|r| !r[2].is_empty()).count(), 4);
    let manifest = std::fs::read_to_string(f.fit_out.join("fit_manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"fit\""));
}

#[test]
fn max_iterations_limits_the_trace() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("short.ckpt");
    let out = shopper(&[
        "fit",
        "--config",
        s(&f.config),
        "--data-dir",
        s(&f.data),
        "--checkpoint",
        s(&ckpt),
        "--max-iterations",
        "10",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(read_csv(&dir.path().join("trace.csv")).len() <= 10);
}

#[test]
fn fit_names_a_missing_prices_file() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(f.data.join("train_trips.csv"), dir.path().join("train_trips.csv")).unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let out = shopper(&["fit", "--data-dir", s(dir.path()), "--checkpoint", s(&ckpt)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("train_prices.csv"), "{}", stderr(&out));
    assert!(!ckpt.exists());
}

#[test]
fn divergence_exits_with_optimization_error() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("wild.toml");
    std::fs::write(&config, "[optimizer]\nstep_size = 1e300\nmax_iterations = 50\n").unwrap();
    let out = shopper(&[
        "fit",
        "--config",
        s(&config),
        "--data-dir",
        s(&f.data),
        "--checkpoint",
        s(&dir.path().join("m.ckpt")),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("iteration"), "{}", stderr(&out));
}

#[test]
fn eval_reports_all_and_skew_columns() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "eval",
        "--checkpoint",
        s(&f.checkpoint),
        "--data-dir",
        s(&f.data),
        "--skew",
        "2.5,5,15",
        "--out",
        s(dir.path()),
    ];
    let out = shopper(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = read_csv(&dir.path().join("eval_item.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][1], "All");
    let first = std::fs::read(dir.path().join("eval_item.csv")).unwrap();
    assert_eq!(code(&shopper(&args)), 0);
    assert_eq!(std::fs::read(dir.path().join("eval_item.csv")).unwrap(), first);
}

#[test]
fn eval_flags_empty_skew_sets() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let out = shopper(&[
        "eval",
        "--checkpoint",
        s(&f.checkpoint),
        "--data-dir",
        s(&f.data),
        "--skew",
        "1000",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = read_csv(&dir.path().join("eval_item.csv"));
    assert_eq!(rows[1][3], "NaN");
    assert_eq!(rows[1][5], "0");
    assert_eq!(rows[1][7], "true");
    assert!(String::from_utf8_lossy(&out.stdout).contains("NaN*"));
}

#[test]
fn eval_basket_modes() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    for mode in ["triplets", "basket"] {
        let out = shopper(&[
            "eval",
            "--checkpoint",
            s(&f.checkpoint),
            "--data-dir",
            s(&f.data),
            "--mode",
            mode,
            "--out",
            s(dir.path()),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let rows = read_csv(&dir.path().join(format!("eval_{mode}.csv")));
        assert!(rows[0][3].parse::<f64>().unwrap() < 0.0);
    }
    let out = shopper(&[
        "eval",
        "--checkpoint",
        s(&f.checkpoint),
        "--data-dir",
        s(&f.data),
        "--mode",
        "basket",
        "--skew",
        "5",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_against_a_different_catalog_is_incompatible() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    for name in ["train_trips.csv", "train_prices.csv", "test_trips.csv"] {
        std::fs::copy(f.data.join(name), dir.path().join(name)).unwrap();
    }
    let mut prices = std::fs::read_to_string(f.data.join("test_prices.csv")).unwrap();
    prices.push_str("3001,mystery_item,1.5\n");
    std::fs::write(dir.path().join("test_prices.csv"), prices).unwrap();
    let out = shopper(&["eval", "--checkpoint", s(&f.checkpoint), "--data-dir", s(dir.path()), "--out", s(dir.path())]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn corrupt_checkpoint_is_incompatible() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"SHOPCKPT\x09\x00\x00\x00").unwrap();
    let out = shopper(&["eval", "--checkpoint", s(&bad), "--data-dir", s(&f.data), "--out", s(dir.path())]);
    assert_eq!(code(&out), 4);
}

#[test]
fn metrics_finds_the_hot_dog_pair() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let out = shopper(&["metrics", "--checkpoint", s(&f.checkpoint), "--items", "hot_dogs", "--top", "3", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = read_csv(&dir.path().join("metrics.csv"));
    let complements: Vec<&str> = rows.iter().filter(|r| r[1] == "complement").map(|r| r[3].as_str()).collect();
    assert_eq!(complements.len(), 3);
    assert!(complements.contains(&"hot_dog_buns"));
}

#[test]
fn metrics_rejects_checkout_and_unknown_items() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let out = shopper(&["metrics", "--checkpoint", s(&f.checkpoint), "--items", "checkout", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    let out = shopper(&["metrics", "--checkpoint", s(&f.checkpoint), "--items", "hotdogs", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("hot_dogs"), "{}", stderr(&out));
}

#[test]
fn metrics_all_pairs_top() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let out = shopper(&["metrics", "--checkpoint", s(&f.checkpoint), "--all-pairs-top", "3", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = read_csv(&dir.path().join("metrics.csv"));
    for kind in ["complement", "exchangeable"] {
        let of_kind: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == kind).collect();
        assert_eq!(of_kind.len(), 8 * 3);
        let mut queries: Vec<&str> = of_kind.iter().map(|r| r[0].as_str()).collect();
        queries.dedup();
        assert_eq!(queries.len(), 8);
    }
}

#[test]
fn export_writes_posterior_tables() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let out = shopper(&["export", "--checkpoint", s(&f.checkpoint), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let items = read_csv(&dir.path().join("items.csv"));
    assert_eq!(items.len(), 9);
    assert_eq!(items[0][0], "coffee");
    let users = read_csv(&dir.path().join("users.csv"));
    assert_eq!(users.len(), 10);
    assert!(dir.path().join("export_manifest.json").is_file());
}
