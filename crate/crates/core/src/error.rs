use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ShopperError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ShopperError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: no data rows")]
    EmptyDataset { path: PathBuf },

    #[error("trip {trip_id}: purchased item `{item}` has no price in week {abs_week}")]
    MissingPrice {
        trip_id: u64,
        item: String,
        abs_week: u32,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("basket has {size} items, above the exact-enumeration cap of {cap}; use the variational bound instead")]
    BasketTooLarge { size: usize, cap: usize },

    #[error("optimization diverged at iteration {iteration}: objective = {value}")]
    Diverged { iteration: usize, value: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("catalog mismatch: expected {expected}, found {found}")]
    CatalogMismatch { expected: String, found: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ShopperError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        ShopperError::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ShopperError::Io {
            path: path.into(),
            source,
        }
    }
}
