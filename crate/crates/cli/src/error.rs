use shopper::ShopperError;

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Optimization(String),
    Compatibility(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Optimization(_) => 3,
            CliError::Compatibility(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Optimization(m) | CliError::Compatibility(m) => m,
        }
    }
}

impl From<ShopperError> for CliError {
    fn from(e: ShopperError) -> Self {
        let message = e.to_string();
        match e {
            ShopperError::Diverged { .. } => CliError::Optimization(message),
            ShopperError::Checkpoint(_) | ShopperError::CatalogMismatch { .. } => CliError::Compatibility(message),
            _ => CliError::Input(message),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}
