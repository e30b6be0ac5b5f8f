//! Sequential market-basket choice model with stochastic variational
//! inference.

pub mod block;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod fit;
pub mod model;
pub mod objective;
pub mod reparam;
pub mod rng;
pub mod toy;
pub mod variational;

pub use error::{Result, ShopperError};
