pub mod cli;
pub mod data;
pub mod error;
pub mod forest;
pub mod glm;
pub mod importance;
pub mod metrics;
pub mod pcs;
pub mod sim;
pub mod stump;

pub use error::{Error, Result};
