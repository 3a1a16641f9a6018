pub mod analysis;
pub mod dartboard;
pub mod error;
pub mod harness;
pub mod martingale;
pub mod packed;
pub mod sketches;

pub use error::{Error, Result};
