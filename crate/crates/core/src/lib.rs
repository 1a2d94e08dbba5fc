pub mod analysis;
pub mod cli;
pub mod contiguity;
pub mod diffusion;
pub mod empirical;
pub mod error;
pub mod fit;
pub mod ga;
pub mod graph;
pub mod io;
pub mod multiplier;
pub mod synthetic;

pub use error::{Error, Result};
