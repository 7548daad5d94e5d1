pub mod dsp;
pub mod eval;
pub mod error;
pub mod flow;
pub mod infill;
pub mod synthdata;
pub mod formats;
pub mod world;

#[cfg(test)]
pub(crate) mod test_signals;

pub use error::{Error, Result};
