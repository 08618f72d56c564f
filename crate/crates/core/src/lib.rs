pub mod analysis;
pub mod attention;
pub mod autodiff;
pub mod cli;
pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod parallel;
pub mod recipe;
pub mod synthetic;
pub mod train;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
