pub mod error;
pub mod graph;

pub use error::{Error, Result};
pub mod rules;
pub mod collision;
pub mod vehicle;
pub mod field;
pub mod planner;
pub mod sim;
