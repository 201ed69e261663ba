pub mod error;
pub mod experiment;
pub mod gcn;
pub mod graph_io;
pub mod metrics;
pub mod models;
pub mod partition;
pub mod plan;
pub mod runtime;
pub mod sparse;

pub use error::{Error, Result};
