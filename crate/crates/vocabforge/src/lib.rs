//! Filesystem, dump parsing and pipeline orchestration around
//! [`vocabforge_core`].

pub mod config;
pub mod corpus;
pub mod error;
pub mod fixture;
pub mod formats;
pub mod ingest;
pub mod model_io;
pub mod pipeline;
pub mod review;

pub use error::{AppError, Result};
