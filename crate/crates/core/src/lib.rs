//! Core algorithms for building a domain-specific subject-heading vocabulary
//! out of a crowd-sourced category graph, and for evaluating vocabularies as
//! keyphrase extractors.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, parses dump files or runs in parallel lives in the `vocabforge`
//! companion crate.
//!
//! The pipeline, in order:
//!
//! 1. [`graph::bfs_subtree`] seeds a breadth-first extraction of the category graph.
//! 2. [`prune`] removes irrelevant branches: manual annotations, community
//!    filtering against reference vocabularies, and pattern rules.
//! 3. [`classify`] trains a relevance classifier on graph and text features and
//!    prunes predicted-irrelevant categories.
//! 4. [`vocab`] attaches pages and redirects and splits core from ancillary terms.
//! 5. [`keyphrase`] compiles a vocabulary into a matcher and scores it against
//!    keyphrase-annotated abstracts.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod classify;
pub mod error;
pub mod graph;
pub mod keyphrase;
pub(crate) mod math;
pub mod prune;
pub mod title;
pub mod vocab;

pub use error::{Error, Result};
pub use graph::{CategoryGraph, CategoryId, GraphBuilder, PageId, PruneMode, StageTag, Subtree};
pub use title::Title;
