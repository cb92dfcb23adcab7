//! Violence classification and character-role analysis for movie-script
//! dialogue.
//!
//! The crate is organized as a pipeline:
//!
//! - [`script`] parses screenplays and their sidecar files,
//! - [`features`] turns utterances into numeric features,
//! - [`neural`] holds the GRU/attention classifier and its training kernels,
//! - [`pipeline`] builds context windows, trains with cross-validation and
//!   produces per-utterance violence posteriors,
//! - [`roles`] extracts subject-verb-object triplets from violent utterances
//!   and assigns victim, perpetrator and narrator roles,
//! - [`stats`] runs the hypothesis tests over those roles.
//!
//! The guide in `book/` walks through each stage with runnable examples.

pub mod error;
pub mod features;
pub mod neural;
pub mod pipeline;
pub mod roles;
pub mod script;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/screenplays.md")]
    mod screenplays {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/classifier.md")]
    mod classifier {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/roles.md")]
    mod roles {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
