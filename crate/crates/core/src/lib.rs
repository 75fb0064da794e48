//! Time-aware predictive modeling over relational data.
//!
//! The crate follows one workflow from raw tables to a deployable model:
//! organize data into an [`EntitySet`](entityset::EntitySet), search for
//! labeled training examples with a labeling function, synthesize
//! point-in-time-correct features, search models under a cost function,
//! and record everything in a provenance document that the deployment
//! runtime replays with the same operations.

pub mod deploy;
pub mod entityset;
pub mod error;
pub mod features;
pub mod json;
pub mod labels;
pub mod metadata;
pub mod model;
pub mod pipeline;
pub mod provenance;
pub mod time;

pub use error::{Error, Result};
