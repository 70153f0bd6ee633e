//! Entity coreference for video situation recognition: visual clustering of
//! box proposals, attention-based grounding of entity groups, and the
//! evaluation metric suite.

pub mod assign;
pub mod cli;
pub mod coref;
pub mod error;
pub mod finch;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synth;

pub use error::{MecError, Result};
