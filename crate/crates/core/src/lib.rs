mod csvio;
pub mod error;
pub mod event_study;
pub mod features;
pub mod ingest;
pub mod market_model;
pub mod report;
pub mod som;
pub mod synth;

pub use error::{Error, Result};
