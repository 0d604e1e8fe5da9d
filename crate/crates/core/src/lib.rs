//! Probabilistic post-processing of multi-model deterministic temperature
//! forecasts.
//!
//! Forecast errors are learnt with a quantile regression forest keyed on lead
//! time and model, each forecast becomes a distribution of outcomes, the
//! per-model distributions for an hour are combined by quantile averaging,
//! and the result is turned into a full CDF that can be sampled and scored.

pub mod cli;
pub mod combine;
pub mod dist;
pub mod error_model;
pub mod ingest;
pub mod kv;
pub mod pipeline;
pub mod qrf;
pub mod scoring;
pub mod time;
