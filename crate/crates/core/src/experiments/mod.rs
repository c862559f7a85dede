//! Scenario configuration, the run pipeline, sweeps and the figure recipes.

pub mod config;
pub mod pipeline;
pub mod reproduce;
pub mod schema;
