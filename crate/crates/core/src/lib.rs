//! Hourly evacuation-demand forecasting for census tracts during wildfires:
//! trip inference from GPS pings, tract similarity graphs, a
//! graph-convolutional recurrent forecaster, a rolling evaluation harness
//! and a synthetic scenario generator.

pub mod error;
pub mod exec;
pub mod geo;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod synthetic;
pub mod time;
pub mod trip;

pub use error::{Error, Result};
pub use exec::Exec;
