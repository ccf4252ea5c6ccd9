//! Forecast-then-optimise decision support for a thermal-hydrolysis
//! biosolids plant.
//!
//! The crate is organised bottom-up:
//!
//! * [`twin`] holds the plant dynamics and the synthetic energy/quality
//!   ground truth that stands in for plant measurements.
//! * [`scenario`] generates seeded weather and inflow realisations.
//! * [`forecast`] predicts upstream inflow.
//! * [`schedule`] solves the reactor on/off problem exactly.
//! * [`learner`] fits multi-output regressors (boosted trees, kNN).
//! * [`decision`] enumerates operating scenarios, picks the cheapest
//!   quality-feasible one and assembles operator recommendations.
//! * [`datastore`] parses historian/weather CSVs and persists documents.

pub mod datastore;
pub mod decision;
pub mod error;
pub mod forecast;
pub mod learner;
pub mod scenario;
pub mod schedule;
pub mod twin;

pub use error::{Error, Result};
