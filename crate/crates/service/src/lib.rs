//! Decision-support service for the hydrotwin plant model: HTTP+JSON
//! endpoints under `/api/v1`, a server-sent event stream, and the
//! `hydrotwin` command line.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod history;
pub mod pipeline;
pub mod service;

pub use service::{Service, ServiceModel};
