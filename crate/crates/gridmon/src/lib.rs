//! The gridmon center as a service: configuration, the HTTP API over the
//! ingest and storage layers, bulk import and operator tooling.

pub mod api;
pub mod bench;
pub mod client;
pub mod config;
pub mod demo;
pub mod import;
pub mod service;
pub mod timefmt;
pub mod tokens;

pub use config::Config;
pub use service::{Running, Service, ServiceError};
