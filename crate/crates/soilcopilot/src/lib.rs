//! File formats, county store, copilot agent, HTTP service and CLI built on
//! [`soilcopilot_core`].

pub mod cdl;
pub mod cli;
pub mod config;
pub mod copilot;
pub mod corpus;
pub mod error;
pub mod formats;
pub mod scene;
pub mod service;
pub mod store;

pub use error::AppError;
pub use soilcopilot_core as core;
