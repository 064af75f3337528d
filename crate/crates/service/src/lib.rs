//! Project persistence, HTTP API and CLI plumbing around `strata-core`.

pub mod api;
pub mod config;
pub mod error;
pub mod store;

pub use config::Config;
pub use error::{ErrorBody, ServiceError};
pub use store::{AddOptions, ElementUpdate, Project, ProjectStore, ProjectView, Rendered};
