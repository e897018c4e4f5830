//! Pipeline orchestration, configuration and the review API.

pub mod backends;
pub mod commands;
pub mod config;
pub mod mock;
pub mod pipeline;
pub mod review;
pub mod server;
