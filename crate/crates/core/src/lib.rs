pub mod agents;
pub mod analysis;
pub mod chat;
pub mod cli;
pub mod config;
mod error;
pub mod generation;
pub mod guidance;
pub mod layout;
pub mod sandbox;
pub mod scenario;
pub mod workflow;

pub use error::Error;
