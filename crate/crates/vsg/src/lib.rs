pub mod bundled;
pub mod chat;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod runner;
pub mod server;
pub mod snapshot;
