pub mod assignment;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod output;
pub mod policies;
pub mod rfmodel;
pub mod scenario;
pub mod tracking;
