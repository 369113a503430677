pub mod agent;
pub mod analytics;
pub mod archive;
pub mod cli;
pub mod dsl;
pub mod kernel;
pub mod market;
pub mod service;
pub mod strategy;
