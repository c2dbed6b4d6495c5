//! Configuration, persistence, seeded randomness and the command line.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod episode_log;
pub mod rng;
pub mod train_log;
