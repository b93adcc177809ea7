//! Experiment orchestration around the core library: configuration files,
//! dataset plumbing, the trained methods under comparison, the two sweeps,
//! and result CSV emission.

pub mod config;
pub mod data;
pub mod methods;
pub mod result;
pub mod sweeps;
