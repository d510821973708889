//! Dynamic TV-white-space channel allocation for vehicle platoons.

pub mod allocator;
pub mod config;
pub mod error;
pub mod interference;
pub mod radio;
pub mod rem;
pub mod scenario;
pub mod simkernel;
pub mod synth;
pub mod units;
