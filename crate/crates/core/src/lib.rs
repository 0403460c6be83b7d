//! Desk-scale hierarchical virtual screening.

// Dense numeric kernels index several parallel arrays per loop.
#![allow(clippy::needless_range_loop)]

pub mod chem;
pub mod cluster;
pub mod fingerprint;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod par;
pub mod sampler;
pub mod screening;
