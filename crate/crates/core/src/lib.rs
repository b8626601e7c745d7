//! Graph-based point cloud processing kernels.
//!
//! This crate holds the algorithmic core: point cloud geometry, signed
//! weighted graphs and their Laplacians, sparse symmetric solvers, signed
//! graph balancing, Gershgorin-disc-based sample selection, reconstruction
//! and denoising solvers, and quality metrics. Everything here is pure
//! computation over `alloc` collections; file formats, configuration and the
//! command line live in the companion `pcgraph-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod balance;
pub mod cloud;
pub mod dense;
pub mod graph;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod normals;
pub mod restore;
pub mod sampling;
pub mod sparse;
pub mod synth;
pub mod vec3;
