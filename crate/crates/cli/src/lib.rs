//! Front end for the boundary-method solver: run summaries, partition
//! images and desk-scale benchmarks.

pub mod commands;
pub mod fit;
pub mod image;
pub mod summary;
