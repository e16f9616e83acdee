//! Boundary method for semi-discrete optimal transport.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod auction;
pub mod config;
pub mod cost;
pub mod driver;
pub mod error;
pub mod geom;
pub mod grid;
pub mod measure;
pub mod oracle;
pub mod shifts;
pub mod wasserstein;

pub use error::{ErrorCategory, Result, SdotError};
