//! Gaussian-state simulation of quantum optical frequency combs produced by
//! spontaneous and stimulated parametric down-conversion.
//!
//! The pipeline is: build a state ([`dynamics`]), optionally add thermal
//! noise or restrict it to some modes ([`state`]), reduce it to arm
//! intensity moments for a bipartition ([`moments`]), then evaluate the
//! identifiers ([`identifiers`]) and the nonclassicality depth ([`depth`]).
//! [`montecarlo`] drives that pipeline over the parameter sweeps behind the
//! figure datasets and [`cli`] exposes everything on the command line.

// `!(x >= 0.0)` is used on purpose: it rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod depth;
pub mod dynamics;
pub mod error;
pub mod identifiers;
pub mod moments;
pub mod montecarlo;
pub mod state;

pub use error::{Error, Result};
pub use state::{Bipartition, CovarianceBlocks, GaussianCombState, C64};
