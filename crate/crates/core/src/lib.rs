//! Meshfree discretization of the Laplace–Beltrami operator on point clouds
//! using cylindrical basis functions (CBF).
//!
//! The pipeline is: sample or load a [`pointcloud::PointCloud`], estimate
//! normals, assemble the collocation and differential matrices in
//! [`operator`], and use the resulting [`operator::LbOperator`] for the
//! spectrum, heat-diffusion and smoothing experiments in [`pde`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod kernel;
pub mod operator;
pub mod output;
pub mod pde;
pub mod pointcloud;

pub use error::{Error, Result};
