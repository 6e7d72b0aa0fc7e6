//! Dynamic mixture of finite mixtures of factor analysers.
//!
//! The crate fits a Gaussian mixture whose component covariances are
//! low-rank-plus-diagonal, inferring the number of clusters and the number
//! of active factors per cluster with a telescoping Gibbs sampler, and
//! ships the post-processing and scoring used to read its output.

pub mod error;
pub mod evaluate;
pub mod io;
pub mod kernel;
pub mod kmeans;
pub mod model;
pub mod postprocess;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
