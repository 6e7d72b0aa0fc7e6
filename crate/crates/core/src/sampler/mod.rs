//! The telescoping Gibbs sampler.
//!
//! One iteration runs four blocks: reallocate observations and move the
//! filled components to the front; update each filled cluster's factor
//! model and the hyperparameters shared across clusters; draw the number
//! of components and the Dirichlet concentration; refill the empty
//! components from their priors and redraw the weights.

pub mod allocation;
pub mod chain;
pub mod cluster;
pub mod components;
pub mod config;
pub mod hyper;
pub mod init;

pub use chain::{run_chain, run_chain_with, sweep, ChainOutput};
pub use config::{AlphaBUpdate, ChainConfig, MhDiagnostics, DEFAULT_K_MAX_CAP};
pub use init::init_state;
