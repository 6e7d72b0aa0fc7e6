//! Domain types: data, hyperparameters, sampler state and trace records.

mod data;
mod hyper;
mod record;
mod state;

pub use data::Dataset;
pub use hyper::{default_h, default_k_init, Hyperparams, DEFAULT_SMALL_P};
pub use record::{ClusterDraw, DrawRecord};
pub use state::{validate, ClusterParams, MixtureState, Violation};
