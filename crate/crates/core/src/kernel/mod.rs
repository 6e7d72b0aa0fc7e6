//! Density evaluations, random draws and small dense linear algebra helpers.
//!
//! Everything here is a pure function of its inputs and, for draws, of the
//! [`RngStream`] state.

mod density;
mod draw;
pub mod linalg;
mod rng;

pub use density::{
    log_add_exp, log_bnb_pmf, log_f_density, log_gamma_density, log_mv_t_isotropic, log_mvn_lowrank,
    BnbParams, LowRankGaussian, PreparedLowRank,
};
pub use draw::{
    draw_bernoulli, draw_beta, draw_dirichlet, draw_gamma, draw_inverse_gamma, draw_mvn_chol,
    draw_standard_normal, sample_categorical_from_logits,
};
pub use linalg::{cholesky_spd, JITTER_LADDER};
pub use rng::{block, chain_seed, stream_id, RngStream};
