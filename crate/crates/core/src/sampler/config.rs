use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Hyperparams;

/// How `alpha_B` is updated in the shared-hyperparameter block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphaBUpdate {
    /// Random-walk MH on `log alpha_B` with the slab probabilities
    /// integrated out.
    #[default]
    MarginalMh,
    /// Conjugate gamma draw given the slab probabilities. Kept as a
    /// cross-check; it tends to get stuck at large values.
    ConditionalGibbs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub hyper: Hyperparams,
    pub seed: u64,
    /// Allocations are stored on iterations divisible by this.
    pub record_alloc_every: u64,
    /// Hard ceiling on the support of K.
    pub k_max_cap: usize,
    /// Log MH acceptance rates at the end of the run.
    pub mh_target_diag: bool,
    pub alpha_b_update: AlphaBUpdate,
    /// Run [`crate::model::validate`] after every block and fail on violations.
    pub check_invariants: bool,
    /// Worker threads for the per-cluster updates; 0 uses the ambient pool.
    pub threads: usize,
}

pub const DEFAULT_K_MAX_CAP: usize = 500;

impl ChainConfig {
    pub fn new(hyper: Hyperparams, seed: u64) -> Self {
        Self {
            hyper,
            seed,
            record_alloc_every: 1,
            k_max_cap: DEFAULT_K_MAX_CAP,
            mh_target_diag: false,
            alpha_b_update: AlphaBUpdate::MarginalMh,
            check_invariants: cfg!(debug_assertions),
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.k_max_cap < self.hyper.k_init {
            return Err(Error::Config(format!(
                "k_max_cap {} is below K_init {}",
                self.k_max_cap, self.hyper.k_init
            )));
        }
        if self.k_max_cap >= 1 << 16 {
            return Err(Error::Config("k_max_cap must be below 65536".into()));
        }
        if self.record_alloc_every == 0 {
            return Err(Error::Config("record_alloc_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Metropolis-Hastings bookkeeping for the two concentration parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MhDiagnostics {
    pub accept_count_alpha_m: u64,
    pub proposals_alpha_m: u64,
    pub accept_count_alpha_b: u64,
    pub proposals_alpha_b: u64,
    pub applied_step_alpha_b: f64,
}

impl MhDiagnostics {
    pub fn acceptance_alpha_m(&self) -> f64 {
        self.accept_count_alpha_m as f64 / self.proposals_alpha_m.max(1) as f64
    }

    pub fn acceptance_alpha_b(&self) -> f64 {
        self.accept_count_alpha_b as f64 / self.proposals_alpha_b.max(1) as f64
    }

    pub fn merge(&mut self, other: &MhDiagnostics) {
        self.accept_count_alpha_m += other.accept_count_alpha_m;
        self.proposals_alpha_m += other.proposals_alpha_m;
        self.accept_count_alpha_b += other.accept_count_alpha_b;
        self.proposals_alpha_b += other.proposals_alpha_b;
        self.applied_step_alpha_b = other.applied_step_alpha_b;
    }
}
