use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{block, RngStream};
use crate::model::{validate, Dataset, DrawRecord, MixtureState};
use crate::sampler::allocation::update_allocations;
use crate::sampler::cluster::{update_cluster, SharedScalars};
use crate::sampler::components::{add_empty_components, sample_k, sample_weights, update_alpha_m};
use crate::sampler::config::{ChainConfig, MhDiagnostics};
use crate::sampler::hyper::update_shared_hyperparams;
use crate::sampler::init::init_state;

/// Everything a finished chain produces.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub draws: Vec<DrawRecord>,
    pub diagnostics: MhDiagnostics,
    pub final_state: MixtureState,
}

fn check(state: &MixtureState, data: &Dataset, cfg: &ChainConfig, iter: u64, stage: &str) -> Result<()> {
    if !cfg.check_invariants {
        return Ok(());
    }
    let v = validate(state, data);
    if v.is_empty() {
        Ok(())
    } else {
        let msg: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        Err(Error::Numerical(format!("iteration {iter}, after {stage}: {}", msg.join("; "))))
    }
}

/// Observations of each filled cluster as p x n_k column blocks.
fn cluster_data(state: &MixtureState, y: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    state.members()[..state.k_plus].iter().map(|m| y.select_columns(m.iter())).collect()
}

/// One full iteration of the four blocks. `y` is the data as p x T.
pub fn sweep(state: &mut MixtureState, data: &Dataset, y: &DMatrix<f64>, cfg: &ChainConfig, iter: u64) -> Result<MhDiagnostics> {
    let hyper = &cfg.hyper;
    let ctx = |stage: &str| format!("iteration {iter}, {stage}");

    // Block 1
    let mut rng = RngStream::for_cell(cfg.seed, iter, 0, block::ALLOCATION);
    update_allocations(state, y, &mut rng).map_err(|e| e.context(ctx("allocations")))?;
    check(state, data, cfg, iter, "allocations")?;

    // Block 2: per filled cluster, then the shared hyperparameters
    let shared = SharedScalars {
        alpha_b: state.alpha_b,
        b_xi: state.b_xi.clone(),
        b_theta: state.b_theta,
        b0_spike: state.b0_spike,
    };
    let blocks = cluster_data(state, y);
    let kp = state.k_plus;
    state.clusters[..kp]
        .par_iter_mut()
        .zip(blocks.par_iter())
        .enumerate()
        .map(|(k, (c, yk))| {
            let mut rng = RngStream::for_cell(cfg.seed, iter, k, block::CLUSTER);
            update_cluster(c, yk, hyper, &shared, &mut rng).map_err(|e| e.context(ctx(&format!("cluster {k}"))))
        })
        .collect::<Result<Vec<()>>>()?;
    let mut rng = RngStream::for_cell(cfg.seed, iter, 0, block::HYPER);
    let mut diag = update_shared_hyperparams(state, hyper, cfg.alpha_b_update, &mut rng)
        .map_err(|e| e.context(ctx("shared hyperparameters")))?;
    check(state, data, cfg, iter, "cluster parameters")?;

    // Block 3
    let mut rng = RngStream::for_cell(cfg.seed, iter, 0, block::COMPONENTS);
    let k_new = sample_k(&state.counts[..kp], state.alpha_m, &hyper.bnb, cfg.k_max_cap, &mut rng)
        .map_err(|e| e.context(ctx("number of components")))?;
    let accepted = update_alpha_m(state, k_new, hyper, &mut rng).map_err(|e| e.context(ctx("alpha_M")))?;
    diag.proposals_alpha_m = 1;
    diag.accept_count_alpha_m = accepted as u64;

    // Block 4
    let mut refill = RngStream::for_cell(cfg.seed, iter, 0, block::REFILL);
    add_empty_components(state, k_new, hyper, &mut refill).map_err(|e| e.context(ctx("empty components")))?;
    state.weights =
        sample_weights(&state.counts, state.alpha_m, k_new, &mut rng).map_err(|e| e.context(ctx("weights")))?;
    check(state, data, cfg, iter, "weights")?;
    Ok(diag)
}

/// Runs one chain, handing each retained draw to `sink` as it is produced.
pub fn run_chain_with<F>(data: &Dataset, cfg: &ChainConfig, mut sink: F) -> Result<(MhDiagnostics, MixtureState)>
where
    F: FnMut(DrawRecord) -> Result<()> + Send,
{
    cfg.validate()?;
    let mut run = || -> Result<(MhDiagnostics, MixtureState)> {
        let mut state = init_state(data, cfg)?;
        check(&state, data, cfg, 0, "initialization")?;
        let y = data.by_column();
        let hyper = &cfg.hyper;
        let mut diag = MhDiagnostics::default();
        for iter in 1..=hyper.iters {
            let d = sweep(&mut state, data, &y, cfg, iter)?;
            diag.merge(&d);
            if iter > hyper.burnin && (iter - hyper.burnin).is_multiple_of(hyper.thin) {
                let with_alloc = iter % cfg.record_alloc_every == 0;
                sink(DrawRecord::from_state(iter, &state, with_alloc))?;
            }
        }
        if cfg.mh_target_diag {
            log::info!(
                "acceptance: alpha_M {:.3}, alpha_B {:.3} (step {:.3})",
                diag.acceptance_alpha_m(),
                diag.acceptance_alpha_b(),
                diag.applied_step_alpha_b
            );
        }
        Ok((diag, state))
    };
    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(run)
    } else {
        run()
    }
}

/// Runs one chain and collects its retained draws.
pub fn run_chain(data: &Dataset, cfg: &ChainConfig) -> Result<ChainOutput> {
    let mut draws = Vec::new();
    let (diagnostics, final_state) = run_chain_with(data, cfg, |d| {
        draws.push(d);
        Ok(())
    })?;
    Ok(ChainOutput { draws, diagnostics, final_state })
}
