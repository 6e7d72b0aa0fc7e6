use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use rayon::prelude::*;

use mf2a::evaluate::{adjusted_rand_index, confusion_matrix, mse_omega_moments, optimal_matching};
use mf2a::io::{apply_hyper_overrides, parse_key_values, read_dataset_csv, read_trace, sha256_file, write_dataset_csv, TraceWriter};
use mf2a::kernel::chain_seed;
use mf2a::model::{Dataset, DrawRecord, Hyperparams};
use mf2a::postprocess::{identify, modal_allocation};
use mf2a::sampler::{run_chain_with, ChainConfig};
use mf2a::simulate::{gen_study1, gen_study2, standardize, SimTruth, STUDY2_P, STUDY2_T};
use mf2a::{Error, Result};

use crate::formats::*;
use crate::{EvaluateArgs, FitArgs, ReportArgs, SimulateArgs, SummarizeArgs};

pub const SEED_ENV: &str = "MF2A_SEED";
const DEFAULT_SEED: u64 = 1;
const DEFAULT_ITERS: u64 = 50_000;
const DEFAULT_BURNIN_FRAC: f64 = 0.2;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let (data, truth) = match a.study {
        1 => gen_study1(a.p, a.t, a.seed)?,
        _ => {
            if a.p != STUDY2_P || a.t != STUDY2_T {
                log::warn!("study 2 has a fixed design (p={STUDY2_P}, T={STUDY2_T}); ignoring --p/--t");
            }
            gen_study2(a.seed)?
        }
    };
    create_dir(&a.out)?;
    write_dataset_csv(&a.out.join(DATA_FILE), &data, Some(&truth.labels))?;
    write_json(&a.out.join(TRUTH_FILE), &truth)?;
    log::info!("wrote {} observations x {} variables to {}", data.n_obs(), data.dim(), a.out.display());
    Ok(())
}

fn parse_num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
}

/// Chain settings from data defaults, the config file and flags, in
/// increasing priority. The seed additionally honours the environment.
pub fn resolve_config(data: &Dataset, a: &FitArgs) -> Result<ChainConfig> {
    let mut pairs = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            parse_key_values(&text).map_err(|e| e.context(path.display()))?
        }
        None => BTreeMap::new(),
    };
    let file_seed = pairs.remove("seed").map(|v| parse_num::<u64>("seed", &v)).transpose()?;
    let k_max_cap = pairs.remove("k_max_cap").map(|v| parse_num::<usize>("k_max_cap", &v)).transpose()?;
    let alloc_every = pairs
        .remove("record_alloc_every")
        .map(|v| parse_num::<u64>("record_alloc_every", &v))
        .transpose()?;
    let file_has_iters = pairs.contains_key("iters");
    let file_has_burnin = pairs.contains_key("burnin");

    let mut hyper = apply_hyper_overrides(&Hyperparams::from_data(data)?, &pairs)?;
    if let Some(n) = a.iters {
        hyper.iters = n;
    } else if !file_has_iters {
        hyper.iters = DEFAULT_ITERS;
    }
    if let Some(f) = a.burnin_frac {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::Config(format!("--burnin-frac must lie in [0, 1), got {f}")));
        }
        hyper.burnin = (f * hyper.iters as f64).floor() as u64;
    } else if !file_has_burnin || a.iters.is_some() {
        hyper.burnin = (DEFAULT_BURNIN_FRAC * hyper.iters as f64).floor() as u64;
    }
    if let Some(t) = a.thin {
        hyper.thin = t;
    }
    if hyper.thin == 0 {
        return Err(Error::Config("thin must be at least 1".into()));
    }
    if hyper.burnin > hyper.iters {
        return Err(Error::Config(format!("burnin {} exceeds iters {}", hyper.burnin, hyper.iters)));
    }

    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(parse_num::<u64>(SEED_ENV, &v)?),
        Err(_) => None,
    };
    let seed = env_seed.or(a.seed).or(file_seed).unwrap_or(DEFAULT_SEED);

    let mut cfg = ChainConfig::new(hyper, seed);
    if let Some(c) = k_max_cap {
        cfg.k_max_cap = c;
    }
    if let Some(r) = alloc_every {
        cfg.record_alloc_every = r;
    }
    cfg.check_invariants = false;
    cfg.validate()?;
    Ok(cfg)
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let started = unix_now();
    if a.chains == 0 {
        return Err(Error::Config("--chains must be at least 1".into()));
    }
    let raw = read_dataset_csv(&a.data)?;
    let digest = sha256_file(&a.data)?;
    let data = if a.no_standardize { raw } else { standardize(&raw, None)?.0 };
    let cfg = resolve_config(&data, a)?;
    create_dir(&a.out)?;

    let run_one = |c: usize| -> Result<ChainReport> {
        let mut ccfg = cfg.clone();
        ccfg.seed = chain_seed(cfg.seed, c as u64);
        let name = trace_file(c);
        let path = a.out.join(&name);
        let tmp = a.out.join(format!("{name}.tmp"));
        let mut writer = TraceWriter::create(&tmp)?;
        let mut draws = 0;
        let (diag, _) = run_chain_with(&data, &ccfg, |d| {
            draws += 1;
            writer.write(&d)
        })
        .map_err(|e| e.context(format!("chain {c}")))?;
        writer.finish()?;
        fs::rename(&tmp, &path)?;
        log::info!(
            "chain {c}: {draws} draws, acceptance alpha_M {:.3}, alpha_B {:.3}",
            diag.acceptance_alpha_m(),
            diag.acceptance_alpha_b()
        );
        Ok(ChainReport {
            chain: c,
            seed: ccfg.seed,
            trace: name,
            draws,
            diagnostics: diag,
            acceptance_alpha_m: diag.acceptance_alpha_m(),
            acceptance_alpha_b: diag.acceptance_alpha_b(),
        })
    };
    let run_all = || (0..a.chains).into_par_iter().map(run_one).collect::<Result<Vec<_>>>();
    let chains = if a.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(a.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run_all)?
    } else {
        run_all()?
    };

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        data_path: a.data.display().to_string(),
        data_digest: digest,
        standardized: data.standardized,
        center: data.center.iter().copied().collect(),
        scale: data.scale.iter().copied().collect(),
        column_names: data.column_names.clone(),
        hyper: cfg.hyper.clone(),
        k_max_cap: cfg.k_max_cap,
        record_alloc_every: cfg.record_alloc_every,
        base_seed: cfg.seed,
        chains,
        started_unix: started,
        finished_unix: unix_now(),
    };
    write_json(&a.out.join(MANIFEST_FILE), &manifest)
}

fn tally(values: impl Iterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut m = BTreeMap::new();
    for v in values {
        *m.entry(v).or_insert(0usize) += 1;
    }
    m.into_iter().collect()
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn summarize(a: &SummarizeArgs) -> Result<()> {
    let manifest: RunManifest = read_json(&a.run.join(MANIFEST_FILE))?;
    let data_path = a.data.clone().unwrap_or_else(|| PathBuf::from(&manifest.data_path));
    let digest = sha256_file(&data_path)?;
    if digest != manifest.data_digest {
        return Err(Error::Data(format!(
            "{} does not match the fitted dataset (digest {digest}, expected {})",
            data_path.display(),
            manifest.data_digest
        )));
    }
    let mut trace: Vec<DrawRecord> = Vec::new();
    let mut chain_of: Vec<usize> = Vec::new();
    for c in &manifest.chains {
        let draws = read_trace(&a.run.join(&c.trace))?;
        chain_of.extend(std::iter::repeat_n(c.chain, draws.len()));
        trace.extend(draws);
    }
    if trace.is_empty() {
        return Err(Error::Postprocess("the run has no retained draws".into()));
    }
    let seed = a.seed.unwrap_or(manifest.base_seed);
    let post = identify(&trace, seed)?;
    for s in &post.attrition {
        log::info!("{}: {} in, {} kept, {} removed", s.stage, s.draws_in, s.retained, s.removed);
    }

    let summary = Summary {
        data_digest: manifest.data_digest.clone(),
        standardized: manifest.standardized,
        center: manifest.center.clone(),
        scale: manifest.scale.clone(),
        draws_total: trace.len(),
        k_hat: post.k_hat,
        h_hat: post.h_hat.clone(),
        m_tilde: post.m_tilde,
        m_retained: post.m_retained,
        attrition: post.attrition.clone(),
        mu_mean: post.mu_mean.iter().map(|m| m.iter().copied().collect()).collect(),
        omega_mean: post.omega_mean.iter().map(row_major).collect(),
        omega_sq_mean: post.omega_sq_mean.iter().map(row_major).collect(),
        modal_alloc: modal_allocation(&post.draws),
        k_posterior: tally(trace.iter().map(|d| d.k)),
        kplus_posterior: tally(trace.iter().map(|d| d.k_plus)),
        h_counts: post.h_counts.clone(),
        kplus_trace: trace
            .iter()
            .zip(&chain_of)
            .map(|(d, &c)| TracePoint { chain: c, iter: d.iter, k: d.k, k_plus: d.k_plus })
            .collect(),
    };
    if summary.modal_alloc.is_none() {
        log::warn!("no retained draw carries allocations; allocation.csv is omitted");
    }
    write_summary_files(&a.out, &summary, &manifest.column_names)
}

fn write_summary_files(out: &Path, s: &Summary, names: &[String]) -> Result<()> {
    create_dir(out)?;
    write_json(&out.join(SUMMARY_FILE), s)?;
    let p = s.center.len();
    let sizes: Vec<usize> = match &s.modal_alloc {
        Some(al) => (0..s.k_hat).map(|k| al.iter().filter(|&&x| x == k).count()).collect(),
        None => vec![0; s.k_hat],
    };
    write_csv(
        &out.join("clusters.csv"),
        &["cluster", "H_hat", "size"],
        (0..s.k_hat).map(|k| vec![(k + 1).to_string(), s.h_hat[k].to_string(), sizes[k].to_string()]),
    )?;
    write_csv(
        &out.join("cluster_means.csv"),
        &["cluster", "variable", "mean", "mean_original_scale"],
        (0..s.k_hat).flat_map(|k| {
            (0..p).map(move |i| {
                let m = s.mu_mean[k][i];
                vec![(k + 1).to_string(), names[i].clone(), fmt(m), fmt(m * s.scale[i] + s.center[i])]
            })
        }),
    )?;
    write_csv(
        &out.join("omega_hat.csv"),
        &["cluster", "row", "col", "value"],
        (0..s.k_hat).flat_map(|k| {
            (0..p).flat_map(move |i| {
                (0..p).map(move |j| vec![(k + 1).to_string(), names[i].clone(), names[j].clone(), fmt(s.omega_mean[k][i * p + j])])
            })
        }),
    )?;
    let total = s.draws_total as f64;
    for (file, col, table) in [("posterior_k.csv", "K", &s.k_posterior), ("posterior_kplus.csv", "K_plus", &s.kplus_posterior)] {
        write_csv(
            &out.join(file),
            &[col, "draws", "probability"],
            table.iter().map(|(v, n)| vec![v.to_string(), n.to_string(), fmt(*n as f64 / total)]),
        )?;
    }
    write_csv(
        &out.join("posterior_h.csv"),
        &["cluster", "H", "draws"],
        s.h_counts
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().enumerate().map(move |(h, n)| vec![(k + 1).to_string(), h.to_string(), n.to_string()])),
    )?;
    if let Some(al) = &s.modal_alloc {
        write_csv(
            &out.join("allocation.csv"),
            &["obs", "cluster"],
            al.iter().enumerate().map(|(t, c)| vec![(t + 1).to_string(), (c + 1).to_string()]),
        )?;
    }
    write_csv(
        &out.join("attrition.csv"),
        &["stage", "draws_in", "retained", "removed"],
        s.attrition
            .iter()
            .map(|a| vec![a.stage.clone(), a.draws_in.to_string(), a.retained.to_string(), a.removed.to_string()]),
    )
}

fn summary_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(SUMMARY_FILE)
    } else {
        p.to_path_buf()
    }
}

/// Ground truth labels (one-based, as written in data files) and, when
/// available, the generating covariances by label.
struct Truth {
    labels: Vec<usize>,
    omegas: BTreeMap<usize, DMatrix<f64>>,
}

fn read_truth(path: &Path) -> Result<Truth> {
    if !path.exists() {
        return Err(Error::Data(format!("truth file {} does not exist", path.display())));
    }
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let t: SimTruth = read_json(path)?;
        Ok(Truth {
            labels: t.labels.iter().map(|l| l + 1).collect(),
            omegas: t.omegas().into_iter().enumerate().map(|(k, o)| (k + 1, o)).collect(),
        })
    } else {
        let d = read_dataset_csv(path)?;
        let labels = d
            .truth_labels
            .ok_or_else(|| Error::Data(format!("{} has no `label` column", path.display())))?;
        Ok(Truth { labels, omegas: BTreeMap::new() })
    }
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let s: Summary = read_json(&summary_path(&a.summary))?;
    let truth = read_truth(&a.truth)?;
    let est: Vec<usize> = s
        .modal_alloc
        .as_ref()
        .ok_or_else(|| Error::Data("summary has no allocations to evaluate".into()))?
        .iter()
        .map(|c| c + 1)
        .collect();
    if est.len() != truth.labels.len() {
        return Err(Error::Data(format!(
            "summary covers {} observations but the truth has {}",
            est.len(),
            truth.labels.len()
        )));
    }
    let ari = adjusted_rand_index(&est, &truth.labels)?;
    let matching = optimal_matching(&est, &truth.labels)?;
    let p = s.center.len();
    let mut mse = Vec::new();
    for &(e, t) in &matching.pairs {
        let Some(omega) = truth.omegas.get(&t) else { continue };
        // compare on the scale the model was fitted on
        let target = if s.standardized {
            DMatrix::from_fn(p, p, |i, j| omega[(i, j)] / (s.scale[i] * s.scale[j]))
        } else {
            omega.clone()
        };
        let mean = DMatrix::from_row_slice(p, p, &s.omega_mean[e - 1]);
        let sq = DMatrix::from_row_slice(p, p, &s.omega_sq_mean[e - 1]);
        mse.push((e, t, mse_omega_moments(&mean, &sq, &target)));
    }
    let scores = Scores {
        ari,
        error_pct: matching.error_pct(),
        mse_omega: mse,
        confusion: confusion_matrix(&est, &truth.labels)?,
    };
    log::info!("ARI {:.4}, error {:.2}%", scores.ari, scores.error_pct);
    create_dir(&a.out)?;
    write_json(&a.out.join("scores.json"), &scores)?;
    let mut rows = vec![
        vec!["ari".into(), String::new(), String::new(), fmt(scores.ari)],
        vec!["error_pct".into(), String::new(), String::new(), fmt(scores.error_pct)],
    ];
    for (e, t, v) in &scores.mse_omega {
        rows.push(vec!["mse_omega".into(), e.to_string(), t.to_string(), fmt(*v)]);
    }
    write_csv(&a.out.join("scores.csv"), &["metric", "cluster", "true_cluster", "value"], rows)?;
    let c = &scores.confusion;
    let mut header = vec!["true_label".to_string()];
    header.extend(c.est_labels.iter().map(|l| format!("cluster_{l}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        &a.out.join("confusion.csv"),
        &header,
        c.true_labels.iter().zip(&c.counts).map(|(l, row)| {
            std::iter::once(l.to_string()).chain(row.iter().map(u64::to_string)).collect::<Vec<_>>()
        }),
    )
}

fn read_time_index(path: &Path, n: usize) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        out.push(rec.get(0).unwrap_or("").to_string());
    }
    if out.len() != n {
        return Err(Error::Data(format!("{}: {} time values for {n} observations", path.display(), out.len())));
    }
    Ok(out)
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let s: Summary = read_json(&summary_path(&a.summary))?;
    if s.k_hat == 0 || s.h_counts.is_empty() || s.kplus_trace.is_empty() {
        return Err(Error::Data("summary is empty".into()));
    }
    create_dir(&a.out)?;
    write_csv(
        &a.out.join("h_posterior_long.csv"),
        &["cluster", "H", "mass"],
        s.h_counts.iter().enumerate().flat_map(|(k, row)| {
            let total: usize = row.iter().sum();
            row.iter()
                .enumerate()
                .map(move |(h, n)| vec![(k + 1).to_string(), h.to_string(), fmt(*n as f64 / total as f64)])
        }),
    )?;
    write_csv(
        &a.out.join("kplus_trace.csv"),
        &["chain", "iter", "K", "K_plus"],
        s.kplus_trace
            .iter()
            .map(|t| vec![t.chain.to_string(), t.iter.to_string(), t.k.to_string(), t.k_plus.to_string()]),
    )?;
    if let Some(al) = &s.modal_alloc {
        let times = match &a.time_index {
            Some(p) => read_time_index(p, al.len())?,
            None => (1..=al.len()).map(|t| t.to_string()).collect(),
        };
        write_csv(
            &a.out.join("assignment.csv"),
            &["obs", "time", "cluster"],
            al.iter()
                .zip(times)
                .enumerate()
                .map(|(t, (c, time))| vec![(t + 1).to_string(), time, (c + 1).to_string()]),
        )?;
    } else {
        log::warn!("summary has no allocations; assignment.csv is omitted");
    }
    Ok(())
}
