//! Sweep execution: channel construction, per-cell evaluation, training
//! orchestration, and persistence.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::config::{AntennaKind, ExperimentConfig, Method, SelectionCriterion};
use super::report::{write_result_csv, ResultRow, RESULTS_SCHEMA};
use super::dbm_to_watt;
use crate::baselines::{gd_precoder, mrt_precoder};
use crate::bf;
use crate::channel::{
    assemble_channel, jitter_paths, stack_channels, standard_complex_gaussian, synthesize_paths,
    ChannelEstimate, PathSet,
};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::lnn::{
    evaluate_precoder, load_checkpoint, save_checkpoint, train, ChannelSnapshot, Episode,
    NetState, NetworkParams, TrainMetrics,
};
use crate::rng::stream;

/// Which grid a sweep walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// SE versus transmit power at fixed estimation error.
    Power,
    /// SE versus estimation error at fixed transmit power.
    Cee,
}

impl SweepKind {
    fn as_str(&self) -> &'static str {
        match self {
            SweepKind::Power => "power",
            SweepKind::Cee => "cee",
        }
    }
}

/// Result rows plus where they were written.
#[derive(Debug)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub csv_path: PathBuf,
    pub metrics_path: PathBuf,
}

/// The per-pattern channels of one (seed, antenna, cee) evaluation point.
struct EvalSnapshot {
    h_true: Vec<DMatrix<Complex64>>,
    h_hat: Vec<DMatrix<Complex64>>,
}

/// Per-user path sets for one replicate seed, shared by every method,
/// antenna, power, and error level of that seed. The user cluster's center
/// is a per-seed draw inside the sector.
fn paths_for_seed(cfg: &ExperimentConfig, master: u64, seed: u64) -> Result<Vec<PathSet>> {
    let (lo, hi) = cfg.scenario.center_range();
    let center = if hi > lo {
        rand::Rng::gen_range(&mut stream(master, &["aod-center", &format!("seed={seed}")]), lo..=hi)
    } else {
        0.0
    };
    let scenario = cfg.scenario.with_aod_center(center);
    (0..cfg.system.k)
        .map(|u| {
            let mut rng =
                stream(master, &["paths", &format!("seed={seed}"), &format!("user={u}")]);
            synthesize_paths(&scenario, u, &mut rng)
        })
        .collect()
}

/// Unit-variance error shape for `(seed, pattern)`, shared across antennas
/// and error levels so sweeps are paired.
fn error_shape(cfg: &ExperimentConfig, master: u64, seed: u64, p_idx: usize) -> DMatrix<Complex64> {
    let mut rng = stream(master, &["cee-shape", &format!("seed={seed}"), &format!("p={p_idx}")]);
    standard_complex_gaussian(cfg.system.n(), cfg.system.m, &mut rng)
}

fn build_eval_snapshot(
    cfg: &ExperimentConfig,
    codebook: &Codebook,
    paths: &[PathSet],
    master: u64,
    seed: u64,
    cee_db: f64,
) -> EvalSnapshot {
    let mut h_true = Vec::with_capacity(codebook.n_patterns());
    let mut h_hat = Vec::with_capacity(codebook.n_patterns());
    for (p_idx, pattern) in codebook.patterns().iter().enumerate() {
        let per_user: Vec<_> =
            paths.iter().map(|ps| assemble_channel(ps, pattern, &cfg.system)).collect();
        let h = stack_channels(&per_user);
        let shape = error_shape(cfg, master, seed, p_idx);
        let est = ChannelEstimate::from_unit_error(&h, cee_db, &shape);
        h_true.push(est.h_true);
        h_hat.push(est.h_hat);
    }
    EvalSnapshot { h_true, h_hat }
}

/// Fresh training episodes for one antenna arm.
///
/// Episode `e` draws everything from the stream `(master, "train-data",
/// antenna, e)`: base paths, per-snapshot jitter, and error shapes at the
/// training-time CEE. All methods see identical data.
fn build_training_episodes(
    cfg: &ExperimentConfig,
    codebook: &Codebook,
    antenna: AntennaKind,
    master: u64,
    n_episodes: usize,
) -> Result<Vec<Episode>> {
    let episode_len = cfg.train.net.episode_len;
    let mut episodes = Vec::with_capacity(n_episodes);
    for e in 0..n_episodes {
        let mut rng =
            stream(master, &["train-data", antenna.as_str(), &format!("ep={e}")]);
        let (lo, hi) = cfg.scenario.center_range();
        let center = if hi > lo { rand::Rng::gen_range(&mut rng, lo..=hi) } else { 0.0 };
        let scenario = cfg.scenario.with_aod_center(center);
        let mut paths: Vec<PathSet> = (0..cfg.system.k)
            .map(|u| synthesize_paths(&scenario, u, &mut rng))
            .collect::<Result<_>>()?;
        let mut snapshots = Vec::with_capacity(episode_len);
        for s in 0..episode_len {
            if s > 0 {
                for ps in &mut paths {
                    jitter_paths(&cfg.scenario, ps, &mut rng);
                }
            }
            let mut h_true = Vec::with_capacity(codebook.n_patterns());
            let mut h_hat = Vec::with_capacity(codebook.n_patterns());
            for pattern in codebook.patterns() {
                let per_user: Vec<_> =
                    paths.iter().map(|ps| assemble_channel(ps, pattern, &cfg.system)).collect();
                let h = stack_channels(&per_user);
                let shape = standard_complex_gaussian(cfg.system.n(), cfg.system.m, &mut rng);
                let est = ChannelEstimate::from_unit_error(&h, cfg.train.cee_db, &shape);
                h_true.push(est.h_true);
                h_hat.push(est.h_hat);
            }
            snapshots.push(ChannelSnapshot { h_true, h_hat });
        }
        episodes.push(Episode { snapshots });
    }
    Ok(episodes)
}

fn checkpoint_path(out_dir: &Path, method: Method, antenna: AntennaKind) -> PathBuf {
    out_dir.join(format!("ckpt_{}_{}.bin", method, antenna))
}

/// Loads a matching checkpoint or trains a fresh model for one
/// (method, antenna) arm, persisting the result.
fn load_or_train_model(
    cfg: &ExperimentConfig,
    master: u64,
    out_dir: &Path,
    method: Method,
    antenna: AntennaKind,
) -> Result<(NetworkParams, Option<TrainMetrics>)> {
    let cell = match method {
        Method::Lnn => crate::lnn::CellKind::Cfc,
        Method::Gru => crate::lnn::CellKind::Gru,
        other => return Err(Error::InvalidConfig(format!("{other} is not a learned method"))),
    };
    let input_dim = 2 * cfg.system.n() * cfg.system.m;
    let out_dim = 2 * cfg.system.n() * cfg.system.k;

    let path = checkpoint_path(out_dir, method, antenna);
    if path.exists() {
        let (meta, params, _opt, _rng) = load_checkpoint(&path)?;
        if params.cell != cell
            || params.input_dim != input_dim
            || params.out_dim != out_dim
            || params.hidden != cfg.train.net.hidden
            || params.n_layers() != cfg.train.net.n_layers
        {
            return Err(Error::Checkpoint(format!(
                "{} does not match the configured architecture; delete it to retrain",
                path.display()
            )));
        }
        if meta.method != method.as_str() {
            return Err(Error::Checkpoint(format!(
                "{} carries method tag '{}', expected '{}'",
                path.display(),
                meta.method,
                method
            )));
        }
        return Ok((params, None));
    }

    let codebook = cfg.codebook.build_for(antenna)?;
    let n_episodes = cfg.train.net.steps.div_ceil(cfg.train.net.episode_len);
    let episodes = build_training_episodes(cfg, &codebook, antenna, master, n_episodes)?;
    let mut init_rng = stream(master, &["train-init", method.as_str(), antenna.as_str()]);
    let (params, opt, metrics) = train(
        cell,
        &episodes,
        cfg.system.k,
        cfg.system.sigma2_watt,
        dbm_to_watt(cfg.train.p_dbm),
        &cfg.train.net,
        &mut init_rng,
    )?;
    save_checkpoint(&path, method.as_str(), &params, &opt, &init_rng)?;

    let metrics_path = out_dir.join(format!("metrics_train_{}_{}.json", method, antenna));
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;
    Ok((params, Some(metrics)))
}

/// Evaluates one method on one snapshot: exhaustive pattern selection with
/// the method's precoder, returning the winner and its precoder.
fn select_and_precode(
    cfg: &ExperimentConfig,
    snapshot: &EvalSnapshot,
    method: Method,
    model: Option<&NetworkParams>,
    p_watt: f64,
    gd_rng_labels: &[&str],
    master: u64,
) -> Result<(usize, f64, DMatrix<Complex64>)> {
    let sigma2 = cfg.system.sigma2_watt;
    let k_users = cfg.system.k;
    let t = cfg.train.net.t_interval;

    let precoder_for = |h_hat: &DMatrix<Complex64>| -> Result<DMatrix<Complex64>> {
        match method {
            Method::Mrt => Ok(mrt_precoder(h_hat, k_users, p_watt)?.w),
            Method::Gd => {
                let mut rng = stream(master, gd_rng_labels);
                Ok(gd_precoder(h_hat, k_users, &cfg.gd, sigma2, p_watt, &mut rng)?.w)
            }
            Method::Lnn | Method::Gru => {
                let params = model.expect("learned methods carry a model");
                let state = NetState::zeros(params);
                Ok(evaluate_precoder(params, h_hat, &state, t, sigma2, p_watt)?.w)
            }
        }
    };

    match cfg.codebook.selection {
        SelectionCriterion::PipelineSe => {
            let mut best: Option<(usize, f64, DMatrix<Complex64>)> = None;
            for p_idx in 0..snapshot.h_hat.len() {
                let w = precoder_for(&snapshot.h_hat[p_idx])?;
                let se = bf::spectral_efficiency(&snapshot.h_hat[p_idx], &w, sigma2);
                if best.as_ref().map_or(true, |(_, s, _)| se > *s) {
                    best = Some((p_idx, se, w));
                }
            }
            Ok(best.expect("codebooks are non-empty"))
        }
        SelectionCriterion::FrobeniusGain => {
            let mut p_idx = 0;
            let mut best_gain = f64::NEG_INFINITY;
            for (i, h) in snapshot.h_hat.iter().enumerate() {
                let gain = h.norm_squared();
                if gain > best_gain {
                    best_gain = gain;
                    p_idx = i;
                }
            }
            let w = precoder_for(&snapshot.h_hat[p_idx])?;
            let se = bf::spectral_efficiency(&snapshot.h_hat[p_idx], &w, sigma2);
            Ok((p_idx, se, w))
        }
    }
}

/// One sweep cell fully evaluated into a result row.
#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    snapshot: &EvalSnapshot,
    method: Method,
    antenna: AntennaKind,
    model: Option<&NetworkParams>,
    p_dbm: f64,
    cee_db: f64,
    seed: u64,
    master: u64,
) -> Result<ResultRow> {
    let start = Instant::now();
    let p_watt = dbm_to_watt(p_dbm);
    let labels = [
        "gd-init",
        antenna.as_str(),
        &format!("p={p_dbm}"),
        &format!("cee={cee_db}"),
        &format!("seed={seed}"),
    ];
    let (p_idx, se_est, w) =
        select_and_precode(cfg, snapshot, method, model, p_watt, &labels, master)?;
    let h_true = &snapshot.h_true[p_idx];
    let rates = bf::per_user_rates(h_true, &w, cfg.system.sigma2_watt);
    let se_true = rates.iter().sum();
    Ok(ResultRow {
        method,
        antenna,
        p_dbm,
        cee_db,
        seed,
        p_star: p_idx + 1,
        se_true,
        se_est,
        rates,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Serialize)]
struct SweepMetrics<'a> {
    schema: &'static str,
    sweep: &'static str,
    master_seed: u64,
    rows: usize,
    wall_time_s: f64,
    param_counts: BTreeMap<String, usize>,
    /// Per (method, antenna): paired per-seed SE ratios across the error grid.
    degradation: BTreeMap<String, Degradation>,
    /// Reference robustness contrast for the same ratio, in percent.
    reference_reduction_pct: BTreeMap<&'static str, f64>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize, Default, Clone)]
struct Degradation {
    cee_min_db: f64,
    cee_max_db: f64,
    se_mean_at_min: f64,
    se_mean_at_max: f64,
    /// se(max cee)/se(min cee) from per-seed pairs, median.
    ratio_median: f64,
    /// 100·(1 − ratio_median): the SE reduction in percent.
    reduction_pct_median: f64,
}

fn degradation_table(rows: &[ResultRow], cee_min: f64, cee_max: f64) -> BTreeMap<String, Degradation> {
    let mut out = BTreeMap::new();
    let pairs: Vec<(Method, AntennaKind)> = {
        let mut v: Vec<_> = rows.iter().map(|r| (r.method, r.antenna)).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    for (method, antenna) in pairs {
        let of = |cee: f64| -> BTreeMap<u64, f64> {
            rows.iter()
                .filter(|r| r.method == method && r.antenna == antenna && r.cee_db == cee)
                .map(|r| (r.seed, r.se_true))
                .collect()
        };
        let lo = of(cee_min);
        let hi = of(cee_max);
        if lo.is_empty() || hi.is_empty() {
            continue;
        }
        let mut ratios: Vec<f64> = lo
            .iter()
            .filter_map(|(seed, &se_lo)| hi.get(seed).map(|&se_hi| se_hi / se_lo))
            .collect();
        ratios.sort_by(f64::total_cmp);
        let ratio_median = median_of_sorted(&ratios);
        out.insert(
            format!("{method}|{antenna}"),
            Degradation {
                cee_min_db: cee_min,
                cee_max_db: cee_max,
                se_mean_at_min: mean(lo.values().copied()),
                se_mean_at_max: mean(hi.values().copied()),
                ratio_median,
                reduction_pct_median: 100.0 * (1.0 - ratio_median),
            },
        );
    }
    out
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn median_of_sorted(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn run_sweep(
    cfg: &ExperimentConfig,
    master: u64,
    out_dir: &Path,
    kind: SweepKind,
    jobs: usize,
) -> Result<SweepOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();

    // Models first: one per learned (method, antenna) arm, reused from disk
    // when the architecture matches.
    let mut models: BTreeMap<(Method, AntennaKind), NetworkParams> = BTreeMap::new();
    let mut param_counts = BTreeMap::new();
    for &method in cfg.methods.iter().filter(|m| m.is_learned()) {
        for &antenna in &cfg.antennas {
            let (params, _) = load_or_train_model(cfg, master, out_dir, method, antenna)?;
            param_counts.insert(format!("{method}|{antenna}"), params.param_count());
            models.insert((method, antenna), params);
        }
    }

    // Shared evaluation channels per (antenna, seed, cee).
    let cee_levels: Vec<f64> = match kind {
        SweepKind::Power => vec![cfg.power_sweep_cee_db],
        SweepKind::Cee => cfg.cee_grid_db.clone(),
    };
    let mut snapshots: BTreeMap<(AntennaKind, u64, u64), EvalSnapshot> = BTreeMap::new();
    for &antenna in &cfg.antennas {
        let codebook = cfg.codebook.build_for(antenna)?;
        for &seed in &cfg.seeds {
            let paths = paths_for_seed(cfg, master, seed)?;
            for &cee in &cee_levels {
                let snap = build_eval_snapshot(cfg, &codebook, &paths, master, seed, cee);
                snapshots.insert((antenna, seed, cee.to_bits()), snap);
            }
        }
    }

    // Cell grid, in canonical order.
    struct Cell {
        method: Method,
        antenna: AntennaKind,
        p_dbm: f64,
        cee_db: f64,
        seed: u64,
    }
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &antenna in &cfg.antennas {
            match kind {
                SweepKind::Power => {
                    for &p_dbm in &cfg.p_grid_dbm {
                        for &seed in &cfg.seeds {
                            cells.push(Cell {
                                method,
                                antenna,
                                p_dbm,
                                cee_db: cfg.power_sweep_cee_db,
                                seed,
                            });
                        }
                    }
                }
                SweepKind::Cee => {
                    for &cee_db in &cfg.cee_grid_db {
                        for &seed in &cfg.seeds {
                            cells.push(Cell {
                                method,
                                antenna,
                                p_dbm: cfg.cee_sweep_p_dbm,
                                cee_db,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }

    let eval_cell = |cell: &Cell| -> Result<ResultRow> {
        let snapshot = snapshots
            .get(&(cell.antenna, cell.seed, cell.cee_db.to_bits()))
            .expect("snapshot precomputed for every cell");
        run_cell(
            cfg,
            snapshot,
            cell.method,
            cell.antenna,
            models.get(&(cell.method, cell.antenna)),
            cell.p_dbm,
            cell.cee_db,
            cell.seed,
            master,
        )
    };

    let mut rows: Vec<ResultRow> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(eval_cell).collect::<Result<Vec<_>>>())?
    } else {
        cells.iter().map(eval_cell).collect::<Result<Vec<_>>>()?
    };

    // Deterministic output order regardless of execution order.
    rows.sort_by(|a, b| {
        (a.method, a.antenna)
            .cmp(&(b.method, b.antenna))
            .then(a.p_dbm.total_cmp(&b.p_dbm))
            .then(a.cee_db.total_cmp(&b.cee_db))
            .then(a.seed.cmp(&b.seed))
    });

    let csv_path = out_dir.join(format!("results_{}.csv", kind.as_str()));
    let file = BufWriter::new(File::create(&csv_path)?);
    write_result_csv(file, &rows, cfg.system.k)?;

    let degradation = if kind == SweepKind::Cee {
        let lo = cfg.cee_grid_db.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cfg.cee_grid_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        degradation_table(&rows, lo, hi)
    } else {
        BTreeMap::new()
    };

    let metrics = SweepMetrics {
        schema: RESULTS_SCHEMA,
        sweep: kind.as_str(),
        master_seed: master,
        rows: rows.len(),
        wall_time_s: started.elapsed().as_secs_f64(),
        param_counts,
        degradation,
        reference_reduction_pct: BTreeMap::from([("lnn", 31.7), ("gd", 55.4)]),
        config: cfg,
    };
    let metrics_path = out_dir.join(format!("metrics_{}.json", kind.as_str()));
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;

    Ok(SweepOutput { rows, csv_path, metrics_path })
}

/// SE versus transmit power at the configured fixed estimation error.
pub fn run_power_sweep(
    cfg: &ExperimentConfig,
    master: u64,
    out_dir: &Path,
    jobs: usize,
) -> Result<SweepOutput> {
    run_sweep(cfg, master, out_dir, SweepKind::Power, jobs)
}

/// SE versus estimation error at the configured fixed transmit power.
pub fn run_cee_sweep(
    cfg: &ExperimentConfig,
    master: u64,
    out_dir: &Path,
    jobs: usize,
) -> Result<SweepOutput> {
    run_sweep(cfg, master, out_dir, SweepKind::Cee, jobs)
}

/// Trains every learned (method, antenna) arm and persists checkpoints plus
/// training metrics. Existing matching checkpoints are left untouched.
pub fn train_command(cfg: &ExperimentConfig, master: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for &method in cfg.methods.iter().filter(|m| m.is_learned()) {
        for &antenna in &cfg.antennas {
            load_or_train_model(cfg, master, out_dir, method, antenna)?;
            written.push(checkpoint_path(out_dir, method, antenna));
        }
    }
    Ok(written)
}

/// Writes the resolved configuration and the per-seed synthetic path sets.
pub fn gen_scenario_command(
    cfg: &ExperimentConfig,
    master: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let cfg_path = out_dir.join("config.json");
    cfg.save(&cfg_path)?;
    written.push(cfg_path);

    for &seed in &cfg.seeds {
        let paths = paths_for_seed(cfg, master, seed)?;
        let path = out_dir.join(format!("paths_seed{seed}.csv"));
        let file = BufWriter::new(File::create(&path)?);
        crate::channel::write_paths_csv(file, &paths)?;
        written.push(path);
    }
    Ok(written)
}
