//! The training loop shared by the liquid and GRU digital beamformers.
//!
//! One step consumes one channel snapshot: the network runs forward once per
//! codebook pattern from the carried hidden state, the pattern with the best
//! estimated-channel SE wins, and only that pattern's fairness loss is
//! backpropagated before the Adam update. Hidden state carries across the
//! snapshots of an episode (gradients truncate at snapshot boundaries) and
//! resets between episodes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    adam_step, evaluate_precoder, snapshot_loss_and_gradients, CellKind, NetState, NetworkParams,
    TrainState,
};
use crate::error::{Error, Result};

/// Per-pattern channels of one instant: `h_true[p]` and `h_hat[p]` are the
/// stacked N×M true channel and its estimate under codebook pattern `p`.
#[derive(Debug, Clone)]
pub struct ChannelSnapshot {
    pub h_true: Vec<DMatrix<Complex64>>,
    pub h_hat: Vec<DMatrix<Complex64>>,
}

impl ChannelSnapshot {
    pub fn n_patterns(&self) -> usize {
        self.h_hat.len()
    }
}

/// A short sequence of snapshots over which hidden state persists.
#[derive(Debug, Clone)]
pub struct Episode {
    pub snapshots: Vec<ChannelSnapshot>,
}

/// Architecture and optimizer settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Snapshot-level update steps.
    pub steps: usize,
    /// Adam learning rate α.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Floor ε inside the fairness loss.
    pub loss_eps: f64,
    /// Hidden width of each recurrent layer.
    pub hidden: usize,
    pub n_layers: usize,
    /// Snapshots per episode (hidden state carries within an episode).
    pub episode_len: usize,
    /// Abstract inter-snapshot interval fed to the gate.
    pub t_interval: f64,
    /// Steps per metrics epoch.
    pub epoch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 800,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            loss_eps: 1e-6,
            hidden: 64,
            n_layers: 3,
            episode_len: 2,
            t_interval: 1.0,
            epoch_size: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.hidden == 0 || self.n_layers == 0 || self.episode_len == 0 {
            return Err(Error::InvalidConfig(
                "steps, hidden, n_layers, episode_len must be positive".into(),
            ));
        }
        for (name, v) in [
            ("lr", self.lr),
            ("eps_adam", self.eps_adam),
            ("loss_eps", self.loss_eps),
            ("t_interval", self.t_interval),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("beta1, beta2 must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Step-level and epoch-level training records.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub loss: Vec<f64>,
    pub se_est: Vec<f64>,
    /// Winning pattern index per step.
    pub best_p: Vec<usize>,
    /// How often each pattern won.
    pub best_p_histogram: Vec<u64>,
    /// Mean estimated SE per metrics epoch.
    pub epoch_se: Vec<f64>,
    pub epoch_size: usize,
    pub param_count: usize,
}

/// Trains a network of the given cell kind on a snapshot dataset.
///
/// `k_users` fixes the base-matrix width; power and noise are the operating
/// point the loss is evaluated at. The dataset is consumed episode by
/// episode, cycling when `cfg.steps` exceeds the snapshot count. `rng` only
/// seeds the initialization, so an identical `(dataset, cfg, rng)` triple
/// reproduces the parameter trajectory exactly.
pub fn train(
    cell: CellKind,
    episodes: &[Episode],
    k_users: usize,
    sigma2: f64,
    p: f64,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(NetworkParams, TrainState, TrainMetrics)> {
    cfg.validate()?;
    if episodes.is_empty() || episodes.iter().any(|e| e.snapshots.is_empty()) {
        return Err(Error::InvalidConfig("training needs a non-empty episode dataset".into()));
    }
    let first = &episodes[0].snapshots[0];
    let n_p = first.n_patterns();
    if n_p == 0 {
        return Err(Error::InvalidConfig("snapshots carry no patterns".into()));
    }
    let (n, m) = first.h_hat[0].shape();
    let input_dim = 2 * n * m;
    let out_dim = 2 * n * k_users;

    let mut params = NetworkParams::init(cell, input_dim, cfg.hidden, cfg.n_layers, out_dim, rng);
    let mut opt = TrainState::new(params.param_count(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_adam, cfg.loss_eps);
    let mut metrics = TrainMetrics {
        best_p_histogram: vec![0; n_p],
        epoch_size: cfg.epoch_size,
        param_count: params.param_count(),
        ..TrainMetrics::default()
    };

    let mut step = 0usize;
    let mut episode_idx = 0usize;
    'outer: loop {
        let episode = &episodes[episode_idx % episodes.len()];
        episode_idx += 1;
        let mut state = NetState::zeros(&params);
        for snapshot in &episode.snapshots {
            if step >= cfg.steps {
                break 'outer;
            }
            assert_eq!(snapshot.n_patterns(), n_p, "pattern count must be constant");

            // Exhaustive analog selection on the estimated channels.
            let mut best: Option<(usize, f64, NetState)> = None;
            for p_idx in 0..n_p {
                let eval = match evaluate_precoder(
                    &params,
                    &snapshot.h_hat[p_idx],
                    &state,
                    cfg.t_interval,
                    sigma2,
                    p,
                ) {
                    Ok(e) => e,
                    Err(Error::DegeneratePrecoder) => {
                        return Err(Error::TrainingDiverged {
                            step,
                            detail: "network emitted a zero base matrix".into(),
                        })
                    }
                    Err(e) => return Err(e),
                };
                if best.as_ref().map_or(true, |(_, se, _)| eval.se_est > *se) {
                    best = Some((p_idx, eval.se_est, eval.state));
                }
            }
            let (best_p, best_se, next_state) = best.expect("n_p >= 1");

            let grad = snapshot_loss_and_gradients(
                &params,
                &snapshot.h_hat[best_p],
                &state,
                cfg.t_interval,
                sigma2,
                p,
                cfg.loss_eps,
            )
            .map_err(|e| match e {
                Error::TrainingDiverged { detail, .. } => Error::TrainingDiverged { step, detail },
                other => other,
            })?;
            if !grad.loss.is_finite() {
                return Err(Error::TrainingDiverged { step, detail: format!("loss = {}", grad.loss) });
            }

            adam_step(&mut opt, &mut params, &grad.grads);
            state = next_state;

            metrics.loss.push(grad.loss);
            metrics.se_est.push(best_se);
            metrics.best_p.push(best_p);
            metrics.best_p_histogram[best_p] += 1;
            step += 1;
        }
    }

    let epoch = cfg.epoch_size.max(1);
    metrics.epoch_se = metrics
        .se_est
        .chunks(epoch)
        .map(|chunk| chunk.iter().sum::<f64>() / chunk.len() as f64)
        .collect();

    Ok((params, opt, metrics))
}
