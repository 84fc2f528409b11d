//! Comparison digital precoders sharing the pipeline contract with the
//! liquid network: best-iterate gradient ascent on the sum rate, a GRU
//! network in the same slot as the CfC network, and a matched-filter floor.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bf::{self, PrecoderMats};
use crate::channel::standard_complex_gaussian;
use crate::diff::{
    lift_matrix, per_user_rates_g, project_and_normalize_g, sum_g, Ctx, CxMat, CxS, F64Ctx, Tape,
};
use crate::error::{Error, Result};
use crate::lnn::{self, CellKind, Episode, NetState, NetworkParams, TrainConfig, TrainMetrics, TrainState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdInit {
    MatchedFilter,
    Random,
}

/// Settings of the gradient-ascent precoder.
///
/// This is a plain best-iterate ascent on `R(Ĥ, W(X))` with the power
/// constraint re-applied every iteration; it stands in for learning-aided
/// gradient methods whose internals are not specified here, and is labeled
/// "gd" in all outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GDConfig {
    pub n_iters: usize,
    pub step_size: f64,
    pub init: GdInit,
}

impl Default for GDConfig {
    fn default() -> Self {
        Self { n_iters: 100, step_size: 0.05, init: GdInit::MatchedFilter }
    }
}

impl GDConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters < 1 {
            return Err(Error::InvalidConfig("n_iters must be at least 1".into()));
        }
        if !(self.step_size >= 0.0) {
            return Err(Error::InvalidConfig("step_size must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Matched-filter base matrix: column k selects the first receive antenna of
/// user k's block, so `W = ĤᴴX` beamforms toward each user in turn.
pub fn mrt_base_matrix(n: usize, k_users: usize) -> DMatrix<Complex64> {
    assert!(k_users > 0 && n % k_users == 0, "N must split evenly across users");
    let n_k = n / k_users;
    DMatrix::from_fn(n, k_users, |r, c| {
        if r == c * n_k {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// The non-learned floor: matched filter per user, power-normalized.
pub fn mrt_precoder(h_hat: &DMatrix<Complex64>, k_users: usize, p: f64) -> Result<PrecoderMats> {
    let x = mrt_base_matrix(h_hat.nrows(), k_users);
    bf::apply_power_constraint(h_hat, &x, p)
}

/// SE of a candidate base matrix through the shared differentiable kernels.
fn se_of_base(h_hat: &DMatrix<Complex64>, x: &DMatrix<Complex64>, sigma2: f64, p: f64) -> Result<f64> {
    let mut ctx = F64Ctx;
    let hg = lift_matrix(&mut ctx, h_hat);
    let xg = lift_matrix(&mut ctx, x);
    let wg = project_and_normalize_g(&mut ctx, &hg, &xg, p)?;
    let rates = per_user_rates_g(&mut ctx, &hg, &wg, sigma2);
    Ok(sum_g(&mut ctx, &rates))
}

/// Gradient-ascent precoder, returning the SE trace of every iterate
/// (initialization first). The returned precoder is the best iterate.
pub fn gd_precoder_with_trace(
    h_hat: &DMatrix<Complex64>,
    k_users: usize,
    cfg: &GDConfig,
    sigma2: f64,
    p: f64,
    rng: &mut impl Rng,
) -> Result<(PrecoderMats, Vec<f64>)> {
    cfg.validate()?;
    let n = h_hat.nrows();

    // Initialization, re-drawing on a degenerate projection.
    let mut x = match cfg.init {
        GdInit::MatchedFilter => mrt_base_matrix(n, k_users),
        GdInit::Random => standard_complex_gaussian(n, k_users, rng),
    };
    let mut tries = 0;
    while bf::apply_power_constraint(h_hat, &x, p).is_err() {
        tries += 1;
        if tries > 8 {
            return Err(Error::DegeneratePrecoder);
        }
        x = standard_complex_gaussian(n, k_users, rng);
    }

    let mut trace = Vec::with_capacity(cfg.n_iters + 1);
    let mut best_se = se_of_base(h_hat, &x, sigma2, p)?;
    let mut best_x = x.clone();
    trace.push(best_se);

    let mut tape = Tape::new();
    for _ in 0..cfg.n_iters {
        tape.clear();
        let hg = lift_matrix(&mut tape, h_hat);
        let mut leaves = Vec::with_capacity(2 * n * k_users);
        let xg = CxMat::from_fn(n, k_users, |r, c| {
            let z = x[(r, c)];
            let re = tape.leaf(z.re);
            let im = tape.leaf(z.im);
            leaves.push((re, im));
            CxS::new(re, im)
        });
        let wg = match project_and_normalize_g(&mut tape, &hg, &xg, p) {
            Ok(w) => w,
            // Ascent walked into the degenerate point; keep the best so far.
            Err(Error::DegeneratePrecoder) => break,
            Err(e) => return Err(e),
        };
        let rates = per_user_rates_g(&mut tape, &hg, &wg, sigma2);
        let se = sum_g(&mut tape, &rates);
        let grads = tape.backward(se);

        let mut leaf_iter = leaves.iter();
        for r in 0..n {
            for c in 0..k_users {
                let (re_id, im_id) = leaf_iter.next().unwrap();
                x[(r, c)].re += cfg.step_size * grads.get(*re_id);
                x[(r, c)].im += cfg.step_size * grads.get(*im_id);
            }
        }

        let se_next = se_of_base(h_hat, &x, sigma2, p)?;
        trace.push(se_next);
        if se_next > best_se {
            best_se = se_next;
            best_x = x.clone();
        }
    }

    let pm = bf::apply_power_constraint(h_hat, &best_x, p)?;
    Ok((pm, trace))
}

/// Best-iterate gradient ascent on the estimated-channel sum rate.
pub fn gd_precoder(
    h_hat: &DMatrix<Complex64>,
    k_users: usize,
    cfg: &GDConfig,
    sigma2: f64,
    p: f64,
    rng: &mut impl Rng,
) -> Result<PrecoderMats> {
    gd_precoder_with_trace(h_hat, k_users, cfg, sigma2, p, rng).map(|(pm, _)| pm)
}

/// GRU forward pass; identical I/O contract to [`lnn::lnn_forward`]
/// (the parameters carry the cell kind).
pub fn gru_forward(
    h_norm: &DMatrix<Complex64>,
    state: &NetState,
    t: f64,
    params: &NetworkParams,
) -> (DMatrix<Complex64>, NetState) {
    assert_eq!(params.cell, CellKind::Gru, "gru_forward expects GRU parameters");
    lnn::lnn_forward(h_norm, state, t, params)
}

/// GRU training with the exact training protocol of the liquid network.
pub fn gru_train(
    episodes: &[Episode],
    k_users: usize,
    sigma2: f64,
    p: f64,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(NetworkParams, TrainState, TrainMetrics)> {
    lnn::train(CellKind::Gru, episodes, k_users, sigma2, p, cfg, rng)
}
