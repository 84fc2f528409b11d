//! Liquid (closed-form continuous-time) network digital beamformer.
//!
//! The trainable cell is the gated closed form
//!
//! ```text
//! x' = σ(−f(x,i)·t) ⊙ g(x,i) + (1 − σ(−f(x,i)·t)) ⊙ h(x,i)
//! ```
//!
//! with three dense heads over the concatenated `[state, input]` vector: `f`
//! (softplus, the nonnegative decay rate), `g` and `h` (tanh, the learned
//! endpoints the gate blends between). Three such layers feed a linear head
//! that emits the base matrix X for the row-space precoder.
//!
//! [`ltc_ode_integrate`] and [`ltc_closed_form`] keep the underlying
//! liquid-time-constant dynamics around as a reference pair: the relaxation
//! ODE `dx/dt = −(o_τ + f(i(t))) ⊙ (x − a)` and its exact integrating-factor
//! solution, which the gated cell replaces with learned sigmoid gates.
//!
//! Everything here is deterministic given parameters, inputs, and the named
//! RNG stream used for initialization.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use train::{train, ChannelSnapshot, Episode, TrainConfig, TrainMetrics};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bf;
use crate::diff::{
    log_loss_g, per_user_rates_g, project_and_normalize_g, sum_g, CxMat, CxS, Ctx, F64Ctx, Tape,
};
use crate::error::{Error, Result};

/// Parameters of the liquid-time-constant reference dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LTCParams {
    /// Elementwise leak rate, strictly positive.
    pub o_tau: Vec<f64>,
    /// Relaxation target (bias).
    pub a: Vec<f64>,
    /// Output gain of the gated closed-form variant; carried for parameter
    /// completeness, the relaxation dynamics do not use it.
    pub b: Vec<f64>,
}

impl LTCParams {
    pub fn validate(&self) -> Result<()> {
        if self.a.len() != self.o_tau.len() || self.b.len() != self.o_tau.len() {
            return Err(Error::DimensionMismatch("LTC parameter vectors must share a length".into()));
        }
        if self.o_tau.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidConfig("o_tau must be positive elementwise".into()));
        }
        Ok(())
    }
}

/// Fourth-order Runge–Kutta integration of the liquid relaxation dynamics
/// `dx/dt = −(o_τ + f(i(t))) ⊙ (x − a)` from 0 to `t_end`.
///
/// `input_fn` supplies the exogenous input at a given time and `head_f` maps
/// it to the nonnegative per-neuron rate modulation. Reference oracle only;
/// the trainable path never integrates.
pub fn ltc_ode_integrate(
    x0: &[f64],
    input_fn: impl Fn(f64) -> Vec<f64>,
    params: &LTCParams,
    head_f: impl Fn(&[f64]) -> Vec<f64>,
    t_end: f64,
    dt: f64,
) -> Vec<f64> {
    assert!(dt > 0.0 && t_end >= 0.0, "need dt > 0 and t_end >= 0");
    assert_eq!(x0.len(), params.o_tau.len(), "state/parameter length mismatch");
    let deriv = |t: f64, x: &[f64]| -> Vec<f64> {
        let f_val = head_f(&input_fn(t));
        x.iter()
            .zip(&params.o_tau)
            .zip(&params.a)
            .zip(&f_val)
            .map(|(((&xi, &tau), &ai), &fi)| -(tau + fi) * (xi - ai))
            .collect()
    };

    let mut x = x0.to_vec();
    let mut t = 0.0;
    while t < t_end {
        let h = dt.min(t_end - t);
        let k1 = deriv(t, &x);
        let x2: Vec<f64> = x.iter().zip(&k1).map(|(xi, ki)| xi + 0.5 * h * ki).collect();
        let k2 = deriv(t + 0.5 * h, &x2);
        let x3: Vec<f64> = x.iter().zip(&k2).map(|(xi, ki)| xi + 0.5 * h * ki).collect();
        let k3 = deriv(t + 0.5 * h, &x3);
        let x4: Vec<f64> = x.iter().zip(&k3).map(|(xi, ki)| xi + h * ki).collect();
        let k4 = deriv(t + h, &x4);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
    }
    x
}

/// Exact constant-input solution of the relaxation dynamics:
/// `x(t) = (x0 − a) ⊙ exp(−(o_τ + f_val)·t) + a`.
pub fn ltc_closed_form(x0: &[f64], a: &[f64], o_tau: &[f64], f_val: &[f64], t: f64) -> Vec<f64> {
    assert!(t >= 0.0, "time must be nonnegative");
    x0.iter()
        .zip(a)
        .zip(o_tau)
        .zip(f_val)
        .map(|(((&xi, &ai), &tau), &fi)| (xi - ai) * (-(tau + fi) * t).exp() + ai)
        .collect()
}

/// One dense head: row-major weights `out_dim × in_dim` plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseHead {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseHead {
    fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            w: (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect(),
            b: (0..out_dim).map(|_| rng.gen_range(-bound..bound)).collect(),
            in_dim,
            out_dim,
        }
    }

    fn zeroed(in_dim: usize, out_dim: usize) -> Self {
        Self { w: vec![0.0; in_dim * out_dim], b: vec![0.0; out_dim], in_dim, out_dim }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// The three heads of one closed-form liquid layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfCLayerParams {
    /// Decay-rate head (softplus output).
    pub f: DenseHead,
    /// Gate target for σ(−f·t) → 1 (tanh output).
    pub g: DenseHead,
    /// Gate target for σ(−f·t) → 0 (tanh output).
    pub h: DenseHead,
}

/// The three gates of one GRU layer, shape-matched to [`CfCLayerParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruLayerParams {
    pub update: DenseHead,
    pub reset: DenseHead,
    pub candidate: DenseHead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerParams {
    Cfc(CfCLayerParams),
    Gru(GruLayerParams),
}

impl LayerParams {
    fn heads(&self) -> [&DenseHead; 3] {
        match self {
            LayerParams::Cfc(l) => [&l.f, &l.g, &l.h],
            LayerParams::Gru(l) => [&l.update, &l.reset, &l.candidate],
        }
    }

    fn heads_mut(&mut self) -> [&mut DenseHead; 3] {
        match self {
            LayerParams::Cfc(l) => [&mut l.f, &mut l.g, &mut l.h],
            LayerParams::Gru(l) => [&mut l.update, &mut l.reset, &mut l.candidate],
        }
    }
}

/// Which recurrent cell a network is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Cfc,
    Gru,
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellKind::Cfc => "cfc",
            CellKind::Gru => "gru",
        })
    }
}

/// Full parameter set: stacked recurrent layers plus the linear output head
/// that emits 2·N·K reals, reinterpreted as the complex base matrix X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub cell: CellKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: Vec<LayerParams>,
    pub out: DenseHead,
    pub out_dim: usize,
}

impl NetworkParams {
    /// Uniform(−1/√fan_in, 1/√fan_in) initialization of all heads.
    pub fn init(
        cell: CellKind,
        input_dim: usize,
        hidden: usize,
        n_layers: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(n_layers >= 1 && hidden >= 1 && input_dim >= 1 && out_dim >= 1);
        let mut layers = Vec::with_capacity(n_layers);
        for li in 0..n_layers {
            let c = if li == 0 { input_dim } else { hidden };
            let in_dim = c + hidden;
            let mk = |rng: &mut _| DenseHead::init(in_dim, hidden, rng);
            layers.push(match cell {
                CellKind::Cfc => LayerParams::Cfc(CfCLayerParams {
                    f: mk(rng),
                    g: mk(rng),
                    h: mk(rng),
                }),
                CellKind::Gru => LayerParams::Gru(GruLayerParams {
                    update: mk(rng),
                    reset: mk(rng),
                    candidate: mk(rng),
                }),
            });
        }
        let out = DenseHead::init(hidden, out_dim, rng);
        Self { cell, input_dim, hidden, layers, out, out_dim }
    }

    /// Same shapes as [`NetworkParams::init`] with all parameters zero.
    pub fn zeroed(
        cell: CellKind,
        input_dim: usize,
        hidden: usize,
        n_layers: usize,
        out_dim: usize,
    ) -> Self {
        let mut layers = Vec::with_capacity(n_layers);
        for li in 0..n_layers {
            let in_dim = if li == 0 { input_dim } else { hidden } + hidden;
            let mk = || DenseHead::zeroed(in_dim, hidden);
            layers.push(match cell {
                CellKind::Cfc => LayerParams::Cfc(CfCLayerParams { f: mk(), g: mk(), h: mk() }),
                CellKind::Gru => {
                    LayerParams::Gru(GruLayerParams { update: mk(), reset: mk(), candidate: mk() })
                }
            });
        }
        let out = DenseHead::zeroed(hidden, out_dim);
        Self { cell, input_dim, hidden, layers, out, out_dim }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.heads().iter().map(|h| h.param_count()).sum::<usize>()).sum::<usize>()
            + self.out.param_count()
    }

    fn ordered_heads(&self) -> Vec<&DenseHead> {
        let mut v: Vec<&DenseHead> = Vec::with_capacity(3 * self.layers.len() + 1);
        for layer in &self.layers {
            v.extend(layer.heads());
        }
        v.push(&self.out);
        v
    }

    fn ordered_heads_mut(&mut self) -> Vec<&mut DenseHead> {
        let mut v: Vec<&mut DenseHead> = Vec::with_capacity(3 * self.layers.len() + 1);
        for layer in &mut self.layers {
            v.extend(layer.heads_mut());
        }
        v.push(&mut self.out);
        v
    }

    /// Canonical flat layout: layers in order, heads in order, weights before
    /// bias. Adam state, checkpoints, and tape leaves all share this order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for head in self.ordered_heads() {
            flat.extend_from_slice(&head.w);
            flat.extend_from_slice(&head.b);
        }
        flat
    }

    /// Overwrites all parameters from the canonical flat layout.
    pub fn copy_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut cursor = 0;
        for head in self.ordered_heads_mut() {
            let w_len = head.w.len();
            head.w.copy_from_slice(&flat[cursor..cursor + w_len]);
            cursor += w_len;
            let b_len = head.b.len();
            head.b.copy_from_slice(&flat[cursor..cursor + b_len]);
            cursor += b_len;
        }
        Ok(())
    }

    /// Visits every parameter mutably in the canonical order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for head in self.ordered_heads_mut() {
            for w in &mut head.w {
                f(w);
            }
            for b in &mut head.b {
                f(b);
            }
        }
    }
}

/// Carried hidden state, one vector per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetState(pub Vec<Vec<f64>>);

impl NetState {
    pub fn zeros(params: &NetworkParams) -> Self {
        Self(vec![vec![0.0; params.hidden]; params.n_layers()])
    }
}

/// Borrowed view of one head's parameters in some context.
#[derive(Clone, Copy)]
struct HeadS<'a, S: Copy> {
    w: &'a [S],
    b: &'a [S],
    in_dim: usize,
}

fn dense_apply<C: Ctx>(ctx: &mut C, head: HeadS<'_, C::S>, input: &[C::S]) -> Vec<C::S> {
    assert_eq!(input.len(), head.in_dim, "dense head input width mismatch");
    let out_dim = head.b.len();
    let mut out = Vec::with_capacity(out_dim);
    for r in 0..out_dim {
        let row = &head.w[r * head.in_dim..(r + 1) * head.in_dim];
        let mut acc = head.b[r];
        for (w, x) in row.iter().zip(input) {
            acc = ctx.fma(*w, *x, acc);
        }
        out.push(acc);
    }
    out
}

/// One closed-form liquid step: gate = σ(−softplus(f)·t) blends the tanh
/// outputs of g and h. Heads read the concatenated `[state, input]`.
fn cfc_cell_g<C: Ctx>(
    ctx: &mut C,
    f: HeadS<'_, C::S>,
    g: HeadS<'_, C::S>,
    h: HeadS<'_, C::S>,
    state: &[C::S],
    input: &[C::S],
    t: f64,
) -> Vec<C::S> {
    let cat: Vec<C::S> = state.iter().chain(input.iter()).copied().collect();
    let f_pre = dense_apply(ctx, f, &cat);
    let g_pre = dense_apply(ctx, g, &cat);
    let h_pre = dense_apply(ctx, h, &cat);
    (0..f_pre.len())
        .map(|i| {
            let rate = ctx.softplus(f_pre[i]);
            let neg_ft = ctx.scale(rate, -t);
            let gate = ctx.sigmoid(neg_ft);
            let g_act = ctx.tanh(g_pre[i]);
            let h_act = ctx.tanh(h_pre[i]);
            // gate·g + (1−gate)·h, as gate·(g−h) + h
            let diff = ctx.sub(g_act, h_act);
            ctx.fma(gate, diff, h_act)
        })
        .collect()
}

/// One GRU step with the same `[state, input]` concatenation convention.
fn gru_cell_g<C: Ctx>(
    ctx: &mut C,
    update: HeadS<'_, C::S>,
    reset: HeadS<'_, C::S>,
    candidate: HeadS<'_, C::S>,
    state: &[C::S],
    input: &[C::S],
) -> Vec<C::S> {
    let cat: Vec<C::S> = state.iter().chain(input.iter()).copied().collect();
    let z_pre = dense_apply(ctx, update, &cat);
    let r_pre = dense_apply(ctx, reset, &cat);
    let r: Vec<C::S> = r_pre.iter().map(|&p| ctx.sigmoid(p)).collect();
    let gated: Vec<C::S> = state
        .iter()
        .zip(&r)
        .map(|(&s, &ri)| ctx.mul(ri, s))
        .chain(input.iter().copied())
        .collect();
    let n_pre = dense_apply(ctx, candidate, &gated);
    (0..z_pre.len())
        .map(|i| {
            let z = ctx.sigmoid(z_pre[i]);
            let n = ctx.tanh(n_pre[i]);
            // z·state + (1−z)·n, as z·(state−n) + n
            let diff = ctx.sub(state[i], n);
            ctx.fma(z, diff, n)
        })
        .collect()
}

/// Generic three-layer forward: layer ℓ consumes its own carried state and
/// the previous layer's fresh state; the linear head maps the top state to
/// the output reals. `state` is replaced by the new per-layer states.
fn network_forward_g<C: Ctx>(
    ctx: &mut C,
    cell: CellKind,
    layers: &[[HeadS<'_, C::S>; 3]],
    out: HeadS<'_, C::S>,
    state: &mut Vec<Vec<C::S>>,
    features: &[C::S],
    t: f64,
) -> Vec<C::S> {
    assert_eq!(layers.len(), state.len(), "state/layer count mismatch");
    let mut input: Vec<C::S> = features.to_vec();
    for (li, heads) in layers.iter().enumerate() {
        let new_state = match cell {
            CellKind::Cfc => cfc_cell_g(ctx, heads[0], heads[1], heads[2], &state[li], &input, t),
            CellKind::Gru => gru_cell_g(ctx, heads[0], heads[1], heads[2], &state[li], &input),
        };
        state[li] = new_state.clone();
        input = new_state;
    }
    dense_apply(ctx, out, &input)
}

fn head_view(head: &DenseHead) -> HeadS<'_, f64> {
    HeadS { w: &head.w, b: &head.b, in_dim: head.in_dim }
}

fn param_views(params: &NetworkParams) -> (Vec<[HeadS<'_, f64>; 3]>, HeadS<'_, f64>) {
    let layers = params
        .layers
        .iter()
        .map(|l| {
            let [a, b, c] = l.heads();
            [head_view(a), head_view(b), head_view(c)]
        })
        .collect();
    (layers, head_view(&params.out))
}

/// Flattens a normalized channel to the network input: real parts in
/// row-major order, then imaginary parts in row-major order.
pub fn channel_features(h_norm: &DMatrix<Complex64>) -> Vec<f64> {
    let (n, m) = h_norm.shape();
    let mut feats = Vec::with_capacity(2 * n * m);
    for r in 0..n {
        for c in 0..m {
            feats.push(h_norm[(r, c)].re);
        }
    }
    for r in 0..n {
        for c in 0..m {
            feats.push(h_norm[(r, c)].im);
        }
    }
    feats
}

/// Reinterprets the output head's reals as a complex N×K base matrix:
/// first N·K entries are real parts (row-major), the rest imaginary parts.
pub fn output_to_base_matrix(out: &[f64], n: usize, k: usize) -> DMatrix<Complex64> {
    assert_eq!(out.len(), 2 * n * k, "output head width must be 2·N·K");
    DMatrix::from_fn(n, k, |r, c| Complex64::new(out[r * k + c], out[n * k + r * k + c]))
}

/// Plain single-layer step, the public form of the gated cell.
pub fn cfc_cell_forward(state: &[f64], input: &[f64], t: f64, layer: &CfCLayerParams) -> Vec<f64> {
    cfc_cell_g(
        &mut F64Ctx,
        head_view(&layer.f),
        head_view(&layer.g),
        head_view(&layer.h),
        state,
        input,
        t,
    )
}

/// Plain GRU step with the same contract as [`cfc_cell_forward`].
pub fn gru_cell_forward(state: &[f64], input: &[f64], layer: &GruLayerParams) -> Vec<f64> {
    gru_cell_g(
        &mut F64Ctx,
        head_view(&layer.update),
        head_view(&layer.reset),
        head_view(&layer.candidate),
        state,
        input,
    )
}

/// Full network forward on a normalized channel estimate.
///
/// Returns the complex base matrix X (N × K, with K inferred from the output
/// width) and the advanced hidden state. Deterministic in all arguments.
pub fn lnn_forward(
    h_norm: &DMatrix<Complex64>,
    state: &NetState,
    t: f64,
    params: &NetworkParams,
) -> (DMatrix<Complex64>, NetState) {
    let feats = channel_features(h_norm);
    assert_eq!(
        feats.len(),
        params.input_dim,
        "channel features ({}) do not match the network input width ({})",
        feats.len(),
        params.input_dim
    );
    let n = h_norm.nrows();
    assert_eq!(params.out_dim % (2 * n), 0, "output width must be 2·N·K");
    let k = params.out_dim / (2 * n);

    let (layers, out_head) = param_views(params);
    let mut st = state.0.clone();
    let out = network_forward_g(&mut F64Ctx, params.cell, &layers, out_head, &mut st, &feats, t);
    (output_to_base_matrix(&out, n, k), NetState(st))
}

/// Fairness loss `−Σ_k ln(max(ε, R_k))` on plain rates.
pub fn log_loss(rates: &[f64], eps: f64) -> f64 {
    log_loss_g(&mut F64Ctx, rates, eps)
}

/// Everything the training step needs from one taped pass on one pattern.
#[derive(Debug)]
pub struct SnapshotGrad {
    pub loss: f64,
    pub se_est: f64,
    pub rates_est: Vec<f64>,
    /// d loss / d params in the canonical flat order.
    pub grads: Vec<f64>,
    pub new_state: NetState,
}

struct LiftedHead {
    w: Vec<crate::diff::NodeId>,
    b: Vec<crate::diff::NodeId>,
    in_dim: usize,
}

fn lift_network(
    tape: &mut Tape,
    params: &NetworkParams,
) -> (Vec<[LiftedHead; 3]>, LiftedHead, Vec<crate::diff::NodeId>) {
    let mut order = Vec::with_capacity(params.param_count());
    let mut lift_head = |tape: &mut Tape, head: &DenseHead| -> LiftedHead {
        let w: Vec<_> = head.w.iter().map(|&v| tape.leaf(v)).collect();
        let b: Vec<_> = head.b.iter().map(|&v| tape.leaf(v)).collect();
        order.extend_from_slice(&w);
        order.extend_from_slice(&b);
        LiftedHead { w, b, in_dim: head.in_dim }
    };
    let layers: Vec<[LiftedHead; 3]> = params
        .layers
        .iter()
        .map(|l| {
            let [a, b, c] = l.heads();
            [lift_head(tape, a), lift_head(tape, b), lift_head(tape, c)]
        })
        .collect();
    let out = lift_head(tape, &params.out);
    (layers, out, order)
}

fn lifted_view(h: &LiftedHead) -> HeadS<'_, crate::diff::NodeId> {
    HeadS { w: &h.w, b: &h.b, in_dim: h.in_dim }
}

/// Runs the full differentiable chain for one (snapshot, pattern) pair.
///
/// The incoming hidden state enters as a constant, so gradients are truncated
/// at snapshot boundaries. Non-finite loss or gradients are surfaced as a
/// training fault.
#[allow(clippy::too_many_arguments)]
pub fn snapshot_loss_and_gradients(
    params: &NetworkParams,
    h_hat: &DMatrix<Complex64>,
    state: &NetState,
    t: f64,
    sigma2: f64,
    p: f64,
    loss_eps: f64,
) -> Result<SnapshotGrad> {
    let mut tape = Tape::new();
    let (layers, out_head, order) = lift_network(&mut tape, params);
    let layer_views: Vec<[HeadS<'_, crate::diff::NodeId>; 3]> = layers
        .iter()
        .map(|l| [lifted_view(&l[0]), lifted_view(&l[1]), lifted_view(&l[2])])
        .collect();

    let sigma = sigma2.sqrt();
    let feats_vals = channel_features(&h_hat.map(|z| z / sigma));
    let feats: Vec<_> = feats_vals.iter().map(|&v| tape.c(v)).collect();
    let mut st: Vec<Vec<_>> =
        state.0.iter().map(|layer| layer.iter().map(|&v| tape.c(v)).collect()).collect();

    let out = network_forward_g(
        &mut tape,
        params.cell,
        &layer_views,
        lifted_view(&out_head),
        &mut st,
        &feats,
        t,
    );

    let n = h_hat.nrows();
    let k = params.out_dim / (2 * n);
    let x = CxMat::from_fn(n, k, |r, c| CxS::new(out[r * k + c], out[n * k + r * k + c]));
    let h_lift = crate::diff::lift_matrix(&mut tape, h_hat);
    let w = project_and_normalize_g(&mut tape, &h_lift, &x, p)?;
    let rates = per_user_rates_g(&mut tape, &h_lift, &w, sigma2);
    let se = sum_g(&mut tape, &rates);
    let loss = log_loss_g(&mut tape, &rates, loss_eps);

    let grads_all = tape.backward(loss);
    let grads: Vec<f64> = order.iter().map(|&id| grads_all.get(id)).collect();
    let loss_val = tape.value(loss);
    if !loss_val.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::TrainingDiverged {
            step: 0,
            detail: format!("non-finite loss ({loss_val}) or gradients"),
        });
    }

    Ok(SnapshotGrad {
        loss: loss_val,
        se_est: tape.value(se),
        rates_est: rates.iter().map(|&r| tape.value(r)).collect(),
        grads,
        new_state: NetState(
            st.iter().map(|layer| layer.iter().map(|&s| tape.value(s)).collect()).collect(),
        ),
    })
}

/// The same loss evaluated without recording, for finite-difference probes.
/// Shares every scalar kernel with the taped path, so values agree bitwise.
pub fn snapshot_loss(
    params: &NetworkParams,
    h_hat: &DMatrix<Complex64>,
    state: &NetState,
    t: f64,
    sigma2: f64,
    p: f64,
    loss_eps: f64,
) -> Result<f64> {
    let mut ctx = F64Ctx;
    let (layers, out_head) = param_views(params);
    let sigma = sigma2.sqrt();
    let feats = channel_features(&h_hat.map(|z| z / sigma));
    let mut st = state.0.clone();
    let out = network_forward_g(&mut ctx, params.cell, &layers, out_head, &mut st, &feats, t);

    let n = h_hat.nrows();
    let k = params.out_dim / (2 * n);
    let x = CxMat::from_fn(n, k, |r, c| CxS::new(out[r * k + c], out[n * k + r * k + c]));
    let h_lift = crate::diff::lift_matrix(&mut ctx, h_hat);
    let w = project_and_normalize_g(&mut ctx, &h_lift, &x, p)?;
    let rates = per_user_rates_g(&mut ctx, &h_lift, &w, sigma2);
    Ok(log_loss_g(&mut ctx, &rates, loss_eps))
}

/// Adam moment buffers, step counter, and the training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub loss_eps: f64,
}

impl TrainState {
    pub fn new(param_count: usize, lr: f64, beta1: f64, beta2: f64, eps_adam: f64, loss_eps: f64) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            lr,
            beta1,
            beta2,
            eps_adam,
            loss_eps,
        }
    }

    /// One bias-corrected Adam update over flat parameter storage.
    pub fn update_flat(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len(), "Adam state sized for a different network");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps_adam);
        }
    }
}

/// One Adam step over a typed parameter set, canonical order.
pub fn adam_step(state: &mut TrainState, params: &mut NetworkParams, grads: &[f64]) {
    assert_eq!(grads.len(), params.param_count());
    assert_eq!(grads.len(), state.m.len(), "Adam state sized for a different network");
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let mut i = 0;
    params.for_each_param_mut(|p| {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps_adam);
        i += 1;
    });
}

/// Inference-side precoder evaluation for one pattern's estimate.
///
/// The forward pass emits X, the plain matrix path projects and normalizes,
/// and the estimated-channel SE comes back for analog selection.
pub struct PrecoderEval {
    pub x: DMatrix<Complex64>,
    pub w: DMatrix<Complex64>,
    pub se_est: f64,
    pub state: NetState,
}

pub fn evaluate_precoder(
    params: &NetworkParams,
    h_hat: &DMatrix<Complex64>,
    state: &NetState,
    t: f64,
    sigma2: f64,
    p: f64,
) -> Result<PrecoderEval> {
    let sigma = sigma2.sqrt();
    let h_norm = crate::channel::normalize_channel(h_hat, sigma)?;
    let (x, new_state) = lnn_forward(&h_norm, state, t, params);
    let pm = bf::apply_power_constraint(h_hat, &x, p)?;
    let se_est = bf::spectral_efficiency(h_hat, &pm.w, sigma2);
    Ok(PrecoderEval { x: pm.x, w: pm.w, se_est, state: new_state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn small_params(cell: CellKind, seed: u64) -> NetworkParams {
        NetworkParams::init(cell, 16, 6, 3, 8, &mut stream(seed, &["lnn-test"]))
    }

    #[test]
    fn ltc_pure_decay_matches_exponential() {
        let params = LTCParams { o_tau: vec![1.0], a: vec![0.0], b: vec![0.0] };
        params.validate().unwrap();
        let x = ltc_ode_integrate(&[1.0], |_| vec![0.0], &params, |_| vec![0.0], 1.0, 1e-3);
        assert_relative_eq!(x[0], (-1.0f64).exp(), epsilon = 1e-8);
        assert_relative_eq!(x[0], 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn ltc_zero_state_zero_bias_stays_zero() {
        let params = LTCParams { o_tau: vec![0.7, 1.3], a: vec![0.0, 0.0], b: vec![0.0, 0.0] };
        let x = ltc_ode_integrate(&[0.0, 0.0], |_| vec![0.4], &params, |i| vec![i[0], i[0]], 2.0, 1e-2);
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn ltc_closed_form_boundary_behavior() {
        let x0 = [0.3, -1.0];
        let a = [0.5, 0.25];
        let o_tau = [1.0, 2.0];
        let f_val = [0.2, 0.0];
        let at_zero = ltc_closed_form(&x0, &a, &o_tau, &f_val, 0.0);
        assert_eq!(at_zero, x0.to_vec());
        let at_large = ltc_closed_form(&x0, &a, &o_tau, &f_val, 100.0);
        for (x, ai) in at_large.iter().zip(&a) {
            assert_relative_eq!(x, ai, epsilon = 1e-12);
        }
    }

    #[test]
    fn rk4_matches_closed_form_for_constant_input() {
        let mut rng = stream(40, &["ltc-cf"]);
        for _ in 0..20 {
            let d = 4;
            let o_tau: Vec<f64> = (0..d).map(|_| rand::Rng::gen_range(&mut rng, 0.05..2.0)).collect();
            let a: Vec<f64> = (0..d).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            let x0: Vec<f64> = (0..d).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            let f_val: Vec<f64> = (0..d).map(|_| rand::Rng::gen_range(&mut rng, 0.0..1.5)).collect();
            let params = LTCParams { o_tau: o_tau.clone(), a: a.clone(), b: vec![0.0; d] };
            let f_ret = f_val.clone();
            let got = ltc_ode_integrate(&x0, |_| vec![0.0], &params, move |_| f_ret.clone(), 1.0, 1e-3);
            let expect = ltc_closed_form(&x0, &a, &o_tau, &f_val, 1.0);
            for (g, e) in got.iter().zip(&expect) {
                assert_relative_eq!(g, e, max_relative = 1e-6, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn cfc_cell_gate_limits() {
        // With zero f head, the gate is exactly 1/2 and x' = (g + h)/2.
        let mut layer = CfCLayerParams {
            f: DenseHead::zeroed(4, 2),
            g: DenseHead::init(4, 2, &mut stream(41, &["g"])),
            h: DenseHead::init(4, 2, &mut stream(42, &["h"])),
        };
        let state = [0.1, -0.2];
        let input = [0.3, 0.7];
        let cat: Vec<f64> = state.iter().chain(input.iter()).copied().collect();
        let out = cfc_cell_forward(&state, &input, 1.0, &layer);
        let mut ctx = F64Ctx;
        let g_out = dense_apply(&mut ctx, head_view(&layer.g), &cat);
        let h_out = dense_apply(&mut ctx, head_view(&layer.h), &cat);
        for i in 0..2 {
            // softplus(0) = ln 2, so the gate is sigmoid(-ln 2 · t); at t = 0 it is 1/2.
            let at_t0 = cfc_cell_forward(&state, &input, 0.0, &layer);
            assert_relative_eq!(at_t0[i], (g_out[i].tanh() + h_out[i].tanh()) / 2.0, epsilon = 1e-14);
            assert!(out[i].abs() <= 1.0);
        }

        // Saturate f: huge bias makes the gate vanish, so x' -> h output.
        layer.f.b = vec![1e4; 2];
        let saturated = cfc_cell_forward(&state, &input, 1.0, &layer);
        for i in 0..2 {
            assert_relative_eq!(saturated[i], h_out[i].tanh(), epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let params = small_params(CellKind::Cfc, 1);
        let h = crate::channel::standard_complex_gaussian(2, 4, &mut stream(43, &["h"]));
        let state = NetState::zeros(&params);
        let (x1, s1) = lnn_forward(&h, &state, 1.0, &params);
        let (x2, s2) = lnn_forward(&h, &state, 1.0, &params);
        assert_eq!(x1, x2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn zero_params_emit_zero_base_matrix() {
        let params = NetworkParams::zeroed(CellKind::Cfc, 16, 6, 3, 8);
        let h = crate::channel::standard_complex_gaussian(2, 4, &mut stream(44, &["h0"]));
        let state = NetState::zeros(&params);
        let (x, _) = lnn_forward(&h, &state, 1.0, &params);
        assert_eq!(x.norm_squared(), 0.0);
        // which the power constraint rejects as degenerate:
        assert!(matches!(bf::apply_power_constraint(&h, &x, 1.0), Err(Error::DegeneratePrecoder)));
    }

    #[test]
    fn carried_state_changes_the_output() {
        let params = small_params(CellKind::Cfc, 2);
        let h = crate::channel::standard_complex_gaussian(2, 4, &mut stream(45, &["hs"]));
        let mut state = NetState::zeros(&params);
        let (x_fresh, new_state) = lnn_forward(&h, &state, 1.0, &params);
        state = new_state;
        for _ in 0..4 {
            let (_, s) = lnn_forward(&h, &state, 1.0, &params);
            state = s;
        }
        let (x_evolved, _) = lnn_forward(&h, &state, 1.0, &params);
        assert!(
            (x_fresh - x_evolved).norm() > 1e-9,
            "five carried snapshots should not reproduce the fresh-state output"
        );
    }

    #[test]
    fn log_loss_reference_values() {
        assert_eq!(log_loss(&[1.0, 1.0, 1.0], 1e-6), 0.0);
        let e = std::f64::consts::E;
        assert_relative_eq!(log_loss(&[e, e], 1e-6), -2.0, max_relative = 1e-14);
        let floored = log_loss(&[0.0, 1.0], 1e-6);
        assert_relative_eq!(floored, 13.8155, max_relative = 1e-4);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut params = small_params(CellKind::Cfc, 3);
        let before = params.to_flat();
        let mut state = TrainState::new(params.param_count(), 0.01, 0.9, 0.999, 1e-8, 1e-6);
        adam_step(&mut state, &mut params, &vec![0.0; before.len()]);
        assert_eq!(params.to_flat(), before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_is_a_signed_learning_rate() {
        let mut w = [0.0f64];
        let mut state = TrainState::new(1, 0.01, 0.9, 0.999, 1e-8, 1e-6);
        state.update_flat(&mut w, &[0.5]);
        assert_relative_eq!(w[0], -0.01, max_relative = 1e-6);
    }

    #[test]
    fn flat_round_trip_preserves_params() {
        let params = small_params(CellKind::Gru, 4);
        let flat = params.to_flat();
        assert_eq!(flat.len(), params.param_count());
        let mut rebuilt = NetworkParams::zeroed(CellKind::Gru, 16, 6, 3, 8);
        rebuilt.copy_from_flat(&flat).unwrap();
        assert_eq!(rebuilt, params);
    }

    #[test]
    fn cfc_and_gru_have_identical_param_counts_at_equal_widths() {
        let cfc = small_params(CellKind::Cfc, 5);
        let gru = small_params(CellKind::Gru, 5);
        assert_eq!(cfc.param_count(), gru.param_count());
    }

    #[test]
    fn taped_loss_equals_plain_loss_bitwise() {
        let params = small_params(CellKind::Cfc, 6);
        let h = crate::channel::standard_complex_gaussian(2, 4, &mut stream(46, &["bit"]))
            .map(|z| z * 1e-3);
        let state = NetState::zeros(&params);
        let plain = snapshot_loss(&params, &h, &state, 1.0, 1e-7, 1.0, 1e-6).unwrap();
        let taped =
            snapshot_loss_and_gradients(&params, &h, &state, 1.0, 1e-7, 1.0, 1e-6).unwrap();
        assert_eq!(plain.to_bits(), taped.loss.to_bits());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn cfc_state_stays_in_the_hull_of_g_and_h(seed in 0u64..500, t in 0.0f64..3.0) {
            let mut rng = stream(seed, &["hull"]);
            let layer = CfCLayerParams {
                f: DenseHead::init(5, 3, &mut rng),
                g: DenseHead::init(5, 3, &mut rng),
                h: DenseHead::init(5, 3, &mut rng),
            };
            let state: Vec<f64> = (0..3).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            let input: Vec<f64> = (0..2).map(|_| rand::Rng::gen_range(&mut rng, -2.0..2.0)).collect();
            let cat: Vec<f64> = state.iter().chain(input.iter()).copied().collect();
            let mut ctx = F64Ctx;
            let g_out = dense_apply(&mut ctx, head_view(&layer.g), &cat);
            let h_out = dense_apply(&mut ctx, head_view(&layer.h), &cat);
            let out = cfc_cell_forward(&state, &input, t, &layer);
            for i in 0..3 {
                let (lo, hi) = {
                    let (a, b) = (g_out[i].tanh(), h_out[i].tanh());
                    (a.min(b), a.max(b))
                };
                prop_assert!(out[i] >= lo - 1e-12 && out[i] <= hi + 1e-12,
                    "coordinate {} = {} outside hull [{}, {}]", i, out[i], lo, hi);
            }
        }
    }
}
