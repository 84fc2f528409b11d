//! Finite-difference verification of the reverse-mode gradients through the
//! whole loss: fairness loss ∘ rates ∘ power constraint ∘ projection ∘
//! network.

mod support;

use liquidbf::channel::{standard_complex_gaussian, ChannelEstimate};
use liquidbf::lnn::{
    snapshot_loss, snapshot_loss_and_gradients, CellKind, NetState, NetworkParams,
};
use liquidbf::rng::stream;
use nalgebra::DMatrix;
use num_complex::Complex64;

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Central differences at step 1e-5 resolve the loss gradient to a few 1e-9
/// absolute (f64 roundoff of the loss divided by 2h). Entries below this
/// floor are therefore compared absolutely at REL_TOL·FD_FLOOR = 1e-8, an
/// order of magnitude above the observed oracle noise; entries above it get
/// the full relative check.
const FD_FLOOR: f64 = 1e-4;

fn fd_rel_err(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(FD_FLOOR)
}

struct SmallInstance {
    params: NetworkParams,
    h_hat: DMatrix<Complex64>,
    state: NetState,
    sigma2: f64,
    p: f64,
}

/// M = 8, K = 2, N_k = 2, hidden 8 — the small gradient-check instance.
fn small_instance(cell: CellKind, seed: u64) -> SmallInstance {
    let (m, k_users, n_k, hidden) = (8usize, 2usize, 2usize, 8usize);
    let n = k_users * n_k;
    let mut rng = stream(seed, &["fd-instance"]);
    let params = NetworkParams::init(cell, 2 * n * m, hidden, 3, 2 * n * k_users, &mut rng);
    // Realistic link-budget scale so the normalization/log paths are exercised.
    let h = standard_complex_gaussian(n, m, &mut rng).map(|z| z * 1e-5);
    let est = ChannelEstimate::from_unit_error(&h, -10.0, &standard_complex_gaussian(n, m, &mut rng));
    let mut state = NetState::zeros(&params);
    // A non-trivial carried state so its constants participate.
    for layer in &mut state.0 {
        for v in layer.iter_mut() {
            *v = rand::Rng::gen_range(&mut rng, -0.5..0.5);
        }
    }
    SmallInstance { params, h_hat: est.h_hat, state, sigma2: 1e-10, p: 1.0 }
}

fn check_cell(cell: CellKind, seed: u64) {
    let inst = small_instance(cell, seed);
    let grad = snapshot_loss_and_gradients(
        &inst.params,
        &inst.h_hat,
        &inst.state,
        1.0,
        inst.sigma2,
        inst.p,
        1e-6,
    )
    .unwrap();
    let fd = support::fd_network_gradient(
        &inst.params,
        &inst.h_hat,
        &inst.state,
        1.0,
        inst.sigma2,
        inst.p,
        1e-6,
        FD_STEP,
    );
    assert_eq!(grad.grads.len(), fd.len());
    let mut worst = (0.0f64, 0usize);
    for (i, (&ad, &fdg)) in grad.grads.iter().zip(fd.iter()).enumerate() {
        let err = fd_rel_err(ad, fdg);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    assert!(
        worst.0 < REL_TOL,
        "{cell:?}: worst relative gradient error {} at parameter {} (ad={}, fd={})",
        worst.0,
        worst.1,
        grad.grads[worst.1],
        fd[worst.1]
    );
}

#[test]
fn cfc_gradients_match_finite_differences() {
    check_cell(CellKind::Cfc, 200);
}

#[test]
fn gru_gradients_match_finite_differences() {
    check_cell(CellKind::Gru, 201);
}

#[test]
fn doubling_the_loss_doubles_every_gradient() {
    // Backward is linear in the seeded output: d(2L)/dθ = 2·dL/dθ exactly.
    use liquidbf::diff::{
        lift_matrix, log_loss_g, per_user_rates_g, project_and_normalize_g, Ctx, CxMat, CxS, Tape,
    };
    let mut rng = stream(205, &["double"]);
    let h = standard_complex_gaussian(4, 6, &mut rng).map(|z| z * 1e-4);
    let x0 = standard_complex_gaussian(4, 2, &mut rng);

    let mut tape = Tape::new();
    let hg = lift_matrix(&mut tape, &h);
    let mut leaves = Vec::new();
    let xg = CxMat::from_fn(4, 2, |r, c| {
        let z = x0[(r, c)];
        let re = tape.leaf(z.re);
        let im = tape.leaf(z.im);
        leaves.push(re);
        leaves.push(im);
        CxS::new(re, im)
    });
    let wg = project_and_normalize_g(&mut tape, &hg, &xg, 1.0).unwrap();
    let rates = per_user_rates_g(&mut tape, &hg, &wg, 1e-9);
    let loss = log_loss_g(&mut tape, &rates, 1e-6);
    let doubled = tape.scale(loss, 2.0);

    let g1 = tape.backward(loss);
    let g2 = tape.backward(doubled);
    for &leaf in &leaves {
        assert_eq!(g2.get(leaf), 2.0 * g1.get(leaf), "gradient must scale exactly");
    }
}

#[test]
fn gradient_of_untouched_inputs_is_zero() {
    // Zero out one input feature (one channel entry); the first-layer weight
    // columns that multiply it can no longer influence the loss.
    let mut inst = small_instance(CellKind::Cfc, 203);
    let n = inst.h_hat.nrows();
    let m = inst.h_hat.ncols();
    inst.h_hat[(0, 0)] = Complex64::new(0.0, 0.0);
    let grad = snapshot_loss_and_gradients(
        &inst.params,
        &inst.h_hat,
        &inst.state,
        1.0,
        inst.sigma2,
        inst.p,
        1e-6,
    )
    .unwrap();

    // Feature layout: re parts row-major (entry 0 is feature 0), im parts
    // after n·m. Layer-1 head weights are row-major out×in with the state
    // occupying the first `hidden` columns, features after them.
    let hidden = inst.params.hidden;
    let in_dim = hidden + 2 * n * m;
    let feature_cols = [hidden, hidden + n * m]; // re(0,0) and im(0,0)
    for head in 0..3 {
        let head_offset = head * (in_dim * hidden + hidden);
        for row in 0..hidden {
            for &col in &feature_cols {
                let idx = head_offset + row * in_dim + col;
                assert_eq!(
                    grad.grads[idx], 0.0,
                    "weight ({row},{col}) of head {head} multiplies a zero feature"
                );
            }
        }
    }
}

#[test]
fn taped_value_agrees_with_plain_value() {
    for cell in [CellKind::Cfc, CellKind::Gru] {
        let inst = small_instance(cell, 204);
        let plain =
            snapshot_loss(&inst.params, &inst.h_hat, &inst.state, 1.0, inst.sigma2, inst.p, 1e-6)
                .unwrap();
        let taped = snapshot_loss_and_gradients(
            &inst.params,
            &inst.h_hat,
            &inst.state,
            1.0,
            inst.sigma2,
            inst.p,
            1e-6,
        )
        .unwrap();
        assert_eq!(plain.to_bits(), taped.loss.to_bits());
    }
}
