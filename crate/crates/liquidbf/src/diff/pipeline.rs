//! The differentiable half of the precoding chain: row-space projection,
//! sum-power normalization, determinant-based per-user rates, and the
//! fairness loss. Mirrors the plain-matrix implementations in [`crate::bf`];
//! the two are pinned together by tests.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::cx::{
    cx_const, cx_mul_acc, cx_mul_conj_acc, cx_norm_sqr, cx_scale_real, cx_sub, cx_zero, CxMat, CxS,
};
use super::tape::Ctx;
use crate::error::{Error, Result};

/// Lifts a concrete complex matrix into the context as constants.
pub fn lift_matrix<C: Ctx>(ctx: &mut C, m: &DMatrix<Complex64>) -> CxMat<C::S> {
    CxMat::from_fn(m.nrows(), m.ncols(), |r, c| cx_const(ctx, m[(r, c)]))
}

/// `W = √(P/Tr(ĤᴴX(ĤᴴX)ᴴ)) · ĤᴴX` on the context.
///
/// `h` is N × M, `x` is N × K; the result is M × K with trace power exactly
/// `p`. A zero projection is a degenerate precoder, same as the plain path.
pub fn project_and_normalize_g<C: Ctx>(
    ctx: &mut C,
    h: &CxMat<C::S>,
    x: &CxMat<C::S>,
    p: f64,
) -> Result<CxMat<C::S>> {
    assert_eq!(h.rows, x.rows, "projection needs an N×M channel and N×K base");
    let (m, k_users) = (h.cols, x.cols);

    let mut w_raw = Vec::with_capacity(m * k_users);
    for mi in 0..m {
        for ki in 0..k_users {
            let mut acc = cx_zero(ctx);
            for ni in 0..h.rows {
                // conj(h[n][m]) · x[n][k]
                acc = cx_mul_conj_acc(ctx, x.get(ni, ki), h.get(ni, mi), acc);
            }
            w_raw.push(acc);
        }
    }
    let w_raw = CxMat { rows: m, cols: k_users, data: w_raw };

    let mut trace = ctx.c(0.0);
    for z in &w_raw.data {
        let n = cx_norm_sqr(ctx, *z);
        trace = ctx.add(trace, n);
    }
    if ctx.value(trace) == 0.0 {
        return Err(Error::DegeneratePrecoder);
    }
    let p_node = ctx.c(p);
    let ratio = ctx.div(p_node, trace);
    let scale = ctx.sqrt(ratio);
    let data = w_raw.data.iter().map(|z| cx_scale_real(ctx, *z, scale)).collect();
    Ok(CxMat { rows: m, cols: k_users, data })
}

/// ln det of a Hermitian positive-definite context matrix via Cholesky.
///
/// Only the real part of the diagonal participates, matching the Hermitian
/// structure of the rate covariances.
fn ln_det_hpd_g<C: Ctx>(ctx: &mut C, a: &CxMat<C::S>) -> C::S {
    let n = a.rows;
    assert_eq!(n, a.cols);
    let mut l: Vec<CxS<C::S>> = a.data.clone();
    let mut diag: Vec<C::S> = Vec::with_capacity(n);
    let mut ln_acc = ctx.c(0.0);
    for j in 0..n {
        let mut d = a.get(j, j).re;
        for t in 0..j {
            let n2 = cx_norm_sqr(ctx, l[j * n + t]);
            d = ctx.sub(d, n2);
        }
        let lj = ctx.sqrt(d);
        diag.push(lj);
        let lnl = ctx.ln(lj);
        ln_acc = ctx.add(ln_acc, lnl);
        for i in (j + 1)..n {
            let mut num = a.get(i, j);
            for t in 0..j {
                let prod_re = {
                    // l[i][t] · conj(l[j][t])
                    let zero = cx_zero(ctx);
                    cx_mul_conj_acc(ctx, l[i * n + t], l[j * n + t], zero)
                };
                num = cx_sub(ctx, num, prod_re);
            }
            l[i * n + j] = CxS { re: ctx.div(num.re, lj), im: ctx.div(num.im, lj) };
        }
    }
    ctx.scale(ln_acc, 2.0)
}

/// Per-user rates `log2 det(I + γ_k)` on the context, clamped at zero.
///
/// Identical two-determinant evaluation to [`crate::bf::per_user_rates`];
/// the user block height is `h.rows / w.cols`.
pub fn per_user_rates_g<C: Ctx>(
    ctx: &mut C,
    h: &CxMat<C::S>,
    w: &CxMat<C::S>,
    sigma2: f64,
) -> Vec<C::S> {
    assert!(sigma2 > 0.0, "sigma2 must be positive");
    assert_eq!(h.cols, w.rows, "channel/precoder dimension mismatch");
    let k_users = w.cols;
    assert!(k_users > 0 && h.rows % k_users == 0, "stacked channel rows must split across users");
    let n_k = h.rows / k_users;

    let mut rates = Vec::with_capacity(k_users);
    for k in 0..k_users {
        // Effective per-stream receive vectors v_j = H_k w_j.
        let mut v: Vec<Vec<CxS<C::S>>> = Vec::with_capacity(k_users);
        for j in 0..k_users {
            let mut col = Vec::with_capacity(n_k);
            for r in 0..n_k {
                let mut acc = cx_zero(ctx);
                for mi in 0..h.cols {
                    acc = cx_mul_acc(ctx, h.get(k * n_k + r, mi), w.get(mi, j), acc);
                }
                col.push(acc);
            }
            v.push(col);
        }

        // B = σ²I + Σ_{j≠k} v_j v_jᴴ, then A = B + v_k v_kᴴ.
        let mut b = CxMat::from_fn(n_k, n_k, |r, c| {
            if r == c {
                cx_const(ctx, Complex64::new(sigma2, 0.0))
            } else {
                cx_zero(ctx)
            }
        });
        for (j, vj) in v.iter().enumerate() {
            if j == k {
                continue;
            }
            for r in 0..n_k {
                for c2 in 0..n_k {
                    let updated = cx_mul_conj_acc(ctx, vj[r], vj[c2], b.get(r, c2));
                    b.set(r, c2, updated);
                }
            }
        }
        let mut a = b.clone();
        for r in 0..n_k {
            for c2 in 0..n_k {
                let updated = cx_mul_conj_acc(ctx, v[k][r], v[k][c2], a.get(r, c2));
                a.set(r, c2, updated);
            }
        }

        let ln_a = ln_det_hpd_g(ctx, &a);
        let ln_b = ln_det_hpd_g(ctx, &b);
        let diff = ctx.sub(ln_a, ln_b);
        let rate = ctx.scale(diff, 1.0 / std::f64::consts::LN_2);
        rates.push(ctx.max_const(rate, 0.0));
    }
    rates
}

/// Fairness loss `L = −Σ_k ln(max(ε, R_k))`.
pub fn log_loss_g<C: Ctx>(ctx: &mut C, rates: &[C::S], eps: f64) -> C::S {
    assert!(eps > 0.0, "loss floor must be positive");
    let mut acc = ctx.c(0.0);
    for &r in rates {
        let floored = ctx.max_const(r, eps);
        let l = ctx.ln(floored);
        acc = ctx.add(acc, l);
    }
    ctx.neg(acc)
}

/// Sum of context scalars.
pub fn sum_g<C: Ctx>(ctx: &mut C, xs: &[C::S]) -> C::S {
    let mut acc = ctx.c(0.0);
    for &x in xs {
        acc = ctx.add(acc, x);
    }
    acc
}
