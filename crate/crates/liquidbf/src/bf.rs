//! The precoding objective machinery: SINR matrices, spectral efficiency,
//! row-space projection, and exact sum-power normalization.
//!
//! All digital beamformers in this crate optimize the sum rate
//!
//! ```text
//! R = Σ_k log2 det(I + γ_k),
//! γ_k = (H_k w_k)(H_k w_k)ᴴ (Σ_{j≠k} (H_k w_j)(H_k w_j)ᴴ + σ² I)⁻¹,
//! ```
//!
//! where users' channels are stacked row blocks of equal height. The rate is
//! evaluated in the numerically stable two-determinant form
//! `log2 det(S_k + B_k) − log2 det(B_k)` through Hermitian factorizations;
//! [`sinr_matrix`] keeps the explicit-inverse form of γ_k as a cross-check
//! path. The interference-plus-noise matrix is positive definite whenever
//! σ² > 0, so both routes are total.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Base matrix, projected precoder, and the power budget they satisfy.
///
/// After [`apply_power_constraint`], `Tr(W Wᴴ) = p` to 1e−9 relative and `W`
/// lies in the row space of the channel estimate it was built from.
#[derive(Debug, Clone)]
pub struct PrecoderMats {
    /// Base matrix X (N × K).
    pub x: DMatrix<Complex64>,
    /// Projected, power-normalized precoder W (M × K).
    pub w: DMatrix<Complex64>,
    /// Sum power budget in watts.
    pub p: f64,
}

fn user_block(h: &DMatrix<Complex64>, k: usize, n_users: usize) -> DMatrix<Complex64> {
    let n_k = h.nrows() / n_users;
    h.rows(k * n_k, n_k).into_owned()
}

/// Interference-plus-noise covariance of user `k`: σ²I plus the outer
/// products of every other user's effective channel.
fn interference_matrix(
    h_k: &DMatrix<Complex64>,
    w: &DMatrix<Complex64>,
    k: usize,
    sigma2: f64,
) -> DMatrix<Complex64> {
    let n_k = h_k.nrows();
    let mut b = DMatrix::<Complex64>::identity(n_k, n_k) * Complex64::new(sigma2, 0.0);
    for j in 0..w.ncols() {
        if j == k {
            continue;
        }
        let v: DVector<Complex64> = h_k * w.column(j);
        for r in 0..n_k {
            for c in 0..n_k {
                b[(r, c)] += v[r] * v[c].conj();
            }
        }
    }
    b
}

fn signal_matrix(h_k: &DMatrix<Complex64>, w: &DMatrix<Complex64>, k: usize) -> DMatrix<Complex64> {
    let v: DVector<Complex64> = h_k * w.column(k);
    let n_k = h_k.nrows();
    DMatrix::from_fn(n_k, n_k, |r, c| v[r] * v[c].conj())
}

/// SINR matrix of user `k` in the explicit-inverse form.
///
/// `h_k` is the user's N_k × M channel; σ² > 0 guarantees the inverse exists.
pub fn sinr_matrix(
    h_k: &DMatrix<Complex64>,
    w: &DMatrix<Complex64>,
    k: usize,
    sigma2: f64,
) -> DMatrix<Complex64> {
    assert!(sigma2 > 0.0, "sigma2 must be positive");
    assert_eq!(h_k.ncols(), w.nrows(), "channel/precoder dimension mismatch");
    let b = interference_matrix(h_k, w, k, sigma2);
    let b_inv = Cholesky::new(b)
        .expect("interference-plus-noise matrix is positive definite for sigma2 > 0")
        .inverse();
    signal_matrix(h_k, w, k) * b_inv
}

/// log of the determinant of a Hermitian positive-definite matrix, natural base.
fn ln_det_hpd(m: DMatrix<Complex64>) -> f64 {
    let chol = Cholesky::new(m).expect("matrix must be positive definite");
    let l = chol.l();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>()
}

/// Per-user rates `log2 det(I + γ_k)` in bits/s/Hz, stably evaluated.
///
/// `h` stacks K equal-height user blocks; the block height is inferred from
/// `w.ncols()`. Rates are clamped at zero against roundoff.
pub fn per_user_rates(h: &DMatrix<Complex64>, w: &DMatrix<Complex64>, sigma2: f64) -> Vec<f64> {
    assert!(sigma2 > 0.0, "sigma2 must be positive");
    assert_eq!(h.ncols(), w.nrows(), "channel/precoder dimension mismatch");
    let k_users = w.ncols();
    assert!(
        k_users > 0 && h.nrows() % k_users == 0,
        "stacked channel rows ({}) must split evenly across {} users",
        h.nrows(),
        k_users
    );
    (0..k_users)
        .map(|k| {
            let h_k = user_block(h, k, k_users);
            let b = interference_matrix(&h_k, w, k, sigma2);
            let s = signal_matrix(&h_k, w, k);
            let rate = (ln_det_hpd(&s + &b) - ln_det_hpd(b)) / std::f64::consts::LN_2;
            rate.max(0.0)
        })
        .collect()
}

/// Sum spectral efficiency Σ_k log2 det(I + γ_k) in bits/s/Hz.
pub fn spectral_efficiency(h: &DMatrix<Complex64>, w: &DMatrix<Complex64>, sigma2: f64) -> f64 {
    per_user_rates(h, w, sigma2).iter().sum()
}

/// Projects the base matrix onto the row space of the channel estimate:
/// `W_raw = Ĥᴴ X`.
pub fn manifold_project(h_hat: &DMatrix<Complex64>, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    assert_eq!(h_hat.nrows(), x.nrows(), "projection needs an N×M channel and N×K base");
    h_hat.adjoint() * x
}

/// Projects and scales so the sum power constraint holds with equality:
/// `W = √(P / Tr(ĤᴴX (ĤᴴX)ᴴ)) · ĤᴴX`.
///
/// A zero projected matrix cannot be normalized and is reported as
/// [`Error::DegeneratePrecoder`] so the caller can re-draw its base matrix.
pub fn apply_power_constraint(
    h_hat: &DMatrix<Complex64>,
    x: &DMatrix<Complex64>,
    p: f64,
) -> Result<PrecoderMats> {
    if !(p > 0.0) {
        return Err(Error::InvalidConfig(format!("power budget must be positive, got {p}")));
    }
    let w_raw = manifold_project(h_hat, x);
    let trace: f64 = w_raw.iter().map(|z| z.norm_sqr()).sum();
    if trace == 0.0 {
        return Err(Error::DegeneratePrecoder);
    }
    let scale = (p / trace).sqrt();
    let w = w_raw.map(|z| z * scale);
    Ok(PrecoderMats { x: x.clone(), w, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::standard_complex_gaussian;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_single_user_sinr() {
        let h = DMatrix::from_row_slice(1, 1, &[c(2.0, 1.0)]);
        let w = DMatrix::from_row_slice(1, 1, &[c(0.5, -0.25)]);
        let sigma2 = 0.3;
        let gamma = sinr_matrix(&h, &w, 0, sigma2);
        let hw = c(2.0, 1.0) * c(0.5, -0.25);
        assert_relative_eq!(gamma[(0, 0)].re, hw.norm_sqr() / sigma2, max_relative = 1e-14);
        assert_relative_eq!(gamma[(0, 0)].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_precoder_zero_sinr_and_rate() {
        let mut rng = stream(1, &["bf-zero"]);
        let h = standard_complex_gaussian(4, 6, &mut rng);
        let w = DMatrix::<Complex64>::zeros(6, 2);
        let h0 = h.rows(0, 2).into_owned();
        let gamma = sinr_matrix(&h0, &w, 0, 1e-3);
        assert_eq!(gamma.map(|z| z.norm_sqr()).sum(), 0.0);
        assert_eq!(spectral_efficiency(&h, &w, 1e-3), 0.0);
    }

    #[test]
    fn scalar_rate_is_one_bit() {
        // |hw|²/σ² = 1 → log2(2) = 1.
        let h = DMatrix::from_row_slice(1, 1, &[c(1.0, 0.0)]);
        let w = DMatrix::from_row_slice(1, 1, &[c(1.0, 0.0)]);
        let r = spectral_efficiency(&h, &w, 1.0);
        assert_relative_eq!(r, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn rates_sum_to_spectral_efficiency() {
        let mut rng = stream(2, &["bf-sum"]);
        for _ in 0..20 {
            let h = standard_complex_gaussian(6, 8, &mut rng);
            let w = standard_complex_gaussian(8, 3, &mut rng);
            let rates = per_user_rates(&h, &w, 0.05);
            let se = spectral_efficiency(&h, &w, 0.05);
            assert_relative_eq!(rates.iter().sum::<f64>(), se, max_relative = 1e-12);
            assert!(rates.iter().all(|&r| r >= 0.0));
        }
    }

    #[test]
    fn symmetric_two_user_channel_gives_equal_rates() {
        // Users with mirrored channels and mirrored precoder columns.
        let h = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.2, 0.0), c(0.2, 0.0), c(1.0, 0.0)]);
        let w = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.1, 0.0), c(0.1, 0.0), c(1.0, 0.0)]);
        let rates = per_user_rates(&h, &w, 0.1);
        assert_relative_eq!(rates[0], rates[1], max_relative = 1e-12);
    }

    #[test]
    fn zeroed_column_kills_that_users_rate() {
        let mut rng = stream(3, &["bf-col"]);
        let h = standard_complex_gaussian(4, 6, &mut rng);
        let mut w = standard_complex_gaussian(6, 2, &mut rng);
        w.column_mut(1).fill(c(0.0, 0.0));
        let rates = per_user_rates(&h, &w, 0.05);
        assert_eq!(rates[1], 0.0);
        assert!(rates[0] > 0.0);
    }

    #[test]
    fn projection_basics() {
        let mut rng = stream(4, &["bf-proj"]);
        let h = standard_complex_gaussian(3, 5, &mut rng);
        let zero = DMatrix::<Complex64>::zeros(3, 2);
        assert_eq!(manifold_project(&h, &zero).norm_squared(), 0.0);

        let eye = DMatrix::<Complex64>::identity(3, 3);
        let x = standard_complex_gaussian(3, 2, &mut rng);
        let w = manifold_project(&eye, &x);
        assert_relative_eq!((w - &x).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn power_constraint_is_exact_and_scale_invariant() {
        let mut rng = stream(5, &["bf-pow"]);
        for _ in 0..50 {
            let h = standard_complex_gaussian(4, 7, &mut rng);
            let x = standard_complex_gaussian(4, 3, &mut rng);
            let p = 2.5;
            let pm = apply_power_constraint(&h, &x, p).unwrap();
            let trace: f64 = pm.w.iter().map(|z| z.norm_sqr()).sum();
            assert!((trace - p).abs() <= 1e-9 * p);

            let x2 = x.map(|z| z * 2.0);
            let pm2 = apply_power_constraint(&h, &x2, p).unwrap();
            assert_eq!(pm.w, pm2.w, "doubling X must cancel bit-exactly");
        }
    }

    #[test]
    fn scalar_power_normalization() {
        let h = DMatrix::from_row_slice(1, 1, &[c(1.0, 0.0)]);
        let x = DMatrix::from_row_slice(1, 1, &[c(3.0, 0.0)]);
        let pm = apply_power_constraint(&h, &x, 1.0).unwrap();
        assert_relative_eq!(pm.w[(0, 0)].re, 1.0, max_relative = 1e-15);
        assert_relative_eq!(pm.w[(0, 0)].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_base_matrix_is_degenerate() {
        let mut rng = stream(6, &["bf-degen"]);
        let h = standard_complex_gaussian(2, 4, &mut rng);
        let x = DMatrix::<Complex64>::zeros(2, 2);
        assert!(matches!(apply_power_constraint(&h, &x, 1.0), Err(Error::DegeneratePrecoder)));
    }

    #[test]
    fn se_monotone_in_power_for_fixed_direction() {
        let mut rng = stream(7, &["bf-mono"]);
        for _ in 0..20 {
            let h = standard_complex_gaussian(4, 8, &mut rng);
            let x = standard_complex_gaussian(4, 2, &mut rng);
            let mut last = 0.0;
            for p in [0.01, 0.1, 1.0, 10.0, 100.0] {
                let pm = apply_power_constraint(&h, &x, p).unwrap();
                let se = spectral_efficiency(&h, &pm.w, 1e-2);
                assert!(
                    se >= last - 1e-9,
                    "SE decreased from {last} to {se} when raising power to {p}"
                );
                last = se;
            }
        }
    }
}
