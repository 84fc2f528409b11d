//! Independent oracles for the integration suites.
//!
//! Everything here is deliberately written from scratch on `Vec`-based
//! complex matrices — no nalgebra, no shared code with the library's math
//! paths — so agreement between the two is a real cross-check.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = Vec<Vec<Complex64>>;

pub fn from_nalgebra(m: &DMatrix<Complex64>) -> CMat {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

pub fn to_nalgebra(m: &CMat) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.len(), m[0].len(), |r, c| m[r][c])
}

pub fn identity(n: usize) -> CMat {
    (0..n)
        .map(|r| {
            (0..n)
                .map(|c| if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
                .collect()
        })
        .collect()
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    assert_eq!(a[0].len(), k);
    let mut out = vec![vec![Complex64::new(0.0, 0.0); m]; n];
    for r in 0..n {
        for c in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..k {
                acc += a[r][t] * b[t][c];
            }
            out[r][c] = acc;
        }
    }
    out
}

pub fn adjoint(a: &CMat) -> CMat {
    let (n, m) = (a.len(), a[0].len());
    (0..m).map(|c| (0..n).map(|r| a[r][c].conj()).collect()).collect()
}

/// Solves A·X = B by Gaussian elimination with partial pivoting.
pub fn ge_solve(a: &CMat, b: &CMat) -> CMat {
    let n = a.len();
    let m = b[0].len();
    assert_eq!(a[0].len(), n);
    assert_eq!(b.len(), n);
    // Augmented system, eliminated in place.
    let mut aug: Vec<Vec<Complex64>> = (0..n)
        .map(|r| a[r].iter().copied().chain(b[r].iter().copied()).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].norm().total_cmp(&aug[j][col].norm()))
            .unwrap();
        assert!(aug[pivot][col].norm() > 0.0, "singular matrix in oracle solve");
        aug.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = aug[row][col] / aug[col][col];
            for k in col..(n + m) {
                let v = aug[col][k];
                aug[row][k] -= factor * v;
            }
        }
    }
    let mut x = vec![vec![Complex64::new(0.0, 0.0); m]; n];
    for col in 0..m {
        for row in (0..n).rev() {
            let mut acc = aug[row][n + col];
            for k in (row + 1)..n {
                acc -= aug[row][k] * x[k][col];
            }
            x[row][col] = acc / aug[row][row];
        }
    }
    x
}

pub fn ge_inverse(a: &CMat) -> CMat {
    ge_solve(a, &identity(a.len()))
}

/// Determinant via LU with partial pivoting.
pub fn ge_det(a: &CMat) -> Complex64 {
    let n = a.len();
    let mut m = a.clone();
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].norm().total_cmp(&m[j][col].norm()))
            .unwrap();
        if m[pivot][col].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if pivot != col {
            m.swap(col, pivot);
            det = -det;
        }
        det *= m[col][col];
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            for k in col..n {
                let v = m[col][k];
                m[row][k] -= factor * v;
            }
        }
    }
    det
}

/// Cyclic complex Jacobi eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues (unsorted) and the accumulated unitary, columns
/// matching the eigenvalue order.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.len();
    let mut m = a.clone();
    let mut v = identity(n);
    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter().map(|z| z.norm_sqr()))
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..60 {
        let off: f64 =
            (0..n).flat_map(|p| ((p + 1)..n).map(move |q| (p, q))).map(|(p, q)| m[p][q].norm_sqr()).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let gamma = m[p][q];
                let abs_g = gamma.norm();
                if abs_g <= 1e-300 {
                    continue;
                }
                let alpha = m[p][p].re;
                let beta = m[q][q].re;
                let tau = (beta - alpha) / (2.0 * abs_g);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let u = gamma / abs_g; // e^{iθ}

                // Rows/columns p and q of the Hermitian matrix.
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * u * mqk;
                    m[q][k] = s * u.conj() * mpk + c * mqk;
                    m[k][p] = m[p][k].conj();
                    m[k][q] = m[q][k].conj();
                }
                let new_alpha = c * c * alpha + s * s * beta - 2.0 * s * c * abs_g;
                let new_beta = s * s * alpha + c * c * beta + 2.0 * s * c * abs_g;
                m[p][p] = Complex64::new(new_alpha, 0.0);
                m[q][q] = Complex64::new(new_beta, 0.0);
                m[p][q] = Complex64::new(0.0, 0.0);
                m[q][p] = Complex64::new(0.0, 0.0);

                // Accumulate the unitary: V <- V · J.
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * u.conj() * vkq;
                    v[k][q] = s * u * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i].re).collect(), v)
}

/// Hermitian inverse square root via the Jacobi decomposition.
pub fn hermitian_inv_sqrt(a: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(a);
    let n = a.len();
    let mut scaled = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for (i, &lambda) in vals.iter().enumerate() {
        assert!(lambda > 0.0, "inverse sqrt needs a positive-definite matrix");
        let inv = 1.0 / lambda.sqrt();
        for r in 0..n {
            scaled[r][i] = vecs[r][i] * inv;
        }
    }
    matmul(&scaled, &adjoint(&vecs))
}

/// Per-user covariance pair (signal outer product, interference + noise),
/// assembled independently of the library.
pub fn user_covariances(
    h: &DMatrix<Complex64>,
    w: &DMatrix<Complex64>,
    k: usize,
    sigma2: f64,
) -> (CMat, CMat) {
    let k_users = w.ncols();
    let n_k = h.nrows() / k_users;
    let h_k: Vec<Vec<Complex64>> = (0..n_k)
        .map(|r| (0..h.ncols()).map(|c| h[(k * n_k + r, c)]).collect())
        .collect();
    let eff = |j: usize| -> Vec<Complex64> {
        (0..n_k)
            .map(|r| (0..h.ncols()).map(|c| h_k[r][c] * w[(c, j)]).sum())
            .collect()
    };
    let outer = |v: &[Complex64]| -> CMat {
        (0..n_k).map(|r| (0..n_k).map(|c| v[r] * v[c].conj()).collect()).collect()
    };
    let s = outer(&eff(k));
    let mut b = identity(n_k);
    for row in b.iter_mut() {
        for z in row.iter_mut() {
            *z *= sigma2;
        }
    }
    for j in 0..k_users {
        if j == k {
            continue;
        }
        let o = outer(&eff(j));
        for r in 0..n_k {
            for c in 0..n_k {
                b[r][c] += o[r][c];
            }
        }
    }
    (s, b)
}

/// SE through the eigenvalue route: Σ_k Σ_i log2(1 + λ_i(γ_k)), with the
/// eigenvalues of γ_k = S·B⁻¹ obtained from the similar Hermitian matrix
/// B^{−1/2} S B^{−1/2}.
pub fn se_eigen_oracle(h: &DMatrix<Complex64>, w: &DMatrix<Complex64>, sigma2: f64) -> f64 {
    let k_users = w.ncols();
    let mut total = 0.0;
    for k in 0..k_users {
        let (s, b) = user_covariances(h, w, k, sigma2);
        let b_inv_sqrt = hermitian_inv_sqrt(&b);
        let x = matmul(&matmul(&b_inv_sqrt, &s), &b_inv_sqrt);
        let (vals, _) = hermitian_eigen(&x);
        for lambda in vals {
            total += (1.0 + lambda.max(0.0)).log2();
        }
    }
    total
}

/// SINR matrix through a dense solve: γ_k = S · B⁻¹ with B inverted by
/// Gaussian elimination.
pub fn sinr_dense_oracle(
    h: &DMatrix<Complex64>,
    w: &DMatrix<Complex64>,
    k: usize,
    sigma2: f64,
) -> DMatrix<Complex64> {
    let (s, b) = user_covariances(h, w, k, sigma2);
    to_nalgebra(&matmul(&s, &ge_inverse(&b)))
}

/// SE via the direct determinant of I + γ_k (general complex LU).
pub fn se_direct_det_oracle(h: &DMatrix<Complex64>, w: &DMatrix<Complex64>, sigma2: f64) -> f64 {
    let k_users = w.ncols();
    let mut total = 0.0;
    for k in 0..k_users {
        let (s, b) = user_covariances(h, w, k, sigma2);
        let gamma = matmul(&s, &ge_inverse(&b));
        let n_k = gamma.len();
        let mut m = gamma;
        for (i, row) in m.iter_mut().enumerate().take(n_k) {
            row[i] += Complex64::new(1.0, 0.0);
        }
        let det = ge_det(&m);
        total += det.re.max(f64::MIN_POSITIVE).log2();
    }
    total
}

/// Central finite difference of the full training loss over every parameter.
pub fn fd_network_gradient(
    params: &liquidbf::lnn::NetworkParams,
    h_hat: &DMatrix<Complex64>,
    state: &liquidbf::lnn::NetState,
    t: f64,
    sigma2: f64,
    p: f64,
    loss_eps: f64,
    step: f64,
) -> Vec<f64> {
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut grad = Vec::with_capacity(base.len());
    let mut flat = base.clone();
    for i in 0..base.len() {
        flat[i] = base[i] + step;
        probe.copy_from_flat(&flat).unwrap();
        let up = liquidbf::lnn::snapshot_loss(&probe, h_hat, state, t, sigma2, p, loss_eps).unwrap();
        flat[i] = base[i] - step;
        probe.copy_from_flat(&flat).unwrap();
        let down = liquidbf::lnn::snapshot_loss(&probe, h_hat, state, t, sigma2, p, loss_eps).unwrap();
        flat[i] = base[i];
        grad.push((up - down) / (2.0 * step));
    }
    grad
}

/// Relative disagreement with a floor that only shields truly dead entries.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Median of a slice (copies and sorts).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
