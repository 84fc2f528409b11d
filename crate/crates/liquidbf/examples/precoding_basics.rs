//! The objective machinery on one random instance: SINR matrices, per-user
//! rates, row-space projection, the exact power constraint, and the two
//! non-learned precoders.
//!
//! Run with: cargo run --example precoding_basics

use liquidbf::baselines::{gd_precoder_with_trace, mrt_precoder, GDConfig};
use liquidbf::bf::{apply_power_constraint, per_user_rates, sinr_matrix, spectral_efficiency};
use liquidbf::channel::standard_complex_gaussian;
use liquidbf::rng::stream;

fn main() -> liquidbf::Result<()> {
    let (m, k_users, n_k) = (16usize, 2usize, 2usize);
    let sigma2 = 1e-10;
    let p = 1.0;
    let mut rng = stream(3, &["precoding-demo"]);
    let h = standard_complex_gaussian(k_users * n_k, m, &mut rng).map(|z| z * 1e-5);

    // A random base matrix through projection + power normalization.
    let x = standard_complex_gaussian(k_users * n_k, k_users, &mut rng);
    let pm = apply_power_constraint(&h, &x, p)?;
    let trace: f64 = pm.w.iter().map(|z| z.norm_sqr()).sum();
    println!("random X: Tr(WWᴴ) = {trace:.12} (budget {p})");
    let gamma = sinr_matrix(&h.rows(0, n_k).into_owned(), &pm.w, 0, sigma2);
    println!("user 0 SINR matrix ({}x{}), trace {:.3}", gamma.nrows(), gamma.ncols(), gamma.trace().re);
    println!("rates: {:?}", per_user_rates(&h, &pm.w, sigma2));
    println!();

    // Matched filter floor.
    let mrt = mrt_precoder(&h, k_users, p)?;
    println!("mrt  SE = {:.3} bps/Hz", spectral_efficiency(&h, &mrt.w, sigma2));

    // Best-iterate gradient ascent.
    let (gd, trace_se) =
        gd_precoder_with_trace(&h, k_users, &GDConfig::default(), sigma2, p, &mut rng)?;
    println!(
        "gd   SE = {:.3} bps/Hz after {} iterations (start {:.3})",
        spectral_efficiency(&h, &gd.w, sigma2),
        trace_se.len() - 1,
        trace_se[0]
    );
    let mut envelope = f64::NEG_INFINITY;
    for (i, se) in trace_se.iter().enumerate().step_by(20) {
        envelope = envelope.max(*se);
        println!("  iter {i:3}: SE {se:.3} (best so far {envelope:.3})");
    }
    Ok(())
}
