//! A miniature transmit-power sweep through the experiment harness,
//! printing the aggregated spectral efficiency per grid point.
//!
//! Run with: cargo run --release --example power_sweep

use liquidbf::harness::{aggregate, run_power_sweep, AntennaKind, ExperimentConfig, Method};

fn main() -> liquidbf::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.system.m = 16;
    cfg.system.k = 2;
    cfg.system.n_k = 2;
    cfg.methods = vec![Method::Gd, Method::Mrt];
    cfg.antennas = vec![AntennaKind::Lc, AntennaKind::Isotropic];
    cfg.p_grid_dbm = vec![10.0, 20.0, 30.0];
    cfg.seeds = (0..5).collect();
    cfg.gd.n_iters = 40;

    let dir = std::env::temp_dir().join("liquidbf_power_sweep_example");
    let out = run_power_sweep(&cfg, 1, &dir, 1)?;
    println!("{} rows -> {}", out.rows.len(), out.csv_path.display());
    println!();
    println!("method  antenna     P[dBm]   SE_true mean ± std");
    for row in aggregate(&out.rows) {
        println!(
            "{:6}  {:9}  {:6.0}   {:6.3} ± {:.3}",
            row.method.to_string(),
            row.antenna.to_string(),
            row.p_dbm,
            row.se_true_mean,
            row.se_true_std
        );
    }
    Ok(())
}
