//! Draw a synthetic multipath scenario, assemble pattern-weighted channels,
//! and inject calibrated estimation error.
//!
//! Run with: cargo run --example synthetic_channels

use liquidbf::channel::{
    assemble_channel, inject_estimation_error, normalize_channel, stack_channels,
    synthesize_paths, ScenarioConfig, SystemConfig,
};
use liquidbf::codebook::RadiationPattern;
use liquidbf::rng::stream;

fn main() -> liquidbf::Result<()> {
    let sys = SystemConfig { m: 16, k: 2, n_k: 2, ..SystemConfig::default() };
    let scenario = ScenarioConfig::default().with_aod_center(0.15);

    println!("scenario: L_max={}, LOS prob {}, distances {}-{} m", scenario.l_max, scenario.los_prob, scenario.dist_min_m, scenario.dist_max_m);
    println!();

    let mut path_sets = Vec::new();
    for user in 0..sys.k {
        let ps = synthesize_paths(&scenario, user, &mut stream(7, &["demo-paths", &format!("user={user}")]))?;
        println!("user {user}: {} paths", ps.len());
        for (i, p) in ps.paths.iter().enumerate() {
            println!(
                "  path {i}: amp {:.3e}  delay {:.1} ns  aod {:+.1}°  aoa {:+.1}°",
                p.amplitude,
                p.delay_s * 1e9,
                p.aod.phi.to_degrees(),
                p.aoa.phi.to_degrees()
            );
        }
        path_sets.push(ps);
    }

    let pattern = RadiationPattern::lc_steered(0.15, 6.87, 30f64.to_radians(), -20.0)?;
    let per_user: Vec<_> = path_sets.iter().map(|ps| assemble_channel(ps, &pattern, &sys)).collect();
    let h = stack_channels(&per_user);
    println!();
    println!("stacked channel: {}x{}, ‖H‖_F = {:.3e}", h.nrows(), h.ncols(), h.norm());

    for cee_db in [f64::NEG_INFINITY, -20.0, -10.0, 0.0] {
        let est = inject_estimation_error(&h, cee_db, &mut stream(7, &["demo-err"]));
        println!(
            "CEE target {:>8} dB -> realized {:>8.3} dB, ‖E‖_F = {:.3e}",
            if cee_db.is_finite() { format!("{cee_db:.0}") } else { "-inf".into() },
            est.cee_realized_db,
            est.e.norm()
        );
    }

    let normalized = normalize_channel(&h, sys.sigma2_watt.sqrt())?;
    println!();
    println!("after 1/σ normalization: ‖H‖_F = {:.3}", normalized.norm());
    Ok(())
}
