//! Inspect the steered pattern codebook and run an exhaustive analog
//! selection against a line-of-sight channel.
//!
//! Run with: cargo run --example codebook_patterns

use liquidbf::baselines::mrt_precoder;
use liquidbf::channel::{assemble_channel, Direction, Path, PathSet, SystemConfig};
use liquidbf::codebook::{select_pattern, Codebook, RadiationPattern};
use std::f64::consts::{FRAC_PI_2, PI};

fn main() -> liquidbf::Result<()> {
    let codebook = Codebook::lc_default();
    println!("codebook: {} patterns", codebook.n_patterns());
    for (i, p) in codebook.patterns().iter().enumerate().step_by(3) {
        println!(
            "  pattern {i:2}: steer {:+5.1}°, peak {:.2} dB, gain at steer {:.3}",
            p.steer_azimuth.to_degrees(),
            p.peak_gain_db,
            p.gain(FRAC_PI_2, p.steer_azimuth)
        );
    }

    let gpp = RadiationPattern::tr38901_element();
    println!();
    println!("TR 38.901 element: boresight {:.2} dB, at 180° {:.2} dB", gpp.gain_db(FRAC_PI_2, 0.0), gpp.gain_db(FRAC_PI_2, PI));

    // One dominant path at -28°: the -30° pattern should win the selection.
    let sys = SystemConfig { m: 16, k: 1, n_k: 1, ..SystemConfig::default() };
    let los = PathSet {
        user_index: 0,
        paths: vec![Path {
            amplitude: 1e-5,
            delay_s: 3e-7,
            aod: Direction { theta: FRAC_PI_2, phi: (-28f64).to_radians() },
            aoa: Direction { theta: FRAC_PI_2, phi: 0.4 },
        }],
    };
    let (p_star, se) = select_pattern(
        &codebook,
        |p| assemble_channel(&los, codebook.pattern(p), &sys),
        |h| mrt_precoder(h, sys.k, sys.p_watt).map(|pm| pm.w),
        sys.sigma2_watt,
    )?;
    println!();
    println!(
        "LOS path at -28°: selected pattern {} (steer {:+.1}°), SE {:.2} bps/Hz",
        p_star,
        codebook.pattern(p_star).steer_azimuth.to_degrees(),
        se
    );
    Ok(())
}
