//! Transmit element radiation patterns and the analog beamforming stage.
//!
//! The liquid-crystal antenna exposes a small, fixed set of steered element
//! patterns; analog beamforming is an exhaustive selection over that set.
//! Full-wave patterns are not available here, so a steered pattern is modeled
//! parametrically: a parabola in dB around the steering azimuth with a hard
//! sidelobe floor. The three published descriptors (peak gain, half-power
//! beamwidth, steering grid) pin the model; everything else is configurable.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Defaults of the liquid-crystal element codebook: 19 patterns covering
/// −45°..+45° in 5° steps, 6.87 dB peak, 5° beamwidth, −20 dB floor.
pub mod lc_defaults {
    pub const N_PATTERNS: usize = 19;
    pub const STEER_MIN_RAD: f64 = -std::f64::consts::PI / 4.0;
    pub const STEER_MAX_RAD: f64 = std::f64::consts::PI / 4.0;
    pub const PEAK_GAIN_DB: f64 = 6.87;
    pub const HPBW_RAD: f64 = 5.0 * std::f64::consts::PI / 180.0;
    pub const FLOOR_DB: f64 = -20.0;
}

/// TR 38.901 single-element constants: 65° beamwidth in both cuts, 8 dBi
/// peak, 30 dB front-to-back floor.
pub mod tr38901 {
    pub const HPBW_RAD: f64 = 65.0 * std::f64::consts::PI / 180.0;
    pub const PEAK_GAIN_DB: f64 = 8.0;
    pub const FLOOR_DB: f64 = -30.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// Steered liquid-crystal element: parabolic mainlobe in dB, hard floor.
    LcSteered,
    /// TR 38.901 single element at boresight (no steering).
    GppElement,
    /// Unit gain everywhere.
    Isotropic,
}

/// Directional power gain of one transmit element state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiationPattern {
    pub kind: PatternKind,
    /// Mainlobe azimuth in radians.
    pub steer_azimuth: f64,
    /// Peak power gain in dB over isotropic.
    pub peak_gain_db: f64,
    /// Half-power beamwidth in radians.
    pub hpbw: f64,
    /// Sidelobe floor relative to the peak, in dB (negative).
    pub floor_db: f64,
}

impl RadiationPattern {
    pub fn lc_steered(steer_azimuth: f64, peak_gain_db: f64, hpbw: f64, floor_db: f64) -> Result<Self> {
        if !(hpbw > 0.0) {
            return Err(Error::InvalidConfig(format!("hpbw must be positive, got {hpbw}")));
        }
        if !(floor_db < 0.0) {
            return Err(Error::InvalidConfig(format!("floor_db must be negative, got {floor_db}")));
        }
        Ok(Self { kind: PatternKind::LcSteered, steer_azimuth, peak_gain_db, hpbw, floor_db })
    }

    pub fn isotropic() -> Self {
        // hpbw and floor_db are unused for the flat pattern.
        Self {
            kind: PatternKind::Isotropic,
            steer_azimuth: 0.0,
            peak_gain_db: 0.0,
            hpbw: 2.0 * PI,
            floor_db: 0.0,
        }
    }

    /// The TR 38.901 single-element model, boresight at azimuth 0.
    pub fn tr38901_element() -> Self {
        Self {
            kind: PatternKind::GppElement,
            steer_azimuth: 0.0,
            peak_gain_db: tr38901::PEAK_GAIN_DB,
            hpbw: tr38901::HPBW_RAD,
            floor_db: tr38901::FLOOR_DB,
        }
    }

    /// Linear power gain toward elevation `theta`, azimuth `phi`.
    pub fn gain(&self, theta: f64, phi: f64) -> f64 {
        10f64.powf(self.gain_db(theta, phi) / 10.0)
    }

    /// Power gain in dB toward elevation `theta`, azimuth `phi`.
    ///
    /// The steered element is azimuth-only (the array is a 1-D azimuth
    /// steerer); the TR 38.901 element attenuates in both cuts and clamps the
    /// combined attenuation at the front-to-back floor.
    pub fn gain_db(&self, theta: f64, phi: f64) -> f64 {
        match self.kind {
            PatternKind::Isotropic => 0.0,
            PatternKind::LcSteered => {
                let delta = wrap_angle(phi - self.steer_azimuth);
                let rolloff = 12.0 * (delta / self.hpbw).powi(2);
                self.peak_gain_db - rolloff.min(-self.floor_db)
            }
            PatternKind::GppElement => {
                let att_v = (12.0 * ((theta - PI / 2.0) / self.hpbw).powi(2)).min(-self.floor_db);
                let att_h =
                    (12.0 * (wrap_angle(phi - self.steer_azimuth) / self.hpbw).powi(2)).min(-self.floor_db);
                self.peak_gain_db - (att_v + att_h).min(-self.floor_db)
            }
        }
    }
}

fn wrap_angle(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

/// Ordered set of selectable element patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    patterns: Vec<RadiationPattern>,
}

impl Codebook {
    /// Wraps an explicit pattern list. Steering angles of steered patterns
    /// must be strictly increasing.
    pub fn new(patterns: Vec<RadiationPattern>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::InvalidConfig("codebook needs at least one pattern".into()));
        }
        let steered: Vec<f64> = patterns
            .iter()
            .filter(|p| p.kind == PatternKind::LcSteered)
            .map(|p| p.steer_azimuth)
            .collect();
        if steered.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("steering angles must be strictly increasing".into()));
        }
        Ok(Self { patterns })
    }

    pub fn single(pattern: RadiationPattern) -> Self {
        Self { patterns: vec![pattern] }
    }

    pub fn n_patterns(&self) -> usize {
        self.patterns.len()
    }

    pub fn patterns(&self) -> &[RadiationPattern] {
        &self.patterns
    }

    pub fn pattern(&self, idx: usize) -> &RadiationPattern {
        &self.patterns[idx]
    }

    /// The default liquid-crystal codebook.
    pub fn lc_default() -> Self {
        build_lc_codebook(
            lc_defaults::N_PATTERNS,
            lc_defaults::STEER_MIN_RAD,
            lc_defaults::STEER_MAX_RAD,
            lc_defaults::PEAK_GAIN_DB,
            lc_defaults::HPBW_RAD,
            lc_defaults::FLOOR_DB,
        )
        .expect("defaults are valid")
    }
}

/// Builds a codebook of `n_p` steered patterns with uniformly spaced steering
/// azimuths, inclusive of both endpoints.
pub fn build_lc_codebook(
    n_p: usize,
    steer_min: f64,
    steer_max: f64,
    peak_gain_db: f64,
    hpbw: f64,
    floor_db: f64,
) -> Result<Codebook> {
    if n_p < 2 {
        return Err(Error::InvalidConfig(format!("n_p must be at least 2, got {n_p}")));
    }
    if !(steer_max > steer_min) {
        return Err(Error::InvalidConfig("steer_max must exceed steer_min".into()));
    }
    let step = (steer_max - steer_min) / (n_p - 1) as f64;
    let patterns = (0..n_p)
        .map(|i| RadiationPattern::lc_steered(steer_min + step * i as f64, peak_gain_db, hpbw, floor_db))
        .collect::<Result<Vec<_>>>()?;
    Codebook::new(patterns)
}

/// Exhaustive analog beam selection over the full two-stage pipeline.
///
/// For each pattern index `p`, `channel_for` supplies the stacked estimated
/// channel and `precoder_for` the digital precoder computed from it;
/// `evaluate` is ordinarily [`crate::bf::spectral_efficiency`]. Returns the
/// zero-based index of the best pattern and its objective value, breaking
/// ties toward the lower index.
pub fn select_pattern<E>(
    codebook: &Codebook,
    mut channel_for: impl FnMut(usize) -> DMatrix<Complex64>,
    mut precoder_for: impl FnMut(&DMatrix<Complex64>) -> std::result::Result<DMatrix<Complex64>, E>,
    sigma2: f64,
) -> std::result::Result<(usize, f64), E> {
    let mut best = (0usize, f64::NEG_INFINITY);
    for p in 0..codebook.n_patterns() {
        let h_hat = channel_for(p);
        let w = precoder_for(&h_hat)?;
        let se = crate::bf::spectral_efficiency(&h_hat, &w, sigma2);
        if se > best.1 {
            best = (p, se);
        }
    }
    Ok(best)
}

/// Analog selection by aggregate channel gain (squared Frobenius norm of the
/// stacked estimate), the cheaper criterion offered alongside pipeline SE.
pub fn select_pattern_by_gain(
    codebook: &Codebook,
    mut channel_for: impl FnMut(usize) -> DMatrix<Complex64>,
) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for p in 0..codebook.n_patterns() {
        let gain = channel_for(p).norm_squared();
        if gain > best.1 {
            best = (p, gain);
        }
    }
    best
}

/// Dumps pattern gains on a 0.5°-resolution azimuth grid, one row per
/// (pattern, azimuth) sample: `pattern_idx, steer_deg, az_deg, gain_db`.
pub fn dump_codebook_csv<W: Write>(writer: W, codebook: &Codebook) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["pattern_idx", "steer_deg", "az_deg", "gain_db"])?;
    let half_steps = 360;
    for (idx, pattern) in codebook.patterns().iter().enumerate() {
        for s in -half_steps..=half_steps {
            let az_deg = s as f64 * 0.5;
            let gain_db = pattern.gain_db(PI / 2.0, az_deg.to_radians());
            w.write_record(&[
                idx.to_string(),
                pattern.steer_azimuth.to_degrees().to_string(),
                az_deg.to_string(),
                gain_db.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn default_codebook_covers_the_grid() {
        let cb = Codebook::lc_default();
        assert_eq!(cb.n_patterns(), 19);
        for (i, p) in cb.patterns().iter().enumerate() {
            let expect_deg = -45.0 + 5.0 * i as f64;
            assert_relative_eq!(p.steer_azimuth.to_degrees(), expect_deg, epsilon = 1e-9);
        }
    }

    #[test]
    fn two_pattern_codebook_hits_both_endpoints() {
        let cb = build_lc_codebook(2, -PI / 4.0, PI / 4.0, 6.87, 0.1, -20.0).unwrap();
        assert_relative_eq!(cb.pattern(0).steer_azimuth, -PI / 4.0);
        assert_relative_eq!(cb.pattern(1).steer_azimuth, PI / 4.0);
    }

    #[test]
    fn nonpositive_hpbw_rejected() {
        assert!(build_lc_codebook(3, -1.0, 1.0, 6.87, 0.0, -20.0).is_err());
        assert!(build_lc_codebook(3, -1.0, 1.0, 6.87, -0.5, -20.0).is_err());
    }

    #[test]
    fn peak_gain_is_at_steer_azimuth() {
        let cb = Codebook::lc_default();
        for p in cb.patterns() {
            let g = p.gain(PI / 2.0, p.steer_azimuth);
            assert_relative_eq!(g, 10f64.powf(0.687), max_relative = 1e-12);
            assert_relative_eq!(g, 4.864, max_relative = 1e-3);
        }
    }

    #[test]
    fn half_power_points_sit_at_half_beamwidth() {
        let p = RadiationPattern::lc_steered(0.2, 6.87, 0.0873, -20.0).unwrap();
        for sign in [-1.0, 1.0] {
            let g_db = p.gain_db(PI / 2.0, 0.2 + sign * p.hpbw / 2.0);
            assert_relative_eq!(g_db, 6.87 - 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn isotropic_pattern_is_flat_unity() {
        let p = RadiationPattern::isotropic();
        for phi in [-3.0, -0.4, 0.0, 1.2, 3.1] {
            assert_eq!(p.gain(1.0, phi), 1.0);
        }
    }

    #[test]
    fn tr38901_element_reference_points() {
        let p = RadiationPattern::tr38901_element();
        // Boresight: 8 dBi.
        assert_relative_eq!(p.gain_db(PI / 2.0, 0.0), 8.0, epsilon = 1e-12);
        assert_relative_eq!(p.gain(PI / 2.0, 0.0), 10f64.powf(0.8), max_relative = 1e-12);
        // Half-power at half the beamwidth off boresight in azimuth.
        assert_relative_eq!(p.gain_db(PI / 2.0, tr38901::HPBW_RAD / 2.0), 8.0 - 3.0, epsilon = 1e-12);
        // Behind the array the front-to-back floor caps the attenuation.
        assert_relative_eq!(p.gain_db(PI / 2.0, PI), 8.0 - 30.0, epsilon = 1e-12);
        // Both cuts together still cannot exceed the floor.
        assert_relative_eq!(p.gain_db(0.0, PI), 8.0 - 30.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn gain_stays_between_floor_and_peak(
            steer in -0.8f64..0.8,
            phi in -PI..PI,
            theta in 0.0..PI,
        ) {
            let lc = RadiationPattern::lc_steered(steer, 6.87, 0.0873, -20.0).unwrap();
            let gpp = RadiationPattern::tr38901_element();
            for p in [lc, gpp] {
                let g = p.gain(theta, phi);
                let peak = 10f64.powf(p.peak_gain_db / 10.0);
                let floor = 10f64.powf((p.peak_gain_db + p.floor_db) / 10.0);
                prop_assert!(g <= peak * (1.0 + 1e-12));
                prop_assert!(g >= floor * (1.0 - 1e-12));
            }
        }

        #[test]
        fn lc_gain_is_even_about_the_steer_axis(offset in 0.0f64..1.0, steer in -0.5f64..0.5) {
            let p = RadiationPattern::lc_steered(steer, 6.87, 0.0873, -20.0).unwrap();
            let left = p.gain(PI / 2.0, steer - offset);
            let right = p.gain(PI / 2.0, steer + offset);
            prop_assert!((left - right).abs() < 1e-12);
            prop_assert!(left <= p.gain(PI / 2.0, steer) + 1e-15);
        }
    }
}
