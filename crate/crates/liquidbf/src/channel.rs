//! Synthetic multipath channels for a single base station serving K users.
//!
//! The channel between the array and user `k` is a sum of discrete plane-wave
//! paths. Each path contributes an outer product of receive and transmit
//! array responses, weighted by the complex path gain and by the square root
//! of the transmit element's power gain toward the departure direction:
//!
//! ```text
//! H_k = Σ_ℓ  α_ℓ · √G(θᵗ_ℓ, φᵗ_ℓ) · a_r(θʳ_ℓ, φʳ_ℓ) · a_tᴴ(θᵗ_ℓ, φᵗ_ℓ)
//! α_ℓ = |a_ℓ| · exp(−j 2π f_c τ_ℓ)
//! ```
//!
//! Path sets come from a parametric generator (free-space loss for the
//! line-of-sight path, lognormal excess loss for the rest, directions drawn
//! inside a configurable transmit sector). Site-specific ray tracing is out
//! of scope; the generator is a stand-in with sparse, directional statistics,
//! not a calibrated propagation model.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::RadiationPattern;
use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Array, user, and link-budget dimensions shared by the whole pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Transmit element count M.
    pub m: usize,
    /// Number of users K.
    pub k: usize,
    /// Receive antennas per user (uniform across users).
    pub n_k: usize,
    /// Carrier frequency in Hz.
    pub f_c_hz: f64,
    /// Transmit element spacing in wavelengths.
    pub d_t_over_lambda: f64,
    /// Receive element spacing in wavelengths.
    pub d_r_over_lambda: f64,
    /// Sum transmit power budget in watts.
    pub p_watt: f64,
    /// Noise power in watts.
    pub sigma2_watt: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            m: 48,
            k: 4,
            n_k: 4,
            f_c_hz: 108e9,
            d_t_over_lambda: 0.5,
            d_r_over_lambda: 0.5,
            p_watt: 1.0,     // 30 dBm
            sigma2_watt: 1e-12, // -90 dBm
        }
    }
}

impl SystemConfig {
    /// Total receive antenna count N = K · N_k.
    pub fn n(&self) -> usize {
        self.k * self.n_k
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.n_k == 0 {
            return Err(Error::InvalidConfig("m, k, n_k must be positive".into()));
        }
        if self.m < self.n() {
            return Err(Error::InvalidConfig(format!(
                "m = {} must be at least n = k*n_k = {}",
                self.m,
                self.n()
            )));
        }
        for (name, v) in [
            ("f_c_hz", self.f_c_hz),
            ("d_t_over_lambda", self.d_t_over_lambda),
            ("d_r_over_lambda", self.d_r_over_lambda),
            ("p_watt", self.p_watt),
            ("sigma2_watt", self.sigma2_watt),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Parameters of the synthetic path generator.
///
/// Departure azimuths are drawn around `aod_center_rad`: line-of-sight paths
/// within the user-cluster half-width, non-LOS paths within the wider
/// scatterer spread. Picking the center per replicate (the harness draws it
/// inside the sector) models users traveling together through a serving
/// sector, which is what makes a narrow selected pattern useful to all of
/// them at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Carrier used for free-space loss, normally equal to the system carrier.
    pub carrier_hz: f64,
    /// Upper bound on the number of paths per user.
    pub l_max: usize,
    /// Probability that a user's first path is line of sight.
    pub los_prob: f64,
    /// User distance range in metres.
    pub dist_min_m: f64,
    pub dist_max_m: f64,
    /// Half-width of the transmit azimuth sector in radians; every departure
    /// azimuth stays inside it.
    pub sector_half_angle_rad: f64,
    /// Center of the current user cluster, set per replicate.
    pub aod_center_rad: f64,
    /// Half-width of the LOS departure spread around the cluster center.
    pub user_cluster_half_angle_rad: f64,
    /// Half-width of the non-LOS departure spread around the cluster center.
    pub nlos_aod_spread_rad: f64,
    /// Lognormal excess loss of non-LOS paths: mean and std of the dB value.
    pub nlos_excess_mean_db: f64,
    pub nlos_excess_std_db: f64,
    /// Non-LOS delays stretch the direct delay by up to this fraction.
    pub nlos_delay_spread: f64,
    /// Elevation of all paths (linear arrays are azimuth-steered).
    pub elevation_rad: f64,
    /// Per-snapshot random-walk scale of azimuth angles within an episode.
    pub snapshot_angle_jitter_rad: f64,
    /// Per-snapshot random-walk scale of path amplitudes, in dB.
    pub snapshot_amp_jitter_db: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 108e9,
            l_max: 6,
            los_prob: 0.8,
            dist_min_m: 30.0,
            dist_max_m: 300.0,
            sector_half_angle_rad: 60.0_f64.to_radians(),
            aod_center_rad: 0.0,
            user_cluster_half_angle_rad: 2.0_f64.to_radians(),
            nlos_aod_spread_rad: 15.0_f64.to_radians(),
            nlos_excess_mean_db: 15.0,
            nlos_excess_std_db: 5.0,
            nlos_delay_spread: 0.5,
            elevation_rad: PI / 2.0,
            snapshot_angle_jitter_rad: 1.0_f64.to_radians(),
            snapshot_amp_jitter_db: 0.5,
        }
    }
}

impl ScenarioConfig {
    /// A copy with the cluster center moved, for per-replicate placement.
    pub fn with_aod_center(&self, center_rad: f64) -> Self {
        Self { aod_center_rad: center_rad, ..self.clone() }
    }

    /// Range the per-replicate cluster center may be drawn from so that all
    /// departure azimuths stay inside the sector.
    pub fn center_range(&self) -> (f64, f64) {
        let margin = self.user_cluster_half_angle_rad.max(self.nlos_aod_spread_rad);
        let half = (self.sector_half_angle_rad - margin).max(0.0);
        (-half, half)
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_max < 1 {
            return Err(Error::InvalidConfig("l_max must be at least 1".into()));
        }
        if !(self.carrier_hz > 0.0) {
            return Err(Error::InvalidConfig("carrier_hz must be positive".into()));
        }
        if !(self.dist_min_m > 0.0) || self.dist_max_m < self.dist_min_m {
            return Err(Error::InvalidConfig(format!(
                "distance range [{}, {}] is empty or non-positive",
                self.dist_min_m, self.dist_max_m
            )));
        }
        if !(0.0..=1.0).contains(&self.los_prob) {
            return Err(Error::InvalidConfig("los_prob must lie in [0, 1]".into()));
        }
        if !(self.sector_half_angle_rad > 0.0) || self.sector_half_angle_rad > PI {
            return Err(Error::InvalidConfig("sector_half_angle_rad must lie in (0, pi]".into()));
        }
        if !(self.user_cluster_half_angle_rad > 0.0) || !(self.nlos_aod_spread_rad > 0.0) {
            return Err(Error::InvalidConfig("departure spreads must be positive".into()));
        }
        if self.user_cluster_half_angle_rad.max(self.nlos_aod_spread_rad)
            > self.sector_half_angle_rad
        {
            return Err(Error::InvalidConfig(
                "departure spreads cannot exceed the sector half-angle".into(),
            ));
        }
        if self.aod_center_rad.abs() > self.sector_half_angle_rad {
            return Err(Error::InvalidConfig("aod_center_rad must lie inside the sector".into()));
        }
        if self.nlos_excess_std_db < 0.0 || self.nlos_delay_spread < 0.0 {
            return Err(Error::InvalidConfig("nlos spread parameters must be nonnegative".into()));
        }
        if !(0.0..=PI).contains(&self.elevation_rad) {
            return Err(Error::InvalidConfig("elevation_rad must lie in [0, pi]".into()));
        }
        Ok(())
    }
}

/// Departure or arrival direction: elevation θ ∈ [0, π], azimuth φ ∈ (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

/// One propagation path between the array and a user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Linear amplitude |a_ℓ| (unitless field gain).
    pub amplitude: f64,
    /// Propagation delay τ_ℓ in seconds.
    pub delay_s: f64,
    /// Angle of departure at the transmit array.
    pub aod: Direction,
    /// Angle of arrival at the user array.
    pub aoa: Direction,
}

/// All paths between the base station and one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub user_index: usize,
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// A true channel, its additive estimation error, and the resulting estimate.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub h_true: DMatrix<Complex64>,
    pub e: DMatrix<Complex64>,
    pub h_hat: DMatrix<Complex64>,
    /// Requested error-to-channel power ratio in dB (−inf for perfect CSI).
    pub cee_target_db: f64,
    /// Ratio realized by the drawn error matrix.
    pub cee_realized_db: f64,
}

/// Array response of an `n_elements` linear array toward (θ, φ).
///
/// Element `w` (zero-based) has phase `2π · d/λ · w · sinθ · cosφ`; element 0
/// is always 1.
pub fn array_response(
    theta: f64,
    phi: f64,
    n_elements: usize,
    spacing_over_lambda: f64,
) -> DVector<Complex64> {
    let step = 2.0 * PI * spacing_over_lambda * theta.sin() * phi.cos();
    DVector::from_fn(n_elements, |w, _| {
        let phase = step * w as f64;
        Complex64::new(phase.cos(), phase.sin())
    })
}

/// Free-space path loss in dB at distance `dist_m` and carrier `f_hz`.
pub fn fspl_db(dist_m: f64, f_hz: f64) -> f64 {
    20.0 * (4.0 * PI * dist_m * f_hz / SPEED_OF_LIGHT).log10()
}

fn wrap_azimuth(phi: f64) -> f64 {
    let mut x = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Draws the multipath profile for one user.
///
/// Deterministic given `(scenario, user_index, rng)`: the draw order is the
/// path count, the LOS coin, the distance, then per-path angles and losses.
/// The LOS path, when drawn, is first and carries pure free-space loss; the
/// remaining paths add lognormal excess loss and stretched delays.
pub fn synthesize_paths(
    scenario: &ScenarioConfig,
    user_index: usize,
    rng: &mut impl Rng,
) -> Result<PathSet> {
    scenario.validate()?;
    let l: usize = rng.gen_range(1..=scenario.l_max);
    let los = rng.gen::<f64>() < scenario.los_prob;
    let dist: f64 = rng.gen_range(scenario.dist_min_m..=scenario.dist_max_m);
    let base_loss_db = fspl_db(dist, scenario.carrier_hz);
    let base_delay = dist / SPEED_OF_LIGHT;

    let sector = scenario.sector_half_angle_rad;
    let mut paths = Vec::with_capacity(l);
    for idx in 0..l {
        let is_los_path = los && idx == 0;
        let spread = if is_los_path {
            scenario.user_cluster_half_angle_rad
        } else {
            scenario.nlos_aod_spread_rad
        };
        let aod_phi =
            (scenario.aod_center_rad + rng.gen_range(-spread..=spread)).clamp(-sector, sector);
        let aoa_phi = rng.gen_range(-PI..PI) + f64::MIN_POSITIVE; // (−π, π]
        let (loss_db, delay) = if is_los_path {
            (base_loss_db, base_delay)
        } else {
            let excess: f64 =
                scenario.nlos_excess_mean_db + scenario.nlos_excess_std_db * rng.sample::<f64, _>(StandardNormal);
            let stretch: f64 = rng.gen_range(0.0..=scenario.nlos_delay_spread);
            (base_loss_db + excess, base_delay * (1.0 + stretch))
        };
        paths.push(Path {
            amplitude: 10f64.powf(-loss_db / 20.0),
            delay_s: delay,
            aod: Direction { theta: scenario.elevation_rad, phi: aod_phi },
            aoa: Direction { theta: scenario.elevation_rad, phi: wrap_azimuth(aoa_phi) },
        });
    }
    Ok(PathSet { user_index, paths })
}

/// Applies one snapshot of random-walk jitter to every path in place.
///
/// Azimuths take a Gaussian step, amplitudes a lognormal one; delays are kept
/// so the per-path phase stays anchored to the original geometry.
pub fn jitter_paths(scenario: &ScenarioConfig, path_set: &mut PathSet, rng: &mut impl Rng) {
    for path in &mut path_set.paths {
        let d_aod: f64 = rng.sample::<f64, _>(StandardNormal) * scenario.snapshot_angle_jitter_rad;
        let d_aoa: f64 = rng.sample::<f64, _>(StandardNormal) * scenario.snapshot_angle_jitter_rad;
        let d_amp_db: f64 = rng.sample::<f64, _>(StandardNormal) * scenario.snapshot_amp_jitter_db;
        path.aod.phi = wrap_azimuth(path.aod.phi + d_aod);
        path.aoa.phi = wrap_azimuth(path.aoa.phi + d_aoa);
        path.amplitude *= 10f64.powf(d_amp_db / 20.0);
    }
}

/// Assembles the N_k × M channel of one user under a transmit element pattern.
pub fn assemble_channel(
    path_set: &PathSet,
    pattern: &RadiationPattern,
    cfg: &SystemConfig,
) -> DMatrix<Complex64> {
    let mut h = DMatrix::<Complex64>::zeros(cfg.n_k, cfg.m);
    for path in &path_set.paths {
        let phase = -2.0 * PI * cfg.f_c_hz * path.delay_s;
        let alpha = Complex64::new(phase.cos(), phase.sin()) * path.amplitude;
        let gain = pattern.gain(path.aod.theta, path.aod.phi).sqrt();
        let a_r = array_response(path.aoa.theta, path.aoa.phi, cfg.n_k, cfg.d_r_over_lambda);
        let a_t = array_response(path.aod.theta, path.aod.phi, cfg.m, cfg.d_t_over_lambda);
        let weight = alpha * gain;
        for r in 0..cfg.n_k {
            for c in 0..cfg.m {
                h[(r, c)] += weight * a_r[r] * a_t[c].conj();
            }
        }
    }
    h
}

/// Stacks per-user channels into the N × M system matrix, in user order.
pub fn stack_channels(per_user: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    assert!(!per_user.is_empty(), "cannot stack zero channels");
    let m = per_user[0].ncols();
    let n: usize = per_user.iter().map(|h| h.nrows()).sum();
    let mut out = DMatrix::<Complex64>::zeros(n, m);
    let mut row = 0;
    for h in per_user {
        assert_eq!(h.ncols(), m, "stacked channels must share the column count");
        out.rows_mut(row, h.nrows()).copy_from(h);
        row += h.nrows();
    }
    out
}

/// Draws a standard complex Gaussian matrix (unit variance per entry).
pub fn standard_complex_gaussian(
    rows: usize,
    cols: usize,
    rng: &mut impl Rng,
) -> DMatrix<Complex64> {
    let scale = 0.5f64.sqrt();
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

impl ChannelEstimate {
    /// Builds the estimate from a pre-drawn unit-variance error shape.
    ///
    /// Sweeps reuse one shape across an error grid so that curves are paired:
    /// only the scale changes with the target. The per-entry error variance is
    /// `10^(cee/10) · ‖H‖_F² / (N·M)`, which makes the expected error-to-channel
    /// power ratio hit the target exactly, conditioned on `H`.
    pub fn from_unit_error(
        h_true: &DMatrix<Complex64>,
        cee_target_db: f64,
        unit_error: &DMatrix<Complex64>,
    ) -> Self {
        assert_eq!(h_true.shape(), unit_error.shape(), "error shape must match the channel");
        if cee_target_db == f64::NEG_INFINITY {
            return Self {
                h_true: h_true.clone(),
                e: DMatrix::zeros(h_true.nrows(), h_true.ncols()),
                h_hat: h_true.clone(),
                cee_target_db,
                cee_realized_db: f64::NEG_INFINITY,
            };
        }
        let h_pow = h_true.norm_squared();
        let entries = (h_true.nrows() * h_true.ncols()) as f64;
        let var = 10f64.powf(cee_target_db / 10.0) * h_pow / entries;
        let drawn = unit_error.map(|z| z * var.sqrt());
        let h_hat = h_true + &drawn;
        // Store the roundtrip difference so Ĥ − H = E holds bit-exactly.
        let e = &h_hat - h_true;
        let cee_realized_db = 10.0 * (e.norm_squared() / h_pow).log10();
        Self { h_true: h_true.clone(), e, h_hat, cee_target_db, cee_realized_db }
    }
}

/// Adds circularly-symmetric Gaussian estimation error at the given level.
///
/// `cee_db` is the error-to-channel power ratio in dB; `−inf` yields a
/// perfect estimate with `E = 0`.
pub fn inject_estimation_error(
    h_true: &DMatrix<Complex64>,
    cee_db: f64,
    rng: &mut impl Rng,
) -> ChannelEstimate {
    let unit = standard_complex_gaussian(h_true.nrows(), h_true.ncols(), rng);
    ChannelEstimate::from_unit_error(h_true, cee_db, &unit)
}

/// Scales the estimate by 1/σ to keep network inputs in a sane range.
pub fn normalize_channel(h_hat: &DMatrix<Complex64>, sigma: f64) -> Result<DMatrix<Complex64>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    Ok(h_hat.map(|z| z / sigma))
}

const PATHS_CSV_HEADER: [&str; 8] =
    ["user", "path_idx", "amp", "delay_s", "aod_theta", "aod_phi", "aoa_theta", "aoa_phi"];

/// Writes path sets in the interchange CSV schema.
pub fn write_paths_csv<W: Write>(writer: W, path_sets: &[PathSet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PATHS_CSV_HEADER)?;
    for ps in path_sets {
        for (idx, p) in ps.paths.iter().enumerate() {
            w.write_record(&[
                ps.user_index.to_string(),
                idx.to_string(),
                p.amplitude.to_string(),
                p.delay_s.to_string(),
                p.aod.theta.to_string(),
                p.aod.phi.to_string(),
                p.aoa.theta.to_string(),
                p.aoa.phi.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads path sets written by [`write_paths_csv`], grouped by user index.
pub fn read_paths_csv<R: Read>(reader: R) -> Result<Vec<PathSet>> {
    let mut r = csv::Reader::from_reader(reader);
    {
        let header = r.headers()?;
        if header.iter().ne(PATHS_CSV_HEADER.iter().copied()) {
            return Err(Error::SchemaMismatch(format!("unexpected paths header: {header:?}")));
        }
    }
    let mut sets: Vec<PathSet> = Vec::new();
    for record in r.records() {
        let record = record?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| Error::SchemaMismatch("short paths record".into()))?
                .parse::<f64>()
                .map_err(|e| Error::SchemaMismatch(format!("bad numeric field: {e}")))
        };
        let user: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::SchemaMismatch("bad user field".into()))?;
        let path = Path {
            amplitude: field(2)?,
            delay_s: field(3)?,
            aod: Direction { theta: field(4)?, phi: field(5)? },
            aoa: Direction { theta: field(6)?, phi: field(7)? },
        };
        match sets.iter_mut().find(|s| s.user_index == user) {
            Some(s) => s.paths.push(path),
            None => sets.push(PathSet { user_index: user, paths: vec![path] }),
        }
    }
    Ok(sets)
}
