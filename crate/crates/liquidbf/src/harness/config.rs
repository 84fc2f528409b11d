//! Experiment configuration: JSON file schema plus CLI-style overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::GDConfig;
use crate::channel::{ScenarioConfig, SystemConfig};
use crate::codebook::{build_lc_codebook, lc_defaults, Codebook, RadiationPattern};
use crate::error::{Error, Result};
use crate::lnn::TrainConfig;

/// Digital precoding method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lnn,
    Gru,
    Gd,
    Mrt,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lnn, Method::Gru, Method::Gd, Method::Mrt];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Lnn => "lnn",
            Method::Gru => "gru",
            Method::Gd => "gd",
            Method::Mrt => "mrt",
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, Method::Lnn | Method::Gru)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lnn" => Ok(Method::Lnn),
            "gru" => Ok(Method::Gru),
            "gd" => Ok(Method::Gd),
            "mrt" => Ok(Method::Mrt),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

/// Transmit element model used by the analog stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntennaKind {
    /// Liquid-crystal steered element codebook.
    Lc,
    /// TR 38.901 single element, fixed boresight.
    Gpp,
    /// Unit-gain element.
    Isotropic,
}

impl AntennaKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AntennaKind::Lc => "lc",
            AntennaKind::Gpp => "gpp",
            AntennaKind::Isotropic => "isotropic",
        }
    }
}

impl fmt::Display for AntennaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AntennaKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lc" => Ok(AntennaKind::Lc),
            "gpp" => Ok(AntennaKind::Gpp),
            "isotropic" | "iso" => Ok(AntennaKind::Isotropic),
            other => Err(Error::InvalidConfig(format!("unknown antenna kind '{other}'"))),
        }
    }
}

/// How the analog stage scores patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    /// Spectral efficiency of the full two-stage pipeline (default).
    PipelineSe,
    /// Squared Frobenius norm of the stacked estimated channel.
    FrobeniusGain,
}

/// Parameters of the steered-element codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodebookConfig {
    pub n_p: usize,
    pub steer_min_deg: f64,
    pub steer_max_deg: f64,
    pub peak_gain_db: f64,
    pub hpbw_deg: f64,
    pub floor_db: f64,
    pub selection: SelectionCriterion,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            n_p: lc_defaults::N_PATTERNS,
            steer_min_deg: lc_defaults::STEER_MIN_RAD.to_degrees(),
            steer_max_deg: lc_defaults::STEER_MAX_RAD.to_degrees(),
            peak_gain_db: lc_defaults::PEAK_GAIN_DB,
            hpbw_deg: lc_defaults::HPBW_RAD.to_degrees(),
            floor_db: lc_defaults::FLOOR_DB,
            selection: SelectionCriterion::PipelineSe,
        }
    }
}

impl CodebookConfig {
    pub fn build_lc(&self) -> Result<Codebook> {
        build_lc_codebook(
            self.n_p,
            self.steer_min_deg.to_radians(),
            self.steer_max_deg.to_radians(),
            self.peak_gain_db,
            self.hpbw_deg.to_radians(),
            self.floor_db,
        )
    }

    /// The codebook an antenna arm selects over: the steered set for the LC
    /// element, a single fixed pattern otherwise.
    pub fn build_for(&self, antenna: AntennaKind) -> Result<Codebook> {
        match antenna {
            AntennaKind::Lc => self.build_lc(),
            AntennaKind::Gpp => Ok(Codebook::single(RadiationPattern::tr38901_element())),
            AntennaKind::Isotropic => Ok(Codebook::single(RadiationPattern::isotropic())),
        }
    }
}

/// Training settings: the network/optimizer block plus the operating point
/// the loss is evaluated at (training-time estimation error and power).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub net: TrainConfig,
    #[serde(with = "db_scalar")]
    pub cee_db: f64,
    pub p_dbm: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { net: TrainConfig::default(), cee_db: -10.0, p_dbm: 30.0 }
    }
}

/// Everything one experiment run needs, serializable as JSON.
///
/// dB fields that may be −inf are serialized as the string `"-inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub scenario: ScenarioConfig,
    pub codebook: CodebookConfig,
    pub methods: Vec<Method>,
    pub antennas: Vec<AntennaKind>,
    /// Transmit power grid of the power sweep.
    pub p_grid_dbm: Vec<f64>,
    /// Estimation error grid of the robustness sweep.
    #[serde(with = "db_grid")]
    pub cee_grid_db: Vec<f64>,
    /// Fixed estimation error during the power sweep.
    #[serde(with = "db_scalar")]
    pub power_sweep_cee_db: f64,
    /// Fixed transmit power during the robustness sweep.
    pub cee_sweep_p_dbm: f64,
    /// Replicate seeds; channels are paired across methods per seed.
    pub seeds: Vec<u64>,
    pub train: TrainSettings,
    pub gd: GDConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            scenario: ScenarioConfig::default(),
            codebook: CodebookConfig::default(),
            methods: vec![Method::Lnn, Method::Gru, Method::Gd, Method::Mrt],
            antennas: vec![AntennaKind::Lc, AntennaKind::Gpp, AntennaKind::Isotropic],
            p_grid_dbm: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            cee_grid_db: vec![-20.0, -15.0, -10.0, -5.0, 0.0],
            power_sweep_cee_db: -10.0,
            cee_sweep_p_dbm: 30.0,
            seeds: (0..10).collect(),
            train: TrainSettings::default(),
            gd: GDConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.scenario.validate()?;
        self.train.net.validate()?;
        self.gd.validate()?;
        if self.methods.is_empty() || self.antennas.is_empty() {
            return Err(Error::InvalidConfig("methods and antennas must be non-empty".into()));
        }
        if self.p_grid_dbm.is_empty() || self.cee_grid_db.is_empty() {
            return Err(Error::InvalidConfig("sweep grids must be non-empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if (self.scenario.carrier_hz - self.system.f_c_hz).abs() > 1e-6 * self.system.f_c_hz {
            return Err(Error::InvalidConfig(
                "scenario carrier and system carrier must agree".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Applies CLI-style overrides on top of the file values.
    pub fn with_overrides(
        mut self,
        methods: Option<Vec<Method>>,
        antennas: Option<Vec<AntennaKind>>,
    ) -> Self {
        if let Some(m) = methods {
            self.methods = m;
        }
        if let Some(a) = antennas {
            self.antennas = a;
        }
        self
    }
}

/// Serialize/deserialize a dB scalar, representing −inf as `"-inf"`.
mod db_scalar {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        DbValue::deserialize(d).map(f64::from)
    }
}

/// Same as [`db_scalar`] for grids of dB values.
mod db_grid {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            if x.is_finite() {
                seq.serialize_element(x)?;
            } else if *x == f64::NEG_INFINITY {
                seq.serialize_element("-inf")?;
            } else {
                seq.serialize_element("inf")?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let vals = Vec::<DbValue>::deserialize(d)?;
        Ok(vals.into_iter().map(f64::from).collect())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DbValue {
    Num(f64),
    Text(String),
}

impl From<DbValue> for f64 {
    fn from(v: DbValue) -> f64 {
        match v {
            DbValue::Num(x) => x,
            DbValue::Text(t) => match t.trim() {
                "-inf" | "-Inf" | "-infinity" => f64::NEG_INFINITY,
                "inf" | "Inf" | "infinity" => f64::INFINITY,
                other => other.parse().unwrap_or(f64::NAN),
            },
        }
    }
}
