//! Pipeline configuration, a single JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fingertip::DetectorConfig;
use crate::hands::ClusterConfig;
use crate::tracking::TrackingConfig;

/// The committed defaults.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../config/default-config.json");

/// Environment variable naming a config file to use when none is given.
pub const CONFIG_ENV: &str = "TOUCHPIPE_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub width: usize,
    pub height: usize,
}

/// Optional calibration files. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub map: Option<PathBuf>,
    pub illumination_min: Option<PathBuf>,
    pub illumination_max: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiConfig {
    /// Pixels at or above this normalized intensity are foreground.
    pub threshold: u8,
    pub min_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MserConfig {
    pub delta: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuioConfig {
    pub host: String,
    pub port: u16,
    /// Camera frame rate, used for velocities and optional pacing.
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub frame: FrameConfig,
    pub calibration: CalibrationConfig,
    pub roi: RoiConfig,
    pub mser: MserConfig,
    pub detector: DetectorConfig,
    pub hands: ClusterConfig,
    pub tracking: TrackingConfig,
    pub tuio: TuioConfig,
    /// Worker threads; 0 uses one per available core.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG_JSON).expect("committed default config parses")
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates `path`, resolving calibration paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.calibration.map,
            &mut cfg.calibration.illumination_min,
            &mut cfg.calibration.illumination_max,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// `path` if given, else the file named by `TOUCHPIPE_CONFIG`, else the
    /// defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) => Self::load(Path::new(&p)),
                None => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.frame.width < 2 || self.frame.height < 2 {
            return invalid("frame must be at least 2x2".into());
        }
        if self.mser.delta == 0 {
            return invalid("mser.delta must be positive".into());
        }
        if !(self.tuio.fps.is_finite() && self.tuio.fps > 0.0) {
            return invalid("tuio.fps must be positive".into());
        }
        let c = &self.calibration;
        if c.illumination_min.is_some() != c.illumination_max.is_some() {
            return invalid("illumination_min and illumination_max go together".into());
        }
        self.detector.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.hands.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.tracking.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
