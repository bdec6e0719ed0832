//! One JSON document holding every run setting. Command-line flags
//! override the matching fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{PlantedAirTemp, ValidationConfig};
use crate::geo::CrosstrackConfig;
use crate::recon::PipelineConfig;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub stack: Option<PathBuf>,
    pub era5: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub atc: Option<PathBuf>,
    pub gp_dir: Option<PathBuf>,
    pub recon: Option<PathBuf>,
    pub stations: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StationSynth {
    pub n_stations: usize,
    pub planted: PlantedAirTemp,
}

impl Default for StationSynth {
    fn default() -> Self {
        StationSynth {
            n_stations: 7,
            planted: PlantedAirTemp::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub log_level: String,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub stations: StationSynth,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub validation: ValidationConfig,
    pub crosstrack: CrosstrackConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            workers: None,
            log_level: "info".into(),
            paths: Paths::default(),
            synth: SynthConfig::default(),
            stations: StationSynth::default(),
            pipeline: PipelineConfig::default(),
            validation: ValidationConfig::default(),
            crosstrack: CrosstrackConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.pipeline.fit.validate()?;
        self.pipeline.gp.validate()?;
        self.crosstrack.validate()?;
        let level = self.pipeline.recon.level;
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Config(format!("interval level {level} outside (0, 1)")));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        Ok(())
    }

    /// The seed, which every stochastic command requires.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (set `seed` in the config or pass --seed)".into()))
    }

    /// SHA-256 of the compact JSON form. Worker count and log level do not
    /// affect results and are left out.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.workers = None;
        c.log_level = String::new();
        let bytes = serde_json::to_vec(&c)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}
