use std::path::{Path, PathBuf};

use dragonfly_core::pipeline::PipelineConfig;
use dragonfly_core::scenario::Scenario;
use dragonfly_core::{Error, RadarConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadarPreset {
    Default,
    SlowTime,
}

/// On-disk experiment description consumed by every scenario-driven subcommand.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Named radar; ignored when `radar` is given.
    #[serde(default)]
    pub radar_preset: Option<RadarPreset>,
    #[serde(default)]
    pub radar: Option<RadarConfig>,
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    /// Chirps to synthesize; defaults to every chirp that starts within the duration.
    #[serde(default)]
    pub n_chirps: Option<u64>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sf: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::InvalidScenario(format!("at '{path}': {}", e.into_inner()))
        })?;
        sf.scenario.validate(&sf.radar_config())?;
        Ok(sf)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn radar_config(&self) -> RadarConfig {
        match (&self.radar, self.radar_preset) {
            (Some(r), _) => r.clone(),
            (None, Some(RadarPreset::SlowTime)) => RadarConfig::slow_time_radar(),
            (None, _) => RadarConfig::default_radar(),
        }
    }

    pub fn chirp_count(&self) -> u64 {
        let cfg = self.radar_config();
        self.n_chirps.unwrap_or_else(|| {
            (self.scenario.duration_s / cfg.tx_period + 1e-9).floor() as u64 + 1
        })
    }
}
