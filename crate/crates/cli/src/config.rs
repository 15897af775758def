use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use facetouch::dataset::{SessionPlan, SynthConfig};
use facetouch::ensemble::DEFAULT_REFRACTORY;
use facetouch::signal::DEFAULT_STRIDE;
use facetouch::{FrameSchedule, TemporalEnsemble};

/// Settings read from `--config`; every field is optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Detector refractory period, in s.
    pub refractory: f64,
    /// Offset between consecutive candidate frames, in s.
    pub stride: f64,
    pub synth: SynthConfig,
    pub session: SessionPlan,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            refractory: DEFAULT_REFRACTORY,
            stride: DEFAULT_STRIDE,
            synth: SynthConfig::default(),
            session: SessionPlan::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Frames as long as the ensemble's last instant, at its sample rate.
    pub fn frames(&self, ensemble: &TemporalEnsemble) -> Result<FrameSchedule> {
        Ok(FrameSchedule::new(
            ensemble.window_len().secs(),
            self.stride,
            ensemble.rate,
        )?)
    }
}
