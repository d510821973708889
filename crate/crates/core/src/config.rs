//! Complete, serialisable run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocator::{FrequencyGrid, ProtectionPolicy};
use crate::error::ConfigError;
use crate::interference::InterferenceMode;
use crate::radio::RadioConfig;
use crate::scenario::ScenarioConfig;
use crate::simkernel::SirSampling;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub reselection_period_s: f64,
    /// Exhaustive-search candidates within this many dB of the optimum are
    /// treated as ties and resolved towards the fewest frequency changes.
    pub tie_tolerance_db: f64,
    /// Receptions and DTT samples before this time are not counted.
    pub warmup_s: f64,
    /// CAM interval on the control channel when white space is unused, s.
    pub cam_period_s: f64,
    /// Per-band interval when a platoon splits its traffic, s.
    pub split_period_s: f64,
    /// Two carrier-sensing stations that start within this window collide.
    pub co_located_window_s: f64,
    pub interference_mode: InterferenceMode,
    /// Draw log-normal shadowing on vehicle-to-DTT links with the REM sigma.
    pub dtt_shadowing: bool,
    pub sir_sampling: SirSampling,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            reselection_period_s: 1.0,
            tie_tolerance_db: 1.0,
            warmup_s: 5.0,
            cam_period_s: 0.1,
            split_period_s: 0.2,
            co_located_window_s: 13e-6,
            interference_mode: InterferenceMode::HiddenOnly,
            dtt_shadowing: true,
            sir_sampling: SirSampling::InterferenceRange,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub radio: RadioConfig,
    pub policy: ProtectionPolicy,
    pub grid: FrequencyGrid,
    pub kernel: KernelConfig,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        self.radio.validate().map_err(ConfigError::Invalid)?;
        self.policy.validate().map_err(ConfigError::Invalid)?;
        self.grid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let k = &self.kernel;
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !(k.reselection_period_s >= self.scenario.dt_s) {
            return bad("reselection period must be at least one mobility step");
        }
        if !(k.warmup_s >= 0.0 && k.warmup_s < self.scenario.duration_s) {
            return bad("warm-up must be non-negative and shorter than the run");
        }
        if !(k.cam_period_s > self.radio.airtime_s && k.split_period_s > self.radio.airtime_s) {
            return bad("message periods must exceed the air time");
        }
        if !(k.co_located_window_s >= 0.0 && k.co_located_window_s <= self.radio.airtime_s) {
            return bad("co-located window must lie in [0, airtime]");
        }
        if !(k.tie_tolerance_db >= 0.0) {
            return bad("tie tolerance must be non-negative");
        }
        if matches!(k.sir_sampling, SirSampling::Radius { m } if !(m > 0.0)) {
            return bad("SIR sampling radius must be positive");
        }
        Ok(())
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SimConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }
}
