//! Pipeline configuration file (TOML or JSON). Every section is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use slowfast_core::packing::{CostModel, MixtureFractions, SHORT_CONTEXT};
use slowfast_core::position::RopeConfig;
use slowfast_core::{GeometryConfig, SimilarityConfig, SpecialTokens};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RopeSection {
    pub head_dim: usize,
    pub inv_freq_base: f64,
    /// Rotary pairs per axis `(t, h, w)`.
    pub axis_split: Vec<usize>,
    /// Seconds per temporal index step.
    pub temporal_unit_s: f64,
}

impl Default for RopeSection {
    fn default() -> Self {
        let rope = RopeConfig::default();
        Self {
            head_dim: rope.head_dim,
            inv_freq_base: rope.inv_freq_base,
            axis_split: rope.axis_split,
            temporal_unit_s: 1.0,
        }
    }
}

impl RopeSection {
    pub fn rope_config(&self) -> RopeConfig {
        RopeConfig {
            head_dim: self.head_dim,
            inv_freq_base: self.inv_freq_base,
            axis_split: self.axis_split.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PackingSection {
    pub capacity: usize,
    pub n_workers: usize,
    pub mixture: MixtureFractions,
    pub cost: CostModel,
}

impl Default for PackingSection {
    fn default() -> Self {
        Self {
            capacity: SHORT_CONTEXT,
            n_workers: 8,
            mixture: MixtureFractions::default(),
            cost: CostModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub geometry: GeometryConfig,
    pub similarity: SimilarityConfig,
    pub rope: RopeSection,
    pub packing: PackingSection,
    pub special_tokens: SpecialTokens,
}

impl PipelineConfig {
    /// Load from `path`; `.json` files are parsed as JSON, anything else as TOML.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.geometry.validate()?;
        self.similarity.validate()?;
        self.rope.rope_config().validate()?;
        if !(self.rope.temporal_unit_s.is_finite() && self.rope.temporal_unit_s > 0.0) {
            return Err(CliError::Input(format!(
                "rope.temporal_unit_s must be positive, got {}",
                self.rope.temporal_unit_s
            )));
        }
        if self.rope.axis_split.len() != 3 {
            return Err(CliError::Input(format!(
                "rope.axis_split needs 3 parts (t, h, w), got {}",
                self.rope.axis_split.len()
            )));
        }
        self.packing.mixture.validate()?;
        if self.packing.capacity == 0 || self.packing.n_workers == 0 {
            return Err(CliError::Input("packing.capacity and packing.n_workers must be at least 1".into()));
        }
        let cost = self.packing.cost;
        if [cost.vision_weight, cost.text_weight].iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CliError::Input("packing.cost weights must be non-negative".into()));
        }
        if self.special_tokens.slow.is_empty()
            || self.special_tokens.fast.is_empty()
            || self.special_tokens.slow == self.special_tokens.fast
        {
            return Err(CliError::Input("special token names must be non-empty and distinct".into()));
        }
        Ok(())
    }
}
