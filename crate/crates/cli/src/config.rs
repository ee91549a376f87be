use std::path::Path;

use serde::{Deserialize, Serialize};
use tension_core::beamsearch::SearchParams;
use tension_core::music::{ChromaWeighting, WindowPolicy};
use tension_core::tension::{KeyScope, TensionConfig, TensionWeights};
use tension_core::tiv::{KeyProfile, MaxNormMode, WeightProfile};
use tension_core::tokens::TokenizerConfig;
use tension_core::voiceleading::{PitchSpace, VlVariant};

use crate::error::CliError;

/// Environment variable naming an external model process for `generate`.
pub const BRIDGE_ENV: &str = "TENSION_BRIDGE_CMD";
/// Optional whitespace-separated arguments for the bridge process.
pub const BRIDGE_ARGS_ENV: &str = "TENSION_BRIDGE_ARGS";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub search: SearchParams,
    pub tension: TensionSettings,
    pub tokenizer: TokenizerConfig,
    pub train: TrainSettings,
    pub bridge: BridgeSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TensionSettings {
    pub weights: TensionWeights<f64>,
    pub vl_variant: VlVariant,
    pub pitch_space: PitchSpace,
    pub window: WindowPolicy,
    pub chroma: ChromaWeighting,
    pub key_profile: KeyProfile,
    pub key_scope: KeyScope,
}

impl TensionSettings {
    pub fn from_config(c: &TensionConfig<f64>) -> Self {
        Self {
            weights: c.weights,
            vl_variant: c.vl_variant,
            pitch_space: c.pitch_space,
            window: c.window,
            chroma: c.chroma,
            key_profile: c.key_profile,
            key_scope: c.key_scope,
        }
    }

    pub fn to_config(&self) -> TensionConfig<f64> {
        TensionConfig {
            weights: self.weights,
            profile: WeightProfile::default(),
            vl_variant: self.vl_variant,
            pitch_space: self.pitch_space,
            window: self.window,
            chroma: self.chroma,
            max_norm: MaxNormMode::Analytic,
            key_profile: self.key_profile,
            key_scope: self.key_scope,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub order: usize,
    pub smoothing: f64,
    /// Minimum share of simultaneous-onset time for a track to count as a
    /// chord track.
    pub min_polyphony: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { order: 3, smoothing: 0.01, min_polyphony: tension_core::midi::DEFAULT_MIN_POLYPHONY }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BridgeSettings {
    pub command: Option<String>,
    pub args: Vec<String>,
    pub timeout_secs: f64,
}

impl Default for BridgeSettings {
    fn default() -> Self {
        Self { command: None, args: Vec::new(), timeout_secs: 30.0 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.search.validate().map_err(|e| CliError::input(e.to_string()))?;
        self.tension.weights.validate().map_err(|e| CliError::input(e.to_string()))?;
        let bad = |m: &str| Err(CliError::input(format!("config: {m}")));
        if self.train.order == 0 {
            return bad("train.order must be at least 1");
        }
        if !(self.train.smoothing > 0.0) || !self.train.smoothing.is_finite() {
            return bad("train.smoothing must be positive");
        }
        if !(0.0..=1.0).contains(&self.train.min_polyphony) {
            return bad("train.min_polyphony must lie in [0, 1]");
        }
        let t = &self.tokenizer;
        if t.velocity_bins < 2 || t.tempo_bins < 2 || t.density_bins < 2 || t.tension_bins < 2 {
            return bad("tokenizer bin counts must be at least 2");
        }
        if t.max_duration_units == 0 || t.grid.positions_per_quarter == 0 || !t.grid.ticks_per_quarter.is_multiple_of(t.grid.positions_per_quarter) {
            return bad("tokenizer grid must divide ticks_per_quarter and allow at least one duration unit");
        }
        if !(t.tempo_min_bpm > 0.0 && t.tempo_min_bpm < t.tempo_max_bpm) {
            return bad("tokenizer tempo range must be increasing and positive");
        }
        if !(self.bridge.timeout_secs > 0.0) || !self.bridge.timeout_secs.is_finite() {
            return bad("bridge.timeout_secs must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_merge_with_defaults() {
        let cfg = RunConfig::from_toml("[search]\nbeam_width = 4\nfinal_candidates = 2\n[tension.weights]\ndissonance = 10.0\n").unwrap();
        assert_eq!(cfg.search.beam_width, 4);
        assert_eq!(cfg.search.nucleus_p, 0.9);
        assert_eq!(cfg.tension.weights.dissonance, 10.0);
        assert_eq!(cfg.tension.weights.voice_leading, TensionWeights::<f64>::default().voice_leading);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[search]\nbeam = 4\n").is_err());
        assert!(RunConfig::from_toml("colour = 1\n").is_err());
        assert!(RunConfig::from_toml("[tension.weights]\nfoo = 1.0\n").is_err());
    }

    #[test]
    fn ranges_are_checked() {
        assert!(RunConfig::from_toml("[search]\nnucleus_p = 1.5\n").is_err());
        assert!(RunConfig::from_toml("[train]\norder = 0\n").is_err());
        assert!(RunConfig::from_toml("[tension.weights]\nprev = -1.0\n").is_err());
    }

    #[test]
    fn variants_parse_by_name() {
        let cfg = RunConfig::from_toml("[tension]\nvl_variant = \"printed\"\nwindow = \"half-bar\"\nkey_scope = { per-bars = 4 }\n[search]\ndiversity_mode = \"raw\"\n").unwrap();
        assert_eq!(cfg.tension.vl_variant, VlVariant::Printed);
        assert_eq!(cfg.tension.window, WindowPolicy::HalfBar);
        assert_eq!(cfg.tension.key_scope, KeyScope::PerBars(4));
    }
}
