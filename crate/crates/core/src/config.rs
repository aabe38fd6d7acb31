//! JSON run configurations consumed by the CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::CombinationRule;
use crate::error::{Error, Result};
use crate::gaussian::PriorMode;
use crate::pipeline::{FeatureSource, FitEvalConfig};

fn default_window() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_shrinkage() -> f64 {
    0.2
}

fn default_k_folds() -> usize {
    5
}

fn default_max_members() -> usize {
    20
}

fn default_priors() -> PriorMode {
    PriorMode::Empirical
}

fn default_target_fs() -> f64 {
    1000.0
}

fn default_line_hz() -> f64 {
    60.0
}

fn default_max_harmonic() -> f64 {
    200.0
}

/// Configuration for `fit-eval`: dataset path plus every pipeline knob.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_window")]
    pub window_s: f64,
    #[serde(default = "default_true")]
    pub use_erp: bool,
    #[serde(default = "default_true")]
    pub use_hgp: bool,
    #[serde(default)]
    pub feature_source: FeatureSource,
    #[serde(default = "default_shrinkage")]
    pub shrinkage: f64,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rule: CombinationRule,
    #[serde(default = "default_max_members")]
    pub max_members: usize,
    #[serde(default = "default_priors")]
    pub priors: PriorMode,
    /// Compute the per-horizon accuracy curve (slow; on by default).
    #[serde(default = "default_true")]
    pub time_curve: bool,
    /// Also dump extracted features as features.csv.
    #[serde(default)]
    pub dump_features: bool,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, format!("config parse failed: {e}")))?;
        Ok(cfg)
    }

    pub fn pipeline_config(&self) -> FitEvalConfig {
        FitEvalConfig {
            window_s: self.window_s,
            use_erp: self.use_erp,
            use_hgp: self.use_hgp,
            feature_source: self.feature_source,
            shrinkage: self.shrinkage,
            k_folds: self.k_folds,
            seed: self.seed,
            rule: self.rule,
            max_members: self.max_members,
            priors: self.priors,
            time_curve: self.time_curve,
        }
    }
}

/// Configuration for `preprocess`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub dataset: PathBuf,
    /// Output sampling rate; decimation is skipped when it already matches.
    #[serde(default = "default_target_fs")]
    pub target_fs: f64,
    #[serde(default = "default_line_hz")]
    pub line_hz: f64,
    #[serde(default = "default_max_harmonic")]
    pub max_harmonic_hz: f64,
    /// (anode, cathode) channel index pairs for bipolar re-referencing.
    pub bipolar_pairs: Vec<(usize, usize)>,
}

impl PreprocessConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PreprocessConfig = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, format!("config parse failed: {e}")))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_defaults_fill_in() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{ "dataset": "data/manifest.json" }"#).unwrap();
        assert_eq!(cfg.window_s, 1.0);
        assert!(cfg.use_erp && cfg.use_hgp);
        assert_eq!(cfg.k_folds, 5);
        assert_eq!(cfg.shrinkage, 0.2);
        assert_eq!(cfg.rule, CombinationRule::Likelihood);
        assert_eq!(cfg.feature_source, FeatureSource::Dsp);
        assert_eq!(cfg.max_members, 20);
        assert!(cfg.time_curve);
        assert!(!cfg.dump_features);
    }

    #[test]
    fn run_config_parses_overrides() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{
                "dataset": "d/manifest.json",
                "feature_source": "direct",
                "rule": "voting",
                "priors": "uniform",
                "seed": 99,
                "k_folds": 3,
                "time_curve": false
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.feature_source, FeatureSource::Direct);
        assert_eq!(cfg.rule, CombinationRule::Voting);
        assert_eq!(cfg.priors, PriorMode::Uniform);
        assert_eq!(cfg.seed, 99);
        assert!(!cfg.time_curve);
    }
}
