//! `hrgap.toml` run configuration. Every section is optional; missing
//! sections and keys take the values printed by `config print-defaults`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use hrgap_core::evaluate::CvConfig;
use hrgap_core::features::{FeatureOptions, TargetKind};
use hrgap_core::models::{ModelKind, ModelSpec};
use hrgap_core::synthgen::{GapPattern, SynthConfig};
use hrgap_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub features: FeatureOptions,
    pub cv: CvConfig,
    pub train: TrainConfig,
    pub simulate: SynthConfig,
    pub gaps: GapConfig,
    /// Model suite for `evaluate`; `train` and `importance` pick the entry
    /// of the kind they need.
    pub models: Vec<ModelSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            features: FeatureOptions::default(),
            cv: CvConfig::default(),
            train: TrainConfig::default(),
            simulate: SynthConfig::default(),
            gaps: GapConfig::default(),
            models: ModelSpec::default_suite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub target: TargetKind,
    /// Seeded row subsample across all participants; `0` keeps every row.
    pub max_rows: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Forest,
            target: TargetKind::Bpm,
            max_rows: 20_000,
        }
    }
}

/// Heart-rate gaps injected by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapConfig {
    /// `dropout:P`, `nightly:START_HOUR:HOURS` or `battery:DAY`.
    pub patterns: Vec<String>,
    pub seed: u64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            patterns: Vec::new(),
            seed: 7,
        }
    }
}

impl GapConfig {
    pub fn parsed(&self) -> hrgap_core::Result<Vec<GapPattern>> {
        self.patterns.iter().map(|p| p.parse()).collect()
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))
            .context("reading config")?;
        toml::from_str(&text).map_err(|e| {
            anyhow::Error::new(Error::InvalidParameter(format!("{}: {e}", path.display())))
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Overrides every seed in the configuration.
    pub fn set_seed(&mut self, seed: u64) {
        self.cv.seed = seed;
        self.simulate.seed = seed;
        self.gaps.seed = seed;
        for m in &mut self.models {
            m.seed = seed;
        }
    }

    /// The configured spec of `kind`, or its defaults.
    pub fn spec(&self, kind: ModelKind) -> ModelSpec {
        self.models
            .iter()
            .find(|m| m.kind == kind)
            .copied()
            .unwrap_or_else(|| ModelSpec {
                seed: self.cv.seed,
                ..ModelSpec::new(kind)
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[cv]\nfoldz = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1\n").is_err());
        let cfg: RunConfig = toml::from_str("[cv]\nfolds = 3\n").unwrap();
        assert_eq!(cfg.cv.folds, 3);
        assert_eq!(cfg.cv.seed, CvConfig::default().seed);
    }
}
