//! Training configuration, stored as flat TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compgcn::Composition;
use crate::data::Hops;
use crate::error::{Error, Result};
use crate::fusion::FusionMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the entailment-cone loss.
    pub alpha1: f64,
    /// Weight of the contrastive loss.
    pub alpha2: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Embedding dimension.
    pub dim: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// CompGCN depth of both ontology encoders.
    pub layers: usize,
    /// Neighbourhood radius of the local encoder.
    pub hops: Hops,
    /// Entailment-cone aperture constant.
    pub k: f64,
    /// History window length.
    pub history: usize,
    pub op: Composition,
    /// Decoder convolution channels.
    pub channels: usize,
    /// Decoder kernel width (odd).
    pub width: usize,
    pub fusion: FusionMode,
    /// Replace ontology-initialized entity embeddings with a learnable table
    /// and drop the ontology encoder altogether.
    pub no_global_init: bool,
    /// Disable the local encoder and the contrastive loss.
    pub no_local_encoder: bool,
    /// Initialize entities from a learnable table while still training the
    /// ontology encoder through the entailment loss.
    pub random_init: bool,
    /// Fraction of the training timestamps used, taken from the start.
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha1: 0.1,
            alpha2: 0.1,
            tau: 0.07,
            dim: 32,
            epochs: 30,
            seed: 42,
            lr: 1e-3,
            grad_clip: 1.0,
            layers: 2,
            hops: Hops::Finite(2),
            k: 0.1,
            history: 3,
            op: Composition::Sub,
            channels: 16,
            width: 3,
            fusion: FusionMode::Gated,
            no_global_init: false,
            no_local_encoder: false,
            random_init: false,
            train_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha1 >= 0.0 && self.alpha1.is_finite() && self.alpha2 >= 0.0 && self.alpha2.is_finite()) {
            return bad(format!(
                "loss weights must be finite and non-negative ({}, {})",
                self.alpha1, self.alpha2
            ));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad(format!("k must be positive, got {}", self.k));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be non-negative, got {}", self.lr));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return bad(format!("grad_clip must be non-negative, got {}", self.grad_clip));
        }
        if self.dim == 0 || self.channels == 0 {
            return bad("dim and channels must be positive".into());
        }
        if self.width.is_multiple_of(2) {
            return bad(format!("width must be odd, got {}", self.width));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!(
                "train_fraction must lie in (0, 1], got {}",
                self.train_fraction
            ));
        }
        Ok(())
    }

    /// Whether the ontology CompGCN runs at all.
    pub fn uses_global_encoder(&self) -> bool {
        !self.no_global_init
    }

    /// Whether entity embeddings come from a plain learnable table.
    pub fn uses_entity_table(&self) -> bool {
        self.no_global_init || self.random_init
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = TrainConfig::default();
        assert_eq!(TrainConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        assert_eq!(
            (cfg.alpha1, cfg.alpha2, cfg.tau, cfg.epochs, cfg.seed),
            (0.1, 0.1, 0.07, 30, 42)
        );
    }

    #[test]
    fn partial_and_special_values() {
        let cfg = TrainConfig::from_toml_str("dim = 16\nhops = \"max\"\nop = \"corr\"\nfusion = \"sum\"").unwrap();
        assert_eq!(cfg.dim, 16);
        assert_eq!(cfg.hops, Hops::Max);
        assert_eq!(cfg.op, Composition::Corr);
        assert_eq!(cfg.fusion, FusionMode::Sum);
        assert_eq!(cfg.epochs, 30);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(TrainConfig::from_toml_str("dims = 3"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::from_toml_str("tau = 0.0"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::from_toml_str("width = 4"), Err(Error::Config(_))));
        assert!(matches!(
            TrainConfig::from_toml_str("alpha1 = -1.0"),
            Err(Error::Config(_))
        ));
    }
}
