//! Strict run configuration: one JSON document drives every pipeline
//! stage. Unknown keys are rejected everywhere so a typo cannot silently
//! fall back to a default.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attack::AttackConfig;
use crate::error::{Error, Result};
use crate::svdnet::TrainConfig;

fn default_epsilon() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    40
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-3
}
fn default_on() -> f64 {
    10.0
}
fn default_off() -> f64 {
    0.1
}
fn default_cutoff() -> f64 {
    4.0
}
fn default_weights() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}
fn default_step() -> f64 {
    0.25
}
fn default_budget() -> f64 {
    20.0
}
fn default_fd_eps() -> f64 {
    1e-3
}
fn default_clip_max() -> f64 {
    1.0
}
fn default_attack_samples() -> usize {
    100
}
fn default_class_b() -> usize {
    1
}
fn default_interp_steps() -> usize {
    8
}
fn default_noise_scale() -> f64 {
    0.5
}
fn default_null_samples() -> usize {
    3
}
fn default_ratios() -> Vec<f64> {
    vec![1.0, 0.3, 0.1, 0.03]
}

/// Synthetic blob source. The run seed drives generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobsSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
}

/// Paired image/label archive source.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSpec {
    pub images: PathBuf,
    pub labels: PathBuf,
}

/// Exactly one source must be given.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blobs: Option<BlobsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idx: Option<IdxSpec>,
}

/// How the factorization is built: the gain-sampling prefix, the held-out
/// block after it, and the slack parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionSpec {
    /// Prefix length used to sample gains; defaults to half the dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub construction_points: Option<usize>,
    /// Held-out block length right after the prefix; defaults to the rest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_points: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for ConstructionSpec {
    fn default() -> Self {
        ConstructionSpec { construction_points: None, holdout_points: None, epsilon: 0.1 }
    }
}

/// Network architecture and optimization settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Latent width; defaults to input dimension + class count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encode_dim: Option<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_on")]
    pub on_value: f64,
    #[serde(default = "default_off")]
    pub off_value: f64,
    #[serde(default = "default_cutoff")]
    pub sv_cutoff: f64,
    #[serde(default = "default_weights")]
    pub loss_weights: [f64; 3],
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            hidden: Vec::new(),
            encode_dim: None,
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            on_value: default_on(),
            off_value: default_off(),
            sv_cutoff: default_cutoff(),
            loss_weights: default_weights(),
        }
    }
}

impl TrainSpec {
    /// The optimizer-facing view, with the run seed filled in.
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            on_value: self.on_value,
            off_value: self.off_value,
            sv_cutoff: self.sv_cutoff,
            loss_weights: self.loss_weights,
            seed,
        }
    }
}

/// Directional-search attack settings plus how many held-out samples to
/// attack.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_fd_eps")]
    pub fd_eps: f64,
    #[serde(default)]
    pub clip_min: f64,
    #[serde(default = "default_clip_max")]
    pub clip_max: f64,
    #[serde(default)]
    pub central_diff: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_override: Option<usize>,
    #[serde(default = "default_attack_samples")]
    pub samples: usize,
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            step: default_step(),
            budget: default_budget(),
            fd_eps: default_fd_eps(),
            clip_min: 0.0,
            clip_max: default_clip_max(),
            central_diff: false,
            target_override: None,
            samples: default_attack_samples(),
        }
    }
}

impl AttackSpec {
    pub fn to_attack_config(&self) -> AttackConfig {
        AttackConfig {
            step: self.step,
            budget: self.budget,
            fd_eps: self.fd_eps,
            clip_min: self.clip_min,
            clip_max: self.clip_max,
            central_diff: self.central_diff,
            target_override: self.target_override,
        }
    }
}

/// Latent traversal rendering: logit interpolation between two classes and
/// null-space variations of the first.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraverseSpec {
    #[serde(default)]
    pub class_a: usize,
    #[serde(default = "default_class_b")]
    pub class_b: usize,
    #[serde(default = "default_interp_steps")]
    pub steps: usize,
    #[serde(default = "default_on")]
    pub target_value: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default = "default_null_samples")]
    pub null_samples: usize,
    /// Render decoded vectors as rows × (d_in / rows) images; defaults to a
    /// single row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_rows: Option<usize>,
}

impl Default for TraverseSpec {
    fn default() -> Self {
        TraverseSpec {
            class_a: 0,
            class_b: default_class_b(),
            steps: default_interp_steps(),
            target_value: default_on(),
            noise_scale: default_noise_scale(),
            null_samples: default_null_samples(),
            image_rows: None,
        }
    }
}

/// Class-imbalance sweep: retrain at each undersampling ratio and report
/// the head spectrum against a balanced holdout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSpec {
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default)]
    pub target_class: usize,
}

impl Default for BiasSpec {
    fn default() -> Self {
        BiasSpec { ratios: default_ratios(), target_class: 0 }
    }
}

/// The whole run. Every stage reads its own block; the seed threads
/// through data generation, initialization, and sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub construction: ConstructionSpec,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default)]
    pub traverse: TraverseSpec,
    #[serde(default)]
    pub bias: BiasSpec,
}

impl RunConfig {
    /// Parses and validates; unknown keys anywhere are an error.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset.blobs, &self.dataset.idx) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(Error::InvalidConfig(
                    "dataset must name exactly one source (blobs or idx)".into(),
                ));
            }
        }
        if let Some(b) = &self.dataset.blobs {
            if b.classes < 2 || b.per_class == 0 || b.dim == 0 {
                return Err(Error::InvalidConfig("blob geometry must be positive".into()));
            }
            if !(b.separation > 0.0 && b.separation <= 1.0) {
                return Err(Error::InvalidConfig("blob separation must be in (0, 1]".into()));
            }
        }
        if !(self.construction.epsilon > 0.0 && self.construction.epsilon < 1.0) {
            return Err(Error::InvalidSlack { epsilon: self.construction.epsilon });
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(Error::InvalidConfig("training needs positive epochs and batch".into()));
        }
        if !(self.train.learning_rate.is_finite() && self.train.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.train.loss_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("loss weights must be nonnegative".into()));
        }
        if self.train.encode_dim == Some(0) || self.train.hidden.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        self.attack.to_attack_config().validate()?;
        if self.attack.samples == 0 {
            return Err(Error::InvalidConfig("attack needs at least one sample".into()));
        }
        if self.traverse.steps < 2 {
            return Err(Error::InvalidConfig("traversal needs at least two steps".into()));
        }
        if self.traverse.class_a == self.traverse.class_b {
            return Err(Error::InvalidConfig("traversal endpoints must differ".into()));
        }
        if !(self.traverse.noise_scale >= 0.0 && self.traverse.noise_scale.is_finite()) {
            return Err(Error::InvalidConfig("noise scale must be finite and nonnegative".into()));
        }
        if self.traverse.image_rows == Some(0) {
            return Err(Error::InvalidConfig("image rows must be positive".into()));
        }
        if self.bias.ratios.is_empty() {
            return Err(Error::InvalidConfig("bias sweep needs at least one ratio".into()));
        }
        if self.bias.ratios.iter().any(|r| !(r > &0.0 && r <= &1.0)) {
            return Err(Error::InvalidConfig("bias ratios must be in (0, 1]".into()));
        }
        Ok(())
    }
}
