//! TOML run configuration.
//!
//! ```toml
//! seed = 0
//!
//! [model]
//! family = "dfformer"   # dfformer | cdfformer | gfformer | convformer | attnformer
//! size = "nano"         # nano | s18 | s36 | m36 | b36
//! input = 32
//! classes = 4
//!
//! [[stages]]            # optional per-stage overrides, in stage order
//! depth = 1
//! width = 16
//! mixer = "df"
//!
//! [train]
//! lr = 1e-3
//! epochs = 30
//!
//! [data]
//! kind = "synthetic"
//! ```
//!
//! Unknown keys are rejected; parse errors carry the line, column and key.

use std::path::{Path, PathBuf};

use dfformer_core::model::{Family, MixerKind, ModelConfig, Size};
use dfformer_core::Real;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub stages: Vec<StageSection>,
    pub train: TrainConfig,
    pub data: DataSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub family: String,
    pub size: String,
    pub input: Option<usize>,
    pub classes: Option<usize>,
    pub num_filters: Option<usize>,
    pub drop_path: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            family: "dfformer".into(),
            size: "nano".into(),
            input: None,
            classes: None,
            num_filters: None,
            drop_path: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub mixer: Option<String>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Cosine,
    Constant,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub warmup_epochs: f64,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub min_lr: f64,
    pub warmup_lr: f64,
    pub label_smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            warmup_epochs: 2.0,
            batch_size: 64,
            schedule: Schedule::Cosine,
            min_lr: 1e-6,
            warmup_lr: 1e-6,
            label_smoothing: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Synthetic,
    Idx,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub kind: DataKind,
    pub grid: usize,
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub noise: f64,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            kind: DataKind::Synthetic,
            grid: 32,
            classes: 4,
            train_per_class: 512,
            test_per_class: 64,
            noise: 0.3,
            images: None,
            labels: None,
            test_images: None,
            test_labels: None,
        }
    }
}

pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text)
        .map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string().trim_end().to_string() })
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text, &path.display().to_string())
}

impl RunConfig {
    /// Resolves the model section and stage overrides into a backbone
    /// configuration.
    pub fn model_config(&self) -> Result<ModelConfig, ConfigError> {
        let bad = |e: dfformer_core::Error| ConfigError::Invalid(e.to_string());
        let family: Family = self.model.family.parse().map_err(bad)?;
        let size: Size = self.model.size.parse().map_err(bad)?;
        let mut cfg = ModelConfig::preset(family, size);
        if let Some(r) = self.model.input {
            cfg.input = (r, r);
        }
        cfg.num_classes = self.model.classes.unwrap_or(match self.data.kind {
            DataKind::Synthetic if size == Size::Nano => self.data.classes,
            _ => cfg.num_classes,
        });
        if let Some(n) = self.model.num_filters {
            cfg.num_filters = n;
        }
        cfg.drop_path = self.model.drop_path as Real;
        if self.stages.len() > 4 {
            return Err(ConfigError::Invalid(format!("{} stages given, at most 4 allowed", self.stages.len())));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if let Some(d) = s.depth {
                cfg.stages[i].depth = d;
            }
            if let Some(w) = s.width {
                cfg.stages[i].width = w;
            }
            if let Some(m) = &s.mixer {
                let m: MixerKind = m.parse().map_err(bad)?;
                if m != cfg.stages[i].mixer {
                    cfg.family = None;
                }
                cfg.stages[i].mixer = m;
            }
        }
        cfg.validate().map_err(bad)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_desk_schedule() {
        let cfg = parse_config("", "inline").unwrap();
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.epochs, 30);
        assert_eq!(cfg.train.lr, 1e-3);
        assert_eq!(cfg.train.warmup_epochs, 2.0);
        assert_eq!(cfg.train.label_smoothing, 0.0);
        assert_eq!(cfg.model_config().unwrap().num_classes, 4);
    }

    #[test]
    fn unknown_keys_report_line_and_key() {
        let err = parse_config("seed = 1\n[train]\nlr = 0.1\nlearning_rate = 2\n", "run.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("learning_rate"), "{msg}");
    }

    #[test]
    fn stage_overrides_apply() {
        let cfg = parse_config("[[stages]]\nwidth = 24\n[[stages]]\nmixer = \"gf\"\n", "x").unwrap();
        let m = cfg.model_config().unwrap();
        assert_eq!(m.stages[0].width, 24);
        assert_eq!(m.stages[1].mixer, MixerKind::GlobalFilter);
        assert_eq!(m.family, None);
    }
}
