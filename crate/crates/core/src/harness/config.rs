use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::embedstore::TagScheme;
use crate::error::{ConfigError, Error, Result};
use crate::mixer::MixScheme;
use crate::neuralnet::DropoutSpec;
use crate::optim::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    ChunkF1,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "accuracy",
            Metric::ChunkF1 => "chunk_f1",
        })
    }
}

impl FromStr for Metric {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "chunk_f1" | "f1" => Ok(Metric::ChunkF1),
            other => Err(ConfigError::new("metric", format!("expected `accuracy` or `chunk_f1`, got `{other}`"))),
        }
    }
}

/// One experimental setup. Keys are flat so that a JSON config file and
/// `--key=value` overrides address the same fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Report label; defaults to the name of the data directory.
    pub dataset: Option<String>,
    /// Directory holding `{train,dev,test}.{mleb,conll}`; fills in any unset path.
    pub data_dir: Option<PathBuf>,
    pub train_embeddings: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub dev_embeddings: Option<PathBuf>,
    pub dev_labels: Option<PathBuf>,
    pub test_embeddings: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub tag_scheme: TagScheme,
    pub scheme: String,
    pub hidden_size: usize,
    pub dropout: f64,
    pub variational: bool,
    pub logit_penalty: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seeds: Vec<u64>,
    pub metric: Metric,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            dataset: None,
            data_dir: None,
            train_embeddings: None,
            train_labels: None,
            dev_embeddings: None,
            dev_labels: None,
            test_embeddings: None,
            test_labels: None,
            tag_scheme: TagScheme::Plain,
            scheme: "avg".into(),
            hidden_size: 100,
            dropout: 0.5,
            variational: true,
            logit_penalty: 0.0,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            clip_norm: None,
            batch_size: 32,
            max_epochs: 50,
            seeds: (1..=10).collect(),
            metric: Metric::Accuracy,
            jobs: 1,
        }
    }
}

/// Resolved locations of the six input files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub train: (PathBuf, PathBuf),
    pub dev: (PathBuf, PathBuf),
    pub test: (PathBuf, PathBuf),
}

impl ExperimentConfig {
    /// Reads a JSON config, applies `key=value` overrides on top, and validates.
    /// Override values are parsed as JSON when possible, else taken as strings.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut map = match path {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(map)) => map,
                    Ok(_) => return Err(ConfigError::new("config", "top level must be a JSON object").into()),
                    Err(source) => return Err(Error::Json { path: path.display().to_string(), source }),
                }
            }
            None => Map::new(),
        };
        for (key, raw) in overrides {
            let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            map.insert(key.clone(), value);
        }
        let config: ExperimentConfig = serde_json::from_value(Value::Object(map)).map_err(|e| ConfigError::new("config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mix_scheme()?;
        if self.hidden_size == 0 {
            return Err(ConfigError::new("hidden_size", "must be at least 1"));
        }
        self.dropout_spec()?;
        if !(self.logit_penalty >= 0.0 && self.logit_penalty.is_finite()) {
            return Err(ConfigError::new("logit_penalty", format!("must be non-negative, got {}", self.logit_penalty)));
        }
        self.adam().validate()?;
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(ConfigError::new("clip_norm", format!("must be positive, got {c}")));
            }
        }
        if self.batch_size == 0 {
            return Err(ConfigError::new("batch_size", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::new("seeds", "need at least one seed"));
        }
        if self.jobs == 0 {
            return Err(ConfigError::new("jobs", "must be at least 1"));
        }
        Ok(())
    }

    pub fn mix_scheme(&self) -> Result<MixScheme, ConfigError> {
        self.scheme.parse()
    }

    pub fn dropout_spec(&self) -> Result<DropoutSpec, ConfigError> {
        DropoutSpec::new(self.dropout, self.variational)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn with_scheme(&self, scheme: &MixScheme) -> Self {
        Self { scheme: scheme.to_string(), ..self.clone() }
    }

    pub fn dataset_name(&self) -> String {
        if let Some(name) = &self.dataset {
            return name.clone();
        }
        let from_dir = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned());
        self.data_dir
            .as_deref()
            .and_then(from_dir)
            .or_else(|| self.train_embeddings.as_deref().and_then(Path::parent).and_then(from_dir))
            .unwrap_or_else(|| "dataset".into())
    }

    pub fn data_paths(&self) -> Result<DataPaths, ConfigError> {
        let resolve = |explicit: &Option<PathBuf>, field: &str, file: &str| -> Result<PathBuf, ConfigError> {
            match (explicit, &self.data_dir) {
                (Some(p), _) => Ok(p.clone()),
                (None, Some(dir)) => Ok(dir.join(file)),
                (None, None) => Err(ConfigError::new(field, "not set (and no data_dir to derive it from)")),
            }
        };
        Ok(DataPaths {
            train: (
                resolve(&self.train_embeddings, "train_embeddings", "train.mleb")?,
                resolve(&self.train_labels, "train_labels", "train.conll")?,
            ),
            dev: (
                resolve(&self.dev_embeddings, "dev_embeddings", "dev.mleb")?,
                resolve(&self.dev_labels, "dev_labels", "dev.conll")?,
            ),
            test: (
                resolve(&self.test_embeddings, "test_embeddings", "test.mleb")?,
                resolve(&self.test_labels, "test_labels", "test.conll")?,
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.hidden_size, 100);
        assert_eq!(c.dropout, 0.5);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.max_epochs, 50);
        assert_eq!(c.seeds, (1..=10).collect::<Vec<_>>());
        assert_eq!(c.lr, 1e-3);
        assert_eq!(c.logit_penalty, 0.0);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn overrides_apply_after_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"hidden_size": 8, "scheme": "concat", "seeds": [3, 4]}"#).unwrap();
        let overrides = vec![("hidden_size".to_string(), "12".to_string()), ("scheme".to_string(), "wavg:0,1".to_string())];
        let c = ExperimentConfig::load(Some(&path), &overrides).unwrap();
        assert_eq!(c.hidden_size, 12);
        assert_eq!(c.scheme, "wavg:0,1");
        assert_eq!(c.seeds, [3, 4]);
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        let err = ExperimentConfig::load(None, &[("hiden_size".into(), "3".into())]).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        let err = ExperimentConfig::load(None, &[("dropout".into(), "1.0".into())]).unwrap_err();
        assert!(matches!(err, Error::Config(ConfigError { ref field, .. }) if field == "dropout"));
        let err = ExperimentConfig::load(None, &[("seeds".into(), "[]".into())]).unwrap_err();
        assert!(matches!(err, Error::Config(ConfigError { ref field, .. }) if field == "seeds"));
        let err = ExperimentConfig::load(None, &[("scheme".into(), "max".into())]).unwrap_err();
        assert!(matches!(err, Error::Config(ConfigError { ref field, .. }) if field == "scheme"));
    }

    #[test]
    fn paths_from_data_dir() {
        let c = ExperimentConfig { data_dir: Some("fx/synth".into()), ..Default::default() };
        let p = c.data_paths().unwrap();
        assert_eq!(p.dev.0, PathBuf::from("fx/synth/dev.mleb"));
        assert_eq!(p.test.1, PathBuf::from("fx/synth/test.conll"));
        assert_eq!(c.dataset_name(), "synth");
        assert!(ExperimentConfig::default().data_paths().is_err());
    }
}
